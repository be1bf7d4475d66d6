import numpy as np
import pytest

from routemodes import (
    ERROR,
    OTHER,
    UNKNOWN,
    SimilarityMatrix,
    Snapshot,
    WeightVector,
    parse_label,
    site,
)
from routemodes.core import align_pair, align_series, check_time_ordered


class TestLabels:
    def test_site_names_compare_case_insensitively_after_trimming(self):
        assert site(" LAX ") == site("lax")
        assert hash(site(" LAX ")) == hash(site("lax"))
        assert site("LAX") != site("MIA")

    def test_normalization_is_idempotent(self):
        once = site("  CmH ")
        again = site(once.name)
        assert once == again
        assert once.name == again.name

    def test_reserved_words_rejected_as_site_names(self):
        for word in ("unknown", "Error", "OTHER", " unknown "):
            with pytest.raises(ValueError):
                site(word)

    def test_reserved_labels_distinct_from_sites_and_each_other(self):
        labels = {UNKNOWN, ERROR, OTHER, site("LAX")}
        assert len(labels) == 4

    def test_parse_label_maps_reserved_words(self):
        assert parse_label("Unknown") is UNKNOWN
        assert parse_label("error") is ERROR
        assert parse_label("other") is OTHER
        assert parse_label("lax") == site("LAX")

    def test_equality_is_equivalence_relation(self):
        a, b, c = site("lax"), site("LAX"), site(" Lax ")
        assert a == a
        assert (a == b) and (b == a)
        assert (a == b) and (b == c) and (a == c)

    def test_empty_site_name_rejected(self):
        with pytest.raises(ValueError):
            site("   ")

    def test_str_forms_match_file_words(self):
        assert str(UNKNOWN) == "unknown"
        assert str(ERROR) == "error"
        assert str(OTHER) == "other"
        assert str(site("LAX")) == "LAX"


class TestSnapshot:
    def test_absent_network_reads_as_unknown(self):
        snap = Snapshot(5, {"n1": site("LAX")})
        assert snap.label_of("n2") is UNKNOWN
        assert "n2" not in snap

    def test_entries_round_trip(self):
        entries = {"n1": site("LAX"), "n2": UNKNOWN, "n3": ERROR}
        snap = Snapshot(7, entries)
        assert snap.entries == entries
        assert len(snap) == 3

    def test_immutable(self):
        snap = Snapshot(1, {"n1": site("A")})
        with pytest.raises(AttributeError):
            snap.time = 2
        with pytest.raises(ValueError):
            snap.codes[0] = 0

    def test_equality_semantics(self):
        a = Snapshot(1, {"n1": site("A"), "n2": site("B")})
        b = Snapshot(1, {"n2": site("b"), "n1": site("a")})
        assert a == b
        assert a != Snapshot(2, {"n1": site("A"), "n2": site("B")})
        assert a != Snapshot(1, {"n1": site("A")})

    def test_one_hot_view_sums_to_weighted_aggregate(self):
        # Summing the implicit one-hot rows must reproduce the aggregate.
        from routemodes import aggregate

        rng = np.random.default_rng(7)
        sites = [site(f"S{i}") for i in range(4)]
        entries = {f"n{i}": sites[int(rng.integers(4))] for i in range(50)}
        entries["n3"] = UNKNOWN
        weights = WeightVector({f"n{i}": float(rng.integers(1, 5)) for i in range(50)})
        snap = Snapshot(9, entries)

        vector = aggregate(snap, weights)
        for label in list(sites) + [UNKNOWN]:
            expected = sum(
                weights.get(key) for key, lab in entries.items() if lab == label
            )
            assert vector.get(label) == expected
        assert vector.total() == sum(weights.get(f"n{i}") for i in range(50))

    def test_from_parts_validates(self):
        keys = np.array(["a", "b"])
        with pytest.raises(ValueError):
            Snapshot.from_parts(1, keys, np.array([0, 9], dtype=np.int32), (UNKNOWN, ERROR, OTHER))
        with pytest.raises(ValueError):
            Snapshot.from_parts(
                1, np.array(["b", "a"]), np.array([0, 0], dtype=np.int32), (UNKNOWN, ERROR, OTHER)
            )


class TestWeightVector:
    def test_missing_keys_default_to_one(self):
        weights = WeightVector({"n1": 5.0})
        assert weights.get("n1") == 5.0
        assert weights.get("absent") == 1.0

    def test_negative_weight_rejected(self):
        with pytest.raises(ValueError):
            WeightVector({"n1": -0.5})

    def test_array_for_alignment(self):
        weights = WeightVector({"b": 2.0})
        got = weights.array_for(np.array(["a", "b", "c"]))
        assert got.tolist() == [1.0, 2.0, 1.0]

    def test_uniform_fast_path(self):
        assert WeightVector({}).array_for(np.array(["a", "b"])).tolist() == [1.0, 1.0]


class TestSimilarityMatrixType:
    def test_requires_symmetry_and_range(self):
        with pytest.raises(ValueError):
            SimilarityMatrix([1, 2], np.array([[1.0, 0.2], [0.3, 1.0]]))
        with pytest.raises(ValueError):
            SimilarityMatrix([1, 2], np.array([[1.0, 1.5], [1.5, 1.0]]))

    def test_consecutive_reads_superdiagonal(self):
        values = np.array([[1.0, 0.5, 0.2], [0.5, 1.0, 0.7], [0.2, 0.7, 1.0]])
        matrix = SimilarityMatrix([10, 20, 30], values)
        assert matrix.consecutive().tolist() == [0.5, 0.7]
        assert matrix.at(10, 30) == 0.2


class TestAlignment:
    def test_union_universe_with_differing_keys(self):
        a = Snapshot(1, {"n1": site("A")})
        b = Snapshot(2, {"n2": site("B")})
        keys, codes_a, codes_b, labels = align_pair(a, b)
        assert keys.tolist() == ["n1", "n2"]
        assert labels[codes_a[0]] == site("A")
        assert labels[codes_a[1]] is UNKNOWN
        assert labels[codes_b[0]] is UNKNOWN
        assert labels[codes_b[1]] == site("B")

    def test_shared_universe_fast_path_preserves_labels(self):
        a = Snapshot(1, {"n1": site("A"), "n2": site("B")})
        b = Snapshot(2, {"n1": site("B"), "n2": site("A")})
        _, keys, codes, labels = align_series([a, b])
        assert [labels[c] for c in codes[0]] == [site("A"), site("B")]
        assert [labels[c] for c in codes[1]] == [site("B"), site("A")]

    def test_check_time_ordered(self):
        good = [Snapshot(1, {}), Snapshot(1, {}), Snapshot(2, {})]
        check_time_ordered(good)
        with pytest.raises(ValueError):
            check_time_ordered([Snapshot(2, {}), Snapshot(1, {})])
