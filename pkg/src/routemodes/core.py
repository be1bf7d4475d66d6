"""Domain types shared by every stage of the toolkit.

A study is a time series of snapshots, one per observation round.  Each
snapshot maps opaque network keys (a /24 in CIDR text, a vantage-point id,
a probed prefix) to the catchment that served them.  All types here are
immutable after construction and safe to share across threads.

Snapshots are array-backed so that studies at the millions-of-networks
scale stay cheap: keys are a sorted string array, labels are small integer
codes into a per-snapshot label table.  Codes 0..2 are reserved for the
unknown/error/other states so masks like ``codes == 0`` need no table
lookup.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

__all__ = [
    "LabelKind",
    "CatchmentLabel",
    "UNKNOWN",
    "ERROR",
    "OTHER",
    "site",
    "parse_label",
    "Snapshot",
    "WeightVector",
    "AggregateVector",
    "SimilarityMatrix",
    "TransitionMatrix",
    "ModeAssignment",
    "LatencySample",
    "Visibility",
    "GroundTruthEvent",
    "align_pair",
    "align_series",
    "check_time_ordered",
]


class LabelKind(Enum):
    SITE = "site"
    UNKNOWN = "unknown"
    ERROR = "error"
    OTHER = "other"


# Words that the canonical file formats reserve for the non-site states.
RESERVED_WORDS = frozenset(("unknown", "error", "other"))


@dataclass(frozen=True, eq=False)
class CatchmentLabel:
    """A catchment: a service site, or one of the reserved states.

    Site names compare case-insensitively after trimming; two labels are
    equal iff their kind and normalized name are equal.  Use :func:`site`
    or the module constants rather than the constructor.
    """

    kind: LabelKind
    name: str = ""

    def __post_init__(self) -> None:
        if self.kind is LabelKind.SITE:
            if not self.name or self.name != self.name.strip():
                raise ValueError("site label requires a trimmed, nonempty name")
            if self.name.casefold() in RESERVED_WORDS:
                raise ValueError(f"{self.name!r} is a reserved label word")
        elif self.name:
            raise ValueError("reserved labels carry no name")
        object.__setattr__(self, "_norm", self.name.casefold())

    @property
    def is_site(self) -> bool:
        return self.kind is LabelKind.SITE

    @property
    def is_unknown(self) -> bool:
        return self.kind is LabelKind.UNKNOWN

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CatchmentLabel):
            return NotImplemented
        return self.kind is other.kind and self._norm == other._norm

    def __hash__(self) -> int:
        return hash((self.kind, self._norm))

    def __str__(self) -> str:
        return self.name if self.kind is LabelKind.SITE else self.kind.value

    def __repr__(self) -> str:
        if self.kind is LabelKind.SITE:
            return f"site({self.name!r})"
        return self.kind.value.upper()


UNKNOWN = CatchmentLabel(LabelKind.UNKNOWN)
ERROR = CatchmentLabel(LabelKind.ERROR)
OTHER = CatchmentLabel(LabelKind.OTHER)

# Reserved labels occupy fixed slots in every snapshot's label table.
RESERVED_LABELS = (UNKNOWN, ERROR, OTHER)
UNKNOWN_CODE = 0
ERROR_CODE = 1
OTHER_CODE = 2
N_RESERVED = len(RESERVED_LABELS)


def site(name: str) -> CatchmentLabel:
    """Build a site label, trimming the name. Reserved words are rejected."""
    return CatchmentLabel(LabelKind.SITE, name.strip())


def parse_label(text: str) -> CatchmentLabel:
    """Map a label token to a label; reserved words are case-insensitive."""
    token = text.strip()
    low = token.casefold()
    if low == "unknown":
        return UNKNOWN
    if low == "error":
        return ERROR
    if low == "other":
        return OTHER
    return site(token)


def _label_table(labels: Iterable[CatchmentLabel]) -> tuple[CatchmentLabel, ...]:
    table = list(RESERVED_LABELS)
    seen = {lab: i for i, lab in enumerate(table)}
    for lab in labels:
        if lab not in seen:
            seen[lab] = len(table)
            table.append(lab)
    return tuple(table)


class Snapshot:
    """One routing vector: the catchment observed for each network at ``time``.

    A network absent from the entries is treated exactly like an explicit
    unknown entry by all downstream math; the two differ only for storage
    and equality.
    """

    __slots__ = ("time", "_keys", "_codes", "_labels")

    def __init__(self, time: int, entries: Mapping[str, CatchmentLabel] | None = None):
        data = dict(entries or {})
        for key, lab in data.items():
            if not isinstance(key, str):
                raise TypeError(f"network key must be str, got {type(key).__name__}")
            if not isinstance(lab, CatchmentLabel):
                raise TypeError(f"entry for {key!r} is not a CatchmentLabel")
        labels = _label_table(data.values())
        code_of = {lab: i for i, lab in enumerate(labels)}
        keys = np.array(sorted(data), dtype=str) if data else np.empty(0, dtype=str)
        codes = np.fromiter((code_of[data[k]] for k in keys), dtype=np.int32, count=len(keys))
        self._init_parts(int(time), keys, codes, labels)

    @classmethod
    def from_parts(
        cls,
        time: int,
        keys: np.ndarray,
        codes: np.ndarray,
        labels: Sequence[CatchmentLabel],
        *,
        validate: bool = True,
    ) -> "Snapshot":
        """Trusted constructor over prebuilt arrays.

        ``keys`` must be sorted unique strings, ``codes`` parallel int codes
        into ``labels``, whose first three slots are the reserved labels.
        Arrays are not copied; callers sharing one universe across many
        snapshots should pass the same keys array.
        """
        snap = cls.__new__(cls)
        codes = np.asarray(codes, dtype=np.int32)
        keys = np.asarray(keys)
        labels = tuple(labels)
        if validate:
            if tuple(labels[:N_RESERVED]) != RESERVED_LABELS:
                raise ValueError("label table must start with the reserved labels")
            if len(set(labels)) != len(labels):
                raise ValueError("duplicate labels in table")
            if keys.shape != codes.shape or keys.ndim != 1:
                raise ValueError("keys and codes must be parallel 1-d arrays")
            if len(keys) and (np.any(codes < 0) or np.any(codes >= len(labels))):
                raise ValueError("label code out of range")
            if len(keys) > 1 and not np.all(keys[:-1] < keys[1:]):
                raise ValueError("keys must be sorted and unique")
        snap._init_parts(int(time), keys, codes, labels)
        return snap

    def _init_parts(self, time, keys, codes, labels) -> None:
        keys.setflags(write=False)
        codes.setflags(write=False)
        object.__setattr__(self, "time", time)
        object.__setattr__(self, "_keys", keys)
        object.__setattr__(self, "_codes", codes)
        object.__setattr__(self, "_labels", labels)

    def __setattr__(self, name, value):
        raise AttributeError("Snapshot is immutable")

    # -- accessors ---------------------------------------------------------

    @property
    def network_keys(self) -> np.ndarray:
        return self._keys

    @property
    def codes(self) -> np.ndarray:
        return self._codes

    @property
    def labels(self) -> tuple[CatchmentLabel, ...]:
        return self._labels

    def __len__(self) -> int:
        return len(self._keys)

    def __contains__(self, key: str) -> bool:
        i = np.searchsorted(self._keys, key) if len(self._keys) else 0
        return i < len(self._keys) and self._keys[i] == key

    def label_of(self, key: str) -> CatchmentLabel:
        """Label stored for ``key``; unknown when the network is absent."""
        if len(self._keys):
            i = int(np.searchsorted(self._keys, key))
            if i < len(self._keys) and self._keys[i] == key:
                return self._labels[int(self._codes[i])]
        return UNKNOWN

    def items(self) -> Iterator[tuple[str, CatchmentLabel]]:
        for key, code in zip(self._keys, self._codes):
            yield str(key), self._labels[int(code)]

    @property
    def entries(self) -> dict[str, CatchmentLabel]:
        return dict(self.items())

    def site_labels(self) -> set[CatchmentLabel]:
        present = np.unique(self._codes)
        return {self._labels[int(c)] for c in present if c >= N_RESERVED}

    def replace_codes(self, codes: np.ndarray, labels: Sequence[CatchmentLabel] | None = None) -> "Snapshot":
        """Same universe and time, different labeling (used by cleaning)."""
        return Snapshot.from_parts(
            self.time, self._keys, codes, self._labels if labels is None else labels
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Snapshot):
            return NotImplemented
        if self.time != other.time or len(self) != len(other):
            return False
        if not np.array_equal(self._keys, other._keys):
            return False
        remap = _table_lookup(self._labels, other._labels)
        return bool(np.array_equal(remap[self._codes], other._codes))

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        return f"Snapshot(time={self.time}, networks={len(self)}, sites={len(self.site_labels())})"


def _table_lookup(src: Sequence[CatchmentLabel], dst: Sequence[CatchmentLabel]) -> np.ndarray:
    """Code remap src->dst; labels missing from dst map to -1."""
    index = {lab: i for i, lab in enumerate(dst)}
    return np.fromiter((index.get(lab, -1) for lab in src), dtype=np.int64, count=len(src))


@dataclass(frozen=True)
class WeightVector:
    """Per-network importance weights; missing keys default to 1.0.

    Weights are dimensionless (block counts, users, traffic shares) and
    must be nonnegative.
    """

    weights: Mapping[str, float]

    def __post_init__(self) -> None:
        data = dict(self.weights)
        for key, value in data.items():
            w = float(value)
            if not (w >= 0.0):
                raise ValueError(f"negative weight for {key!r}: {value}")
            data[key] = w
        object.__setattr__(self, "weights", data)

    def get(self, key: str) -> float:
        return self.weights.get(key, 1.0)

    def array_for(self, keys: np.ndarray) -> np.ndarray:
        """Dense weight array aligned with a key array."""
        if not self.weights:
            return np.ones(len(keys), dtype=np.float64)
        return np.fromiter(
            (self.weights.get(k, 1.0) for k in keys), dtype=np.float64, count=len(keys)
        )

    def scaled(self, factor: float) -> "WeightVector":
        if factor <= 0:
            raise ValueError("scale factor must be positive")
        return WeightVector({k: v * factor for k, v in self.weights.items()})

    def __len__(self) -> int:
        return len(self.weights)


UNIFORM_WEIGHTS = WeightVector({})


@dataclass(frozen=True)
class AggregateVector:
    """Weighted network count per catchment at one time."""

    time: int
    counts: Mapping[str, float] | Mapping[CatchmentLabel, float]

    def __post_init__(self) -> None:
        object.__setattr__(self, "counts", dict(self.counts))

    def total(self) -> float:
        return float(sum(self.counts.values()))

    def get(self, label: CatchmentLabel) -> float:
        return float(self.counts.get(label, 0.0))


class SimilarityMatrix:
    """Symmetric matrix of pairwise snapshot similarity, values in [0, 1].

    The diagonal is the weighted known fraction at each time, not 1.0:
    unknown entries count as changed even against themselves.
    """

    __slots__ = ("times", "values")

    def __init__(self, times: Sequence[int], values: np.ndarray):
        values = np.asarray(values, dtype=np.float64)
        times = tuple(int(t) for t in times)
        if values.shape != (len(times), len(times)):
            raise ValueError("matrix shape does not match times")
        if len(times) and (values.min() < -1e-12 or values.max() > 1 + 1e-12):
            raise ValueError("similarity values must lie in [0, 1]")
        if not np.array_equal(values, values.T):
            raise ValueError("similarity matrix must be symmetric")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    def __setattr__(self, name, value):
        raise AttributeError("SimilarityMatrix is immutable")

    def __len__(self) -> int:
        return len(self.times)

    def index_of(self, time: int) -> int:
        try:
            return self.times.index(int(time))
        except ValueError:
            raise KeyError(f"no snapshot at time {time}") from None

    def at(self, t_a: int, t_b: int) -> float:
        return float(self.values[self.index_of(t_a), self.index_of(t_b)])

    def consecutive(self) -> np.ndarray:
        """Similarity of each consecutive snapshot pair (length T-1)."""
        return np.diagonal(self.values, offset=1).copy()

    def __repr__(self) -> str:
        return f"SimilarityMatrix(times={len(self.times)})"


class TransitionMatrix:
    """Weighted network movement between catchments across two snapshots."""

    __slots__ = ("from_time", "to_time", "labels", "cells")

    def __init__(
        self,
        from_time: int,
        to_time: int,
        labels: Sequence[CatchmentLabel],
        cells: np.ndarray,
    ):
        cells = np.asarray(cells, dtype=np.float64)
        labels = tuple(labels)
        if cells.shape != (len(labels), len(labels)):
            raise ValueError("cells shape does not match labels")
        if len(labels) and cells.min() < 0:
            raise ValueError("transition cells must be nonnegative")
        cells = cells.copy()
        cells.setflags(write=False)
        object.__setattr__(self, "from_time", int(from_time))
        object.__setattr__(self, "to_time", int(to_time))
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "cells", cells)

    def __setattr__(self, name, value):
        raise AttributeError("TransitionMatrix is immutable")

    def index_of(self, label: CatchmentLabel) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"label {label} not on this matrix") from None

    def value(self, from_label: CatchmentLabel, to_label: CatchmentLabel) -> float:
        return float(self.cells[self.index_of(from_label), self.index_of(to_label)])

    def row_sums(self) -> np.ndarray:
        return self.cells.sum(axis=1)

    def col_sums(self) -> np.ndarray:
        return self.cells.sum(axis=0)

    def total(self) -> float:
        return float(self.cells.sum())

    def is_diagonal(self) -> bool:
        off = self.cells - np.diag(np.diagonal(self.cells))
        return bool(np.all(off == 0))

    def __repr__(self) -> str:
        return (
            f"TransitionMatrix({self.from_time}->{self.to_time}, "
            f"labels={len(self.labels)})"
        )


@dataclass(frozen=True)
class ModeAssignment:
    """Cluster id per snapshot time, plus the threshold that produced it.

    ``mode_ids`` holds the clusters with at least two members: the routing
    modes.  Cluster ids are 0-based, ordered by earliest member time.
    """

    times: tuple[int, ...]
    cluster_of: Mapping[int, int]
    threshold: float
    mode_ids: frozenset[int]

    def __post_init__(self) -> None:
        object.__setattr__(self, "times", tuple(int(t) for t in self.times))
        object.__setattr__(self, "cluster_of", dict(self.cluster_of))
        object.__setattr__(self, "mode_ids", frozenset(self.mode_ids))
        missing = [t for t in self.times if t not in self.cluster_of]
        if missing:
            raise ValueError(f"times without a cluster: {missing[:3]}")

    def labels_array(self) -> np.ndarray:
        return np.fromiter(
            (self.cluster_of[t] for t in self.times), dtype=np.int64, count=len(self.times)
        )

    def members(self, cluster_id: int) -> tuple[int, ...]:
        return tuple(t for t in self.times if self.cluster_of[t] == cluster_id)

    @property
    def n_clusters(self) -> int:
        return len(set(self.cluster_of.values()))

    @property
    def n_modes(self) -> int:
        return len(self.mode_ids)


@dataclass(frozen=True)
class LatencySample:
    """One round-trip-time observation for a network."""

    network: str
    time: int
    rtt_ms: float
    catchment: CatchmentLabel

    def __post_init__(self) -> None:
        if not (self.rtt_ms > 0):
            raise ValueError(f"rtt must be positive, got {self.rtt_ms}")


class Visibility(Enum):
    INTERNAL = "internal"
    DRAIN = "drain"
    TRAFFIC_ENGINEERING = "te"

    @property
    def is_external(self) -> bool:
        return self is not Visibility.INTERNAL


@dataclass(frozen=True)
class GroundTruthEvent:
    """An operator-logged maintenance or routing action."""

    time: int
    operator: str
    visibility: Visibility


# -- alignment ---------------------------------------------------------------


def _merge_tables(
    tables: Sequence[Sequence[CatchmentLabel]],
) -> tuple[tuple[CatchmentLabel, ...], list[np.ndarray]]:
    merged: list[CatchmentLabel] = list(RESERVED_LABELS)
    index = {lab: i for i, lab in enumerate(merged)}
    lookups = []
    for table in tables:
        lut = np.empty(len(table), dtype=np.int32)
        for i, lab in enumerate(table):
            if lab not in index:
                index[lab] = len(merged)
                merged.append(lab)
            lut[i] = index[lab]
        lookups.append(lut)
    return tuple(merged), lookups


def align_series(
    series: Sequence[Snapshot],
) -> tuple[list[int], np.ndarray, np.ndarray, tuple[CatchmentLabel, ...]]:
    """Project snapshots onto the union universe and one label table.

    Returns ``(times, keys, codes, labels)`` where ``codes`` is a
    (snapshots x networks) int32 matrix; networks absent from a snapshot
    carry the unknown code.  Order of the input is preserved.
    """
    if not series:
        raise ValueError("empty snapshot series")
    labels, lookups = _merge_tables([s.labels for s in series])

    first_keys = series[0].network_keys
    shared = all(
        s.network_keys is first_keys or np.array_equal(s.network_keys, first_keys)
        for s in series[1:]
    )
    if shared:
        keys = first_keys
        rows = []
        for snap, lut in zip(series, lookups):
            if len(lut) == len(labels) and np.array_equal(lut, np.arange(len(labels))):
                rows.append(snap.codes)
            else:
                rows.append(lut[snap.codes])
        codes = np.vstack(rows) if rows else np.empty((0, 0), dtype=np.int32)
    else:
        keys = series[0].network_keys
        for snap in series[1:]:
            keys = np.union1d(keys, snap.network_keys)
        codes = np.zeros((len(series), len(keys)), dtype=np.int32)
        for row, (snap, lut) in enumerate(zip(series, lookups)):
            if len(snap):
                pos = np.searchsorted(keys, snap.network_keys)
                codes[row, pos] = lut[snap.codes]
    return [s.time for s in series], keys, codes, labels


def align_pair(
    a: Snapshot, b: Snapshot
) -> tuple[np.ndarray, np.ndarray, np.ndarray, tuple[CatchmentLabel, ...]]:
    """Union-universe view of two snapshots: ``(keys, codes_a, codes_b, labels)``."""
    _, keys, codes, labels = align_series([a, b])
    return keys, codes[0], codes[1], labels


def check_time_ordered(series: Sequence[Snapshot]) -> None:
    for prev, cur in zip(series, series[1:]):
        if cur.time < prev.time:
            raise ValueError(
                f"snapshots out of time order: {prev.time} then {cur.time}"
            )
