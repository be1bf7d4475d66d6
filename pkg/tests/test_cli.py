import json
from pathlib import Path

import pytest

from routemodes.cli import main

SCENARIO = {
    "version": 1,
    "networks": 400,
    "sites": ["LAX", "MIA", "AMS"],
    "segments": [{"length": 8}, {"length": 8, "reassign": 0.7}],
    "churn": 0.005,
    "unknown": 0.05,
    "interval": 240,
}


def write_json(path: Path, data) -> Path:
    path.write_text(json.dumps(data, indent=1), encoding="utf-8")
    return path


def study_config(tmp_path: Path, **overrides) -> Path:
    config = {
        "version": 1,
        "inputs": [{"path": "synth/snapshots.csv", "format": "canonical_rows"}],
        "cleaning": {"min_share": 0.0, "max_gap": 3},
        "detection": {"window": 15, "delta": 0.05},
    }
    config.update(overrides)
    return write_json(tmp_path / "study.json", config)


@pytest.fixture
def study(tmp_path):
    """A synthesized study: spec, generated data, config, store path."""
    spec = write_json(tmp_path / "scenario.json", SCENARIO)
    out = tmp_path / "synth"
    assert main(["--seed", "7", "synth", "--spec", str(spec), "--out", str(out)]) == 0
    config = study_config(tmp_path)
    store = tmp_path / "store"
    return config, store, out


def read_all(root: Path) -> dict[str, bytes]:
    return {
        str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()
    }


class TestSynth:
    def test_writes_snapshots_and_truth(self, study, capsys):
        _, _, out = study
        assert (out / "snapshots.csv").exists()
        truth = (out / "ground_truth.csv").read_text(encoding="utf-8")
        assert truth.startswith("time,operator,visibility\n")
        assert truth.count("te") == 1

    def test_same_seed_reproduces_bytes(self, tmp_path):
        spec = write_json(tmp_path / "scenario.json", SCENARIO)
        for name in ("one", "two"):
            assert main(["--seed", "5", "synth", "--spec", str(spec), "--out", str(tmp_path / name)]) == 0
        assert read_all(tmp_path / "one") == read_all(tmp_path / "two")

    def test_bad_spec_exits_2(self, tmp_path):
        spec = write_json(tmp_path / "bad.json", {"version": 1, "networks": 0, "sites": [], "segments": []})
        assert main(["synth", "--spec", str(spec), "--out", str(tmp_path / "x")]) == 2


class TestIngest:
    def test_populates_store(self, study, capsys):
        config, store, _ = study
        assert main(["--config", str(config), "--store", str(store), "ingest"]) == 0
        assert "ingested" in capsys.readouterr().out
        manifest = json.loads((store / "manifest.json").read_text())
        assert len(manifest["inputs"]) == 1

    def test_rerun_skips_unchanged(self, study, capsys):
        config, store, _ = study
        assert main(["--config", str(config), "--store", str(store), "ingest"]) == 0
        capsys.readouterr()
        assert main(["--config", str(config), "--store", str(store), "ingest"]) == 0
        assert "skipped" in capsys.readouterr().out

    def test_malformed_input_exits_2_without_mutation(self, study, tmp_path, capsys):
        config, store, _ = study
        assert main(["--config", str(config), "--store", str(store), "ingest"]) == 0
        before = read_all(store)
        (tmp_path / "broken.csv").write_text("time,network,label\nnope,n1,LAX\n", encoding="utf-8")
        bad_config = study_config(
            tmp_path,
            inputs=[
                {"path": "synth/snapshots.csv", "format": "canonical_rows"},
                {"path": "broken.csv", "format": "canonical_rows"},
            ],
        )
        assert main(["--config", str(bad_config), "--store", str(store), "ingest"]) == 2
        assert read_all(store) == before

    def test_missing_input_exits_2(self, tmp_path):
        config = study_config(tmp_path)
        assert main(["--config", str(config), "--store", str(tmp_path / "s"), "ingest"]) == 2


class TestAnalyze:
    def test_outputs_and_summary(self, study, capsys):
        config, store, _ = study
        main(["--config", str(config), "--store", str(store), "ingest"])
        assert main(["--config", str(config), "--store", str(store), "analyze"]) == 0
        out = capsys.readouterr().out
        assert "modes=" in out
        analysis = store / "analysis"
        matrix = (analysis / "matrix.csv").read_text(encoding="utf-8")
        assert matrix.startswith("time,")
        modes = (analysis / "modes.csv").read_text(encoding="utf-8").splitlines()
        assert modes[0] == "time,cluster,is_mode"
        assert len(modes) == 17
        events = (analysis / "events.csv").read_text(encoding="utf-8").splitlines()
        assert events[0] == "time,score"
        assert len(events) == 2  # the planted boundary
        summary = json.loads((analysis / "summary.json").read_text())
        assert summary["n_modes"] == 2
        assert summary["n_events"] == 1

    def test_empty_store_exits_2(self, study):
        config, store, _ = study
        assert main(["--config", str(config), "--store", str(store), "analyze"]) == 2

    def test_explicit_threshold_bypasses_sweep(self, study):
        config, store, _ = study
        main(["--config", str(config), "--store", str(store), "ingest"])
        assert main(
            ["--config", str(config), "--store", str(store), "analyze", "--threshold", "1.0"]
        ) == 0
        summary = json.loads((store / "analysis" / "summary.json").read_text())
        assert summary["threshold"] == 1.0
        assert summary["n_clusters"] == 1

    def test_cache_hit_reproduces_bytes(self, study):
        config, store, _ = study
        main(["--config", str(config), "--store", str(store), "ingest"])
        main(["--config", str(config), "--store", str(store), "analyze", "--out", str(store / "a1")])
        cache_files = list((store / "cache").glob("*.npz"))
        assert len(cache_files) == 1
        main(["--config", str(config), "--store", str(store), "analyze", "--out", str(store / "a2")])
        assert read_all(store / "a1") == read_all(store / "a2")
        assert len(list((store / "cache").glob("*.npz"))) == 1


class TestReport:
    def test_generates_figures_and_tables(self, study, tmp_path):
        config, store, out = study
        main(["--config", str(config), "--store", str(store), "ingest"])
        main(["--config", str(config), "--store", str(store), "analyze"])
        snaps = (store / "analysis" / "modes.csv").read_text(encoding="utf-8").splitlines()[1:]
        t1 = snaps[7].split(",")[0]
        t2 = snaps[8].split(",")[0]
        traceroutes = tmp_path / "traces.txt"
        traceroutes.write_text(
            "10.0.0.0/24|1,r1,UP1|2,r2,CORE1\n10.1.0.0/24|1,r1,UP2|2,r2,CORE1\n",
            encoding="utf-8",
        )
        rc = main(
            [
                "--config", str(config), "--store", str(store), "report",
                "--transition", f"{t1}:{t2}", "--highlight", "50",
                "--sankey-traceroutes", str(traceroutes), "--sankey-hops", "1,2",
            ]
        )
        assert rc == 0
        analysis = store / "analysis"
        assert (analysis / "heatmap.svg").read_text(encoding="utf-8").startswith("<?xml")
        assert (analysis / "stackplot.svg").exists()
        table = (analysis / f"transition_{t1}_{t2}.txt").read_text(encoding="utf-8")
        assert table.startswith("from\\to")
        sankey = (analysis / "sankey.csv").read_text(encoding="utf-8")
        assert sankey.splitlines()[0] == "source_node,target_node,value"
        assert "UP1_1,CORE1_2,1" in sankey

    def test_missing_artifacts_exit_2_with_hint(self, study, capsys):
        config, store, _ = study
        main(["--config", str(config), "--store", str(store), "ingest"])
        assert main(["--config", str(config), "--store", str(store), "report"]) == 2
        assert "run analyze" in capsys.readouterr().err


class TestValidate:
    def run_pipeline(self, study):
        config, store, out = study
        main(["--config", str(config), "--store", str(store), "ingest"])
        main(["--config", str(config), "--store", str(store), "analyze"])
        return config, store, out

    def test_summary_line_and_file(self, study, tmp_path, capsys):
        config, store, out = self.run_pipeline(study)
        report = tmp_path / "confusion.txt"
        rc = main(
            [
                "--store", str(store), "validate",
                "--truth", str(out / "ground_truth.csv"),
                "--out", str(report),
            ]
        )
        assert rc == 0
        line = capsys.readouterr().out.strip().splitlines()[-1]
        assert line == "tp=1 fn=0 tn=0 fp=0 extra=0 recall=1.000 accuracy=1.000 precision=1.000"
        assert report.read_text(encoding="utf-8") == line + "\n"

    def test_strict_flag_counts_extras(self, study, tmp_path, capsys):
        config, store, out = self.run_pipeline(study)
        truth = tmp_path / "empty_truth.csv"
        truth.write_text("time,operator,visibility\n", encoding="utf-8")
        rc = main(["--store", str(store), "validate", "--truth", str(truth), "--strict"])
        assert rc == 0
        line = capsys.readouterr().out
        assert "fp=1" in line and "extra=1" in line

    def test_missing_events_exit_2(self, study):
        config, store, out = study
        assert (
            main(["--store", str(store), "validate", "--truth", str(out / "ground_truth.csv")])
            == 2
        )


class TestDeterminism:
    def test_analyze_and_report_byte_identical_across_runs(self, study):
        config, store, _ = study
        main(["--config", str(config), "--store", str(store), "ingest"])
        outputs = {}
        for run in ("r1", "r2"):
            out = store / run
            assert main(
                ["--config", str(config), "--store", str(store), "analyze", "--out", str(out)]
            ) == 0
            assert main(
                [
                    "--config", str(config), "--store", str(store), "report",
                    "--analysis", str(out), "--out", str(out),
                ]
            ) == 0
            outputs[run] = read_all(out)
        assert outputs["r1"] == outputs["r2"]


class TestCollect:
    def test_collect_writes_canonical_snapshot(self, tmp_path):
        from test_ednscs import StubResolver, a_record, response_for

        prefixes = tmp_path / "prefixes.txt"
        prefixes.write_text("192.0.2.0/24\n198.51.100.0/24\n", encoding="utf-8")
        out = tmp_path / "collected.csv"

        def behavior(query):
            return response_for(query, 0, [a_record("example.com", "10.9.9.9")])

        with StubResolver(behavior) as stub:
            rc = main(
                [
                    "collect", "--hostname", "example.com",
                    "--prefixes", str(prefixes), "--resolver", "127.0.0.1",
                    "--port", str(stub.port), "--time", "1234", "--out", str(out),
                ]
            )
        assert rc == 0
        text = out.read_text(encoding="utf-8")
        assert text.startswith("time,network,label\n")
        assert "1234,192.0.2.0/24,10.9.9.9" in text

    def test_bad_prefix_exits_2(self, tmp_path):
        prefixes = tmp_path / "prefixes.txt"
        prefixes.write_text("not-a-prefix\n", encoding="utf-8")
        rc = main(
            [
                "collect", "--hostname", "example.com",
                "--prefixes", str(prefixes), "--resolver", "127.0.0.1",
                "--time", "0", "--out", str(tmp_path / "x.csv"),
            ]
        )
        assert rc == 2


class TestUsage:
    def test_unknown_subcommand_exits_2(self):
        with pytest.raises(SystemExit) as err:
            main(["frobnicate"])
        assert err.value.code == 2

    def test_ingest_without_config_exits_2(self, tmp_path):
        assert main(["--store", str(tmp_path / "s"), "ingest"]) == 2
