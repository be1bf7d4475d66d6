"""Command-line driver: ingest -> analyze -> report -> validate.

A study lives in a store directory: canonical snapshot files keyed by
input content hash, a manifest, a derived-result cache, and an analysis
output directory.  Every command is deterministic for a given store and
configuration; reruns skip work but produce identical bytes.

Exit codes: 0 success, 2 usage or input error, 1 internal error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import ednscs
from .analysis import adaptive_threshold, hac_cluster, score_boundaries
from .core import (
    ModeAssignment,
    SimilarityMatrix,
    Snapshot,
    WeightVector,
    parse_label,
)
from .evaluation import (
    ScenarioSpec,
    generate_scenario,
    group_events,
    load_ground_truth,
    score_detections,
    write_ground_truth,
)
from .ingest import (
    ParseError,
    SnapshotFormat,
    hop_snapshot,
    load_snapshots,
    parse_traceroutes,
)
from .prep import (
    drop_micro_catchments,
    expand_prefix_weights,
    interpolate_missing,
    load_traffic_weights,
    remove_incorrect,
)
from .quantify import aggregate, transition_matrix
from .report import (
    export_sankey,
    export_similarity_csv,
    render_heatmap,
    render_stackplot,
    render_transition_table,
    write_snapshots,
)
from .analysis import similarity_matrix

CONFIG_VERSION = 1
MANIFEST_NAME = "manifest.json"


class CliError(Exception):
    """Input or usage problem; maps to exit code 2."""


# -- small helpers -------------------------------------------------------------


def _sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _sha256_text(text: str) -> str:
    return _sha256_bytes(text.encode("utf-8"))


def _atomic_write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _load_json(path: Path):
    try:
        with open(path, encoding="utf-8") as handle:
            return json.load(handle)
    except FileNotFoundError:
        raise CliError(f"missing file: {path}") from None
    except json.JSONDecodeError as exc:
        raise CliError(f"{path}: invalid JSON: {exc}") from None


DEFAULT_CONFIG = {
    "version": CONFIG_VERSION,
    "inputs": [],
    "cleaning": {"reject_labels": [], "min_share": 0.0, "max_gap": 3},
    "weights": {"mode": "uniform"},
    "clustering": {
        "threshold": None,
        "max_modes": 15,
        "min_size": 2,
        "step": 0.01,
        "linkage": "average",
    },
    "detection": {"window": 15, "delta": 0.05},
}


def _load_config(path_text: str | None) -> tuple[dict, Path]:
    if not path_text:
        raise CliError("this command needs --config")
    path = Path(path_text)
    raw = _load_json(path)
    if raw.get("version", CONFIG_VERSION) != CONFIG_VERSION:
        raise CliError(f"{path}: unsupported config version {raw.get('version')}")
    config = json.loads(json.dumps(DEFAULT_CONFIG))
    for key, value in raw.items():
        if isinstance(value, dict) and isinstance(config.get(key), dict):
            config[key].update(value)
        else:
            config[key] = value
    return config, path.parent


def _store_dir(args) -> Path:
    if not args.store:
        raise CliError("this command needs --store")
    return Path(args.store)


def _format_of(token: str) -> SnapshotFormat:
    try:
        return SnapshotFormat(token)
    except ValueError:
        choices = ", ".join(f.value for f in SnapshotFormat)
        raise CliError(f"unknown input format {token!r} (choices: {choices})") from None


# -- store ---------------------------------------------------------------------


def _read_manifest(store: Path) -> dict:
    path = store / MANIFEST_NAME
    if not path.exists():
        return {"version": 1, "inputs": {}}
    return _load_json(path)


def _store_hash(manifest: dict) -> str:
    digest = {name: entry["sha256"] for name, entry in sorted(manifest["inputs"].items())}
    return _sha256_text(json.dumps(digest, sort_keys=True))


def _load_store_snapshots(store: Path) -> list[Snapshot]:
    manifest = _read_manifest(store)
    if not manifest["inputs"]:
        raise CliError(f"store {store} is empty; run ingest first")
    merged: dict[int, dict] = {}
    for name in sorted(manifest["inputs"]):
        stored = store / manifest["inputs"][name]["file"]
        for snap in load_snapshots(stored, SnapshotFormat.CANONICAL_ROWS):
            bucket = merged.setdefault(snap.time, {})
            for key, label in snap.items():
                if key in bucket and bucket[key] != label:
                    raise CliError(
                        f"conflicting entries for ({snap.time}, {key!r}) across inputs"
                    )
                bucket[key] = label
    return [Snapshot(t, merged[t]) for t in sorted(merged)]


def cmd_ingest(args) -> int:
    config, base = _load_config(args.config)
    store = _store_dir(args)
    inputs = config.get("inputs", [])
    if not inputs:
        raise CliError("config lists no inputs")
    manifest = _read_manifest(store)

    parsed = []
    skipped = []
    for item in inputs:
        path = Path(item.get("path", ""))
        if not path.is_absolute():
            path = base / path
        fmt = _format_of(item.get("format", "canonical_rows"))
        try:
            blob = path.read_bytes()
        except FileNotFoundError:
            raise CliError(f"input not found: {path}") from None
        digest = _sha256_bytes(blob)
        name = str(item.get("path", path))
        stored_name = f"snapshots/{digest[:16]}.csv"
        entry = manifest["inputs"].get(name)
        if entry and entry["sha256"] == digest and (store / entry["file"]).exists():
            skipped.append(name)
            continue
        series = load_snapshots(path, fmt)
        parsed.append((name, digest, stored_name, series))

    for name, digest, stored_name, series in parsed:
        target = store / stored_name
        target.parent.mkdir(parents=True, exist_ok=True)
        tmp = target.with_name(target.name + ".tmp")
        write_snapshots(series, tmp)
        os.replace(tmp, target)
        manifest["inputs"][name] = {"sha256": digest, "file": stored_name}

    manifest["inputs"] = {
        name: manifest["inputs"][name]
        for name in sorted(manifest["inputs"])
        if any(str(item.get("path", "")) == name for item in inputs)
    }
    _atomic_write(
        store / MANIFEST_NAME,
        (json.dumps(manifest, sort_keys=True, indent=2) + "\n").encode("utf-8"),
    )
    for name in skipped:
        print(f"skipped {name} (unchanged)")
    for name, _, _, series in parsed:
        print(f"ingested {name}: {len(series)} snapshots")
    return 0


# -- analyze -------------------------------------------------------------------


def _build_weights(config: dict, base: Path, series) -> tuple[WeightVector, str]:
    spec = config.get("weights", {"mode": "uniform"})
    mode = spec.get("mode", "uniform")
    if mode == "uniform":
        return WeightVector({}), "uniform"
    if mode == "traffic":
        path = Path(spec["path"])
        if not path.is_absolute():
            path = base / path
        vector = load_traffic_weights(path)
        return vector, _sha256_bytes(path.read_bytes())
    if mode == "prefix":
        coverage = list(spec.get("coverage", []))
        observed = set()
        for snap in series:
            observed.update(str(k) for k in snap.network_keys)
        vector = expand_prefix_weights(observed, coverage)
        return vector, _sha256_text(json.dumps(sorted(coverage)))
    raise CliError(f"unknown weights mode {mode!r}")


def _clean(series, config: dict, weights: WeightVector):
    cleaning = config.get("cleaning", {})
    reject_tokens = cleaning.get("reject_labels", [])
    if reject_tokens:
        rejected = {parse_label(token) for token in reject_tokens}
        series = remove_incorrect(series, lambda key, label: label in rejected)
    min_share = float(cleaning.get("min_share", 0.0))
    if min_share > 0:
        series = drop_micro_catchments(series, weights, min_share)
    max_gap = cleaning.get("max_gap", 3)
    if max_gap is not None and int(max_gap) > 0:
        series = interpolate_missing(series, int(max_gap))
    return series


def _cached_matrix(store: Path, key: str, series, weights) -> SimilarityMatrix:
    cache = store / "cache" / f"matrix-{key}.npz"
    if cache.exists():
        with np.load(cache) as bundle:
            return SimilarityMatrix(bundle["times"].tolist(), bundle["values"])
    matrix = similarity_matrix(series, weights)
    cache.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=cache.parent, prefix=".tmp-", suffix=".npz")
    os.close(fd)
    try:
        np.savez(tmp, times=np.array(matrix.times, dtype=np.int64), values=matrix.values)
        os.replace(tmp, cache)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return matrix


def cmd_analyze(args) -> int:
    config, base = _load_config(args.config)
    store = _store_dir(args)
    out = Path(args.out) if args.out else store / "analysis"
    series = _load_store_snapshots(store)
    weights, weights_hash = _build_weights(config, base, series)
    series = _clean(series, config, weights)
    if not series:
        raise CliError("no snapshots to analyze")

    cleaning_json = json.dumps(config.get("cleaning", {}), sort_keys=True)
    manifest = _read_manifest(store)
    cache_key = _sha256_text(f"{_store_hash(manifest)}|{weights_hash}|{cleaning_json}")[:32]
    matrix = _cached_matrix(store, cache_key, series, weights)

    clustering = config.get("clustering", {})
    linkage = clustering.get("linkage", "average")
    if args.threshold is not None:
        threshold = float(args.threshold)
    elif clustering.get("threshold") is not None:
        threshold = float(clustering["threshold"])
    elif len(matrix) >= 2:
        threshold = adaptive_threshold(
            matrix,
            int(clustering.get("max_modes", 15)),
            int(clustering.get("min_size", 2)),
            float(clustering.get("step", 0.01)),
            linkage,
        )
    else:
        threshold = 0.0
    assignment = hac_cluster(matrix, threshold, linkage)

    detection = config.get("detection", {})
    window = int(detection.get("window", 15))
    delta = float(detection.get("delta", 0.05))
    events = [
        (matrix.times[j + 1], score)
        for j, score in score_boundaries(matrix.consecutive(), window, delta)
    ]

    _atomic_write(out / "matrix.csv", export_similarity_csv(matrix).encode("utf-8"))
    mode_rows = ["time,cluster,is_mode"]
    for time in matrix.times:
        cluster = assignment.cluster_of[time]
        mode_rows.append(f"{time},{cluster},{1 if cluster in assignment.mode_ids else 0}")
    _atomic_write(out / "modes.csv", ("\n".join(mode_rows) + "\n").encode("utf-8"))
    event_rows = ["time,score"] + [f"{t},{score:.6f}" for t, score in events]
    _atomic_write(out / "events.csv", ("\n".join(event_rows) + "\n").encode("utf-8"))
    summary = {
        "cache_key": cache_key,
        "delta": delta,
        "linkage": linkage,
        "n_clusters": assignment.n_clusters,
        "n_events": len(events),
        "n_modes": assignment.n_modes,
        "n_snapshots": len(matrix),
        "threshold": assignment.threshold,
        "window": window,
    }
    _atomic_write(
        out / "summary.json",
        (json.dumps(summary, sort_keys=True, indent=2) + "\n").encode("utf-8"),
    )
    print(
        f"threshold={assignment.threshold:.2f} clusters={assignment.n_clusters} "
        f"modes={assignment.n_modes} events={len(events)}"
    )
    return 0


# -- report --------------------------------------------------------------------


def _load_matrix_csv(path: Path) -> SimilarityMatrix:
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise CliError(f"missing analysis artifact {path}; run analyze first") from None
    lines = [line for line in text.splitlines() if line]
    times = [int(tok) for tok in lines[0].split(",")[1:]]
    values = np.array(
        [[float(tok) for tok in line.split(",")[1:]] for line in lines[1:]], dtype=np.float64
    )
    return SimilarityMatrix(times, values)


def _load_modes_csv(path: Path, threshold: float) -> ModeAssignment | None:
    if not path.exists():
        return None
    lines = [line for line in path.read_text(encoding="utf-8").splitlines() if line]
    times = []
    cluster_of = {}
    modes = set()
    for line in lines[1:]:
        time_tok, cluster_tok, is_mode = line.split(",")
        time, cluster = int(time_tok), int(cluster_tok)
        times.append(time)
        cluster_of[time] = cluster
        if is_mode == "1":
            modes.add(cluster)
    return ModeAssignment(tuple(times), cluster_of, threshold, frozenset(modes))


def cmd_report(args) -> int:
    config, base = _load_config(args.config)
    store = _store_dir(args)
    analysis_dir = Path(args.analysis) if args.analysis else store / "analysis"
    out_dir = Path(args.out) if args.out else analysis_dir

    matrix = _load_matrix_csv(analysis_dir / "matrix.csv")
    summary_path = analysis_dir / "summary.json"
    threshold = 0.0
    if summary_path.exists():
        threshold = float(_load_json(summary_path).get("threshold", 0.0))
    annotations = _load_modes_csv(analysis_dir / "modes.csv", threshold)

    _atomic_write(out_dir / "heatmap.svg", render_heatmap(matrix, annotations).encode("utf-8"))
    produced = ["heatmap.svg"]

    series = _load_store_snapshots(store)
    weights, _ = _build_weights(config, base, series)
    series = _clean(series, config, weights)
    aggregates = [aggregate(snap, weights) for snap in series]
    _atomic_write(out_dir / "stackplot.svg", render_stackplot(aggregates).encode("utf-8"))
    produced.append("stackplot.svg")

    by_time = {snap.time: snap for snap in series}
    for pair in args.transition or []:
        try:
            t_from, t_to = (int(tok) for tok in pair.split(":"))
        except ValueError:
            raise CliError(f"bad --transition {pair!r}; expected FROM:TO epoch times") from None
        if t_from not in by_time or t_to not in by_time:
            raise CliError(f"no snapshot at requested transition times {pair!r}")
        table = render_transition_table(
            transition_matrix(by_time[t_from], by_time[t_to], weights),
            highlight_threshold=args.highlight,
        )
        name = f"transition_{t_from}_{t_to}.txt"
        _atomic_write(out_dir / name, table.encode("utf-8"))
        produced.append(name)

    if args.sankey_traceroutes:
        if not args.sankey_hops:
            raise CliError("--sankey-traceroutes needs --sankey-hops")
        hops = [int(tok) for tok in args.sankey_hops.split(",")]
        records = parse_traceroutes(Path(args.sankey_traceroutes))
        levels = [(hop, hop_snapshot(records, hop)) for hop in hops]
        _atomic_write(out_dir / "sankey.csv", export_sankey(levels, weights).encode("utf-8"))
        produced.append("sankey.csv")

    print("wrote " + " ".join(produced))
    return 0


# -- validate ------------------------------------------------------------------


def _load_detections(path: Path) -> list[int]:
    try:
        lines = [line for line in path.read_text(encoding="utf-8").splitlines() if line]
    except FileNotFoundError:
        raise CliError(f"missing change-event list {path}; run analyze first") from None
    if not lines or lines[0] != "time,score":
        raise CliError(f"{path}: expected events export with header 'time,score'")
    return [int(line.split(",")[0]) for line in lines[1:]]


def cmd_validate(args) -> int:
    store = _store_dir(args) if args.store else None
    if args.events:
        events_path = Path(args.events)
    elif store is not None:
        events_path = store / "analysis" / "events.csv"
    else:
        raise CliError("--events (or --store) is required")
    detections = _load_detections(events_path)
    truth = load_ground_truth(Path(args.truth))
    groups = group_events(truth, args.group_window)
    report = score_detections(detections, groups, args.match_window, strict=args.strict)
    line = report.summary()
    if args.out:
        _atomic_write(Path(args.out), (line + "\n").encode("utf-8"))
    print(line)
    return 0


# -- synth and collect -----------------------------------------------------------


def cmd_synth(args) -> int:
    spec_data = _load_json(Path(args.spec))
    try:
        spec = ScenarioSpec.from_mapping(spec_data)
    except (KeyError, TypeError, ValueError) as exc:
        raise CliError(f"bad scenario spec: {exc}") from None
    snapshots, events = generate_scenario(spec, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_snapshots(snapshots, out / "snapshots.csv")
    write_ground_truth(events, out / "ground_truth.csv")
    print(f"snapshots={len(snapshots)} events={len(events)} seed={args.seed}")
    return 0


def cmd_collect(args) -> int:
    prefixes = [
        line.strip()
        for line in Path(args.prefixes).read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]
    if not prefixes:
        raise CliError(f"no prefixes in {args.prefixes}")
    try:
        snap = ednscs.edns_cs_scan(
            args.hostname,
            prefixes,
            args.resolver,
            time=args.time,
            timeout=args.timeout,
            concurrency=args.concurrency,
            port=args.port,
        )
    except ValueError as exc:
        raise CliError(str(exc)) from None
    write_snapshots([snap], Path(args.out))
    print(f"collected {len(snap)} lookups at time {args.time}")
    return 0


# -- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="routemodes",
        description="Catchment snapshots: similarity, recurring modes, change detection.",
    )
    parser.add_argument("--config", help="study configuration file (JSON)")
    parser.add_argument("--store", help="snapshot store directory")
    parser.add_argument("--seed", type=int, default=0, help="seed for synthetic data")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse configured inputs into the store")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("analyze", help="similarity matrix, modes, change events")
    p.add_argument("--out", help="output directory (default: STORE/analysis)")
    p.add_argument("--threshold", type=float, help="bypass the adaptive threshold sweep")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("report", help="figures and tables from analysis artifacts")
    p.add_argument("--analysis", help="analysis directory (default: STORE/analysis)")
    p.add_argument("--out", help="output directory (default: analysis dir)")
    p.add_argument(
        "--transition",
        action="append",
        metavar="FROM:TO",
        help="emit a transition table between two snapshot times (repeatable)",
    )
    p.add_argument("--highlight", type=float, default=0.0, help="flag threshold for tables")
    p.add_argument("--sankey-traceroutes", help="traceroute record file for a hop study")
    p.add_argument("--sankey-hops", help="comma-separated hop indexes, e.g. 1,2,3,4")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("validate", help="score change events against ground truth")
    p.add_argument("--events", help="events.csv from analyze (default: STORE/analysis)")
    p.add_argument("--truth", required=True, help="ground-truth log (time,operator,visibility)")
    p.add_argument("--group-window", type=int, default=10, help="grouping window, minutes")
    p.add_argument("--match-window", type=int, default=10, help="match window, minutes")
    p.add_argument("--strict", action="store_true", help="count unmatched detections as fp")
    p.add_argument("--out", help="write the summary line to this file")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("synth", help="generate a synthetic study with ground truth")
    p.add_argument("--spec", required=True, help="scenario spec (JSON)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("collect", help="optional live client-subnet lookups")
    p.add_argument("--hostname", required=True)
    p.add_argument("--prefixes", required=True, help="file with one prefix per line")
    p.add_argument("--resolver", required=True)
    p.add_argument("--time", type=int, required=True, help="epoch time stamped on the snapshot")
    p.add_argument("--timeout", type=float, default=3.0)
    p.add_argument("--concurrency", type=int, default=16)
    p.add_argument("--port", type=int, default=53)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_collect)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CliError, ParseError, FileNotFoundError, NotADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
