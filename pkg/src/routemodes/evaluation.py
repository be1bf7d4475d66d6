"""Ground-truth handling, detection scoring, and synthetic scenarios.

Operator logs record maintenance actions; actions landing close together
are grouped into events so that one multi-step maintenance is judged
once.  Detection quality is then a confusion matrix over event groups,
with detections matching no group reported separately: they are candidate
third-party changes, not automatically false positives.

The scenario generator plants routing modes, churn, coverage gaps and
drains with known ground truth, at desk scale, fully determined by
(spec, seed).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import (
    N_RESERVED,
    RESERVED_LABELS,
    GroundTruthEvent,
    Snapshot,
    Visibility,
    site,
)
from .ingest import EmptyInputError, ParseError

__all__ = [
    "EventGroup",
    "ConfusionReport",
    "group_events",
    "score_detections",
    "SegmentSpec",
    "DrainSpec",
    "ScenarioSpec",
    "generate_scenario",
    "load_ground_truth",
    "write_ground_truth",
]

_VISIBILITY_RANK = {
    Visibility.INTERNAL: 0,
    Visibility.DRAIN: 1,
    Visibility.TRAFFIC_ENGINEERING: 2,
}


@dataclass(frozen=True)
class EventGroup:
    """Consecutive same-operator events treated as one maintenance action.

    Any externally visible member makes the whole group external; the
    reported visibility is the strongest among the members.
    """

    start: int
    end: int
    operator: str
    visibility: Visibility
    members: tuple[GroundTruthEvent, ...]

    @property
    def is_external(self) -> bool:
        return self.visibility.is_external


@dataclass(frozen=True)
class ConfusionReport:
    """Detection quality against grouped ground truth.

    ``extra_detections`` counts detections matching no group at all;
    they are excluded from the rates unless scored in strict mode.
    Degenerate denominators score 1.0.
    """

    tp: int
    fn: int
    tn: int
    fp: int
    extra_detections: int
    accuracy: float
    recall: float
    precision: float

    @classmethod
    def from_counts(cls, tp: int, fn: int, tn: int, fp: int, extra: int) -> "ConfusionReport":
        for name, value in (("tp", tp), ("fn", fn), ("tn", tn), ("fp", fp), ("extra", extra)):
            if value < 0:
                raise ValueError(f"{name} must be nonnegative, got {value}")
        total = tp + tn + fp + fn
        return cls(
            tp=tp,
            fn=fn,
            tn=tn,
            fp=fp,
            extra_detections=extra,
            accuracy=(tp + tn) / total if total else 1.0,
            recall=tp / (tp + fn) if tp + fn else 1.0,
            precision=tp / (tp + fp) if tp + fp else 1.0,
        )

    def summary(self) -> str:
        return (
            f"tp={self.tp} fn={self.fn} tn={self.tn} fp={self.fp} "
            f"extra={self.extra_detections} recall={self.recall:.3f} "
            f"accuracy={self.accuracy:.3f} precision={self.precision:.3f}"
        )


def group_events(
    log: Sequence[GroundTruthEvent], window_minutes: int = 10
) -> list[EventGroup]:
    """Chain same-operator events whose gaps stay within the window."""
    if window_minutes < 0:
        raise ValueError("window_minutes must be nonnegative")
    window = window_minutes * 60
    by_operator: dict[str, list[GroundTruthEvent]] = {}
    for event in log:
        by_operator.setdefault(event.operator, []).append(event)

    groups = []
    for operator in sorted(by_operator):
        events = sorted(by_operator[operator], key=lambda e: e.time)
        chain = [events[0]] if events else []
        for event in events[1:]:
            if event.time - chain[-1].time <= window:
                chain.append(event)
            else:
                groups.append(_finish_group(operator, chain))
                chain = [event]
        if chain:
            groups.append(_finish_group(operator, chain))
    groups.sort(key=lambda g: (g.start, g.operator))
    return groups


def _finish_group(operator: str, chain: list[GroundTruthEvent]) -> EventGroup:
    visibility = max((e.visibility for e in chain), key=_VISIBILITY_RANK.get)
    return EventGroup(
        start=chain[0].time,
        end=chain[-1].time,
        operator=operator,
        visibility=visibility,
        members=tuple(chain),
    )


def score_detections(
    detections: Sequence[int],
    groups: Sequence[EventGroup],
    match_window_minutes: int = 10,
    strict: bool = False,
) -> ConfusionReport:
    """Confusion matrix of detected boundaries against event groups.

    A group counts as detected when any detection lands within the match
    window of its span.  External groups score tp/fn, internal ones
    fp/tn.  Detections matching no group are reported as extras and, in
    strict mode only, added to the false positives.
    """
    if match_window_minutes < 0:
        raise ValueError("match_window_minutes must be nonnegative")
    window = match_window_minutes * 60
    tp = fn = tn = fp = 0
    matched = set()
    for group in groups:
        hits = [d for d in detections if group.start - window <= d <= group.end + window]
        matched.update(hits)
        if group.is_external:
            if hits:
                tp += 1
            else:
                fn += 1
        else:
            if hits:
                fp += 1
            else:
                tn += 1
    extra = sum(1 for d in detections if d not in matched)
    return ConfusionReport.from_counts(tp, fn, tn, fp + (extra if strict else 0), extra)


# -- synthetic scenarios -------------------------------------------------------


@dataclass(frozen=True)
class SegmentSpec:
    """One routing mode: how long it lasts and how much of the universe is
    reassigned when it begins (ignored for the first segment)."""

    length: int
    reassign: float = 0.0

    def __post_init__(self) -> None:
        if self.length < 1:
            raise ValueError("segment length must be >= 1")
        if not 0.0 <= self.reassign <= 1.0:
            raise ValueError("reassign fraction must lie in [0, 1]")


@dataclass(frozen=True)
class DrainSpec:
    """Withdraw a site at snapshot index ``at``; its networks move to the
    target sites with the given proportions (summing to 1)."""

    at: int
    site: str
    targets: tuple[tuple[str, float], ...]

    def __post_init__(self) -> None:
        targets = tuple((str(s), float(f)) for s, f in self.targets)
        object.__setattr__(self, "targets", targets)
        if self.at < 0:
            raise ValueError("drain index must be nonnegative")
        if not targets:
            raise ValueError("drain needs at least one target")
        total = sum(f for _, f in targets)
        if any(f <= 0 for _, f in targets) or abs(total - 1.0) > 1e-9:
            raise ValueError("drain target fractions must be positive and sum to 1")


@dataclass(frozen=True)
class ScenarioSpec:
    """Deterministic description of a synthetic study.

    ``churn`` is the per-snapshot fraction of networks redrawn against the
    segment's base assignment; ``unknown`` the per-snapshot fraction of
    missing observations.  Version-tagged so stored specs stay readable.
    """

    networks: int
    sites: tuple[str, ...]
    segments: tuple[SegmentSpec, ...]
    churn: float = 0.0
    unknown: float = 0.0
    drains: tuple[DrainSpec, ...] = ()
    operator: str = "synthetic"
    start_time: int = 0
    interval: int = 240
    version: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "sites", tuple(self.sites))
        object.__setattr__(self, "segments", tuple(self.segments))
        object.__setattr__(self, "drains", tuple(self.drains))
        if self.version != 1:
            raise ValueError(f"unsupported scenario version {self.version}")
        if self.networks < 1:
            raise ValueError("networks must be >= 1")
        if not self.sites:
            raise ValueError("at least one site is required")
        if len({s.casefold() for s in self.sites}) != len(self.sites):
            raise ValueError("site names must be unique")
        if not self.segments:
            raise ValueError("at least one segment is required")
        for frac, name in ((self.churn, "churn"), (self.unknown, "unknown")):
            if not 0.0 <= frac <= 1.0:
                raise ValueError(f"{name} fraction must lie in [0, 1]")
        if len(self.sites) < 2 and any(seg.reassign > 0 for seg in self.segments[1:]):
            raise ValueError("reassignment needs at least two sites")
        if self.interval < 1:
            raise ValueError("interval must be >= 1 second")
        total = self.total_snapshots
        for drain in self.drains:
            if drain.at >= total:
                raise ValueError(f"drain index {drain.at} beyond the last snapshot")
            if drain.site not in self.sites:
                raise ValueError(f"drained site {drain.site!r} not in the site list")
            for target, _ in drain.targets:
                if target not in self.sites:
                    raise ValueError(f"drain target {target!r} not in the site list")

    @property
    def total_snapshots(self) -> int:
        return sum(seg.length for seg in self.segments)

    @classmethod
    def from_mapping(cls, data: Mapping) -> "ScenarioSpec":
        segments = tuple(
            SegmentSpec(int(seg["length"]), float(seg.get("reassign", 0.0)))
            for seg in data["segments"]
        )
        drains = tuple(
            DrainSpec(
                int(d["at"]),
                str(d["site"]),
                tuple(sorted((str(k), float(v)) for k, v in d["targets"].items())),
            )
            for d in data.get("drains", ())
        )
        return cls(
            networks=int(data["networks"]),
            sites=tuple(str(s) for s in data["sites"]),
            segments=segments,
            churn=float(data.get("churn", 0.0)),
            unknown=float(data.get("unknown", 0.0)),
            drains=drains,
            operator=str(data.get("operator", "synthetic")),
            start_time=int(data.get("start_time", 0)),
            interval=int(data.get("interval", 240)),
            version=int(data.get("version", 1)),
        )


def _network_keys(count: int) -> np.ndarray:
    return np.char.add("n", np.char.zfill(np.arange(count).astype("U10"), 10))


def generate_scenario(
    spec: ScenarioSpec, seed: int
) -> tuple[list[Snapshot], list[GroundTruthEvent]]:
    """Produce a snapshot series with planted, ground-truthed changes.

    Identical (spec, seed) pairs yield identical output.  Every segment
    boundary is logged as a traffic-engineering event and every drain as a
    drain event, stamped with the first affected snapshot's time.
    """
    rng = np.random.default_rng(seed)
    n = spec.networks
    n_sites = len(spec.sites)
    keys = _network_keys(n)
    labels = RESERVED_LABELS + tuple(site(s) for s in spec.sites)
    site_index = {name: i for i, name in enumerate(spec.sites)}

    times = [spec.start_time + i * spec.interval for i in range(spec.total_snapshots)]
    segment_starts = []
    cursor = 0
    for seg in spec.segments:
        segment_starts.append(cursor)
        cursor += seg.length

    drains_at: dict[int, list[DrainSpec]] = {}
    for drain in spec.drains:
        drains_at.setdefault(drain.at, []).append(drain)

    base = rng.integers(0, n_sites, size=n)
    events: list[GroundTruthEvent] = []
    snapshots: list[Snapshot] = []
    segment_of = {start: seg for start, seg in zip(segment_starts, spec.segments)}

    for i, time in enumerate(times):
        seg = segment_of.get(i)
        if seg is not None and i != 0:
            mask = rng.random(n) < seg.reassign
            moved = int(mask.sum())
            if moved:
                base[mask] = (base[mask] + rng.integers(1, n_sites, size=moved)) % n_sites
            events.append(GroundTruthEvent(time, spec.operator, Visibility.TRAFFIC_ENGINEERING))
        for drain in drains_at.get(i, ()):
            selected = np.flatnonzero(base == site_index[drain.site])
            if len(selected):
                cum = np.cumsum([f for _, f in drain.targets])
                picks = np.searchsorted(cum, rng.random(len(selected)), side="right")
                picks = np.minimum(picks, len(drain.targets) - 1)
                targets = np.array(
                    [site_index[t] for t, _ in drain.targets], dtype=base.dtype
                )
                base[selected] = targets[picks]
            events.append(GroundTruthEvent(time, spec.operator, Visibility.DRAIN))

        current = base.copy()
        if spec.churn > 0:
            churned = rng.random(n) < spec.churn
            count = int(churned.sum())
            if count:
                current[churned] = rng.integers(0, n_sites, size=count)
        codes = (current + N_RESERVED).astype(np.int32)
        if spec.unknown > 0:
            codes[rng.random(n) < spec.unknown] = 0
        snapshots.append(Snapshot.from_parts(time, keys, codes, labels, validate=i == 0))

    events.sort(key=lambda e: (e.time, _VISIBILITY_RANK[e.visibility]))
    return snapshots, events


# -- ground-truth files --------------------------------------------------------

_VISIBILITY_TOKEN = {v.value: v for v in Visibility}


def load_ground_truth(path) -> list[GroundTruthEvent]:
    """Read ``time,operator,visibility`` rows (visibility: internal/drain/te)."""
    events = []
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyInputError(path, 1, "file is empty") from None
        if [h.strip() for h in header] != ["time", "operator", "visibility"]:
            raise ParseError(path, 1, f"bad header {','.join(header)!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise ParseError(path, lineno, f"expected 3 fields, got {len(row)}")
            token = row[2].strip().casefold()
            if token not in _VISIBILITY_TOKEN:
                raise ParseError(path, lineno, f"bad visibility {row[2]!r}")
            try:
                time = int(row[0])
            except ValueError:
                raise ParseError(path, lineno, f"bad time {row[0]!r}") from None
            operator = row[1].strip()
            if not operator:
                raise ParseError(path, lineno, "empty operator")
            events.append(GroundTruthEvent(time, operator, _VISIBILITY_TOKEN[token]))
    return events


def write_ground_truth(events: Iterable[GroundTruthEvent], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["time", "operator", "visibility"])
        for event in sorted(events, key=lambda e: (e.time, e.operator, e.visibility.value)):
            writer.writerow([event.time, event.operator, event.visibility.value])
