"""Aggregate vectors, transition matrices, and latency summaries."""

from __future__ import annotations

import csv
import math
from typing import Sequence

import numpy as np

from .core import (
    ERROR,
    OTHER,
    UNKNOWN,
    AggregateVector,
    CatchmentLabel,
    LatencySample,
    LabelKind,
    Snapshot,
    TransitionMatrix,
    WeightVector,
    align_pair,
    parse_label,
)
from .ingest import ParseError, EmptyInputError

__all__ = [
    "aggregate",
    "transition_matrix",
    "weighted_mean_latency",
    "per_catchment_percentile",
    "load_latency_samples",
]

# Sites first (sorted case-insensitively), then the reserved states.
_RESERVED_ORDER = {ERROR: 0, OTHER: 1, UNKNOWN: 2}


def _label_sort_key(label: CatchmentLabel):
    if label.kind is LabelKind.SITE:
        return (0, label.name.casefold(), label.name)
    return (1, _RESERVED_ORDER[label], "")


def aggregate(snapshot: Snapshot, weights: WeightVector = WeightVector({})) -> AggregateVector:
    """Total weight reaching each catchment, with an unknown bucket always present."""
    w = weights.array_for(snapshot.network_keys)
    counts = np.bincount(snapshot.codes, weights=w, minlength=len(snapshot.labels))
    buckets = {UNKNOWN: float(counts[0])}
    for code in np.unique(snapshot.codes):
        buckets[snapshot.labels[int(code)]] = float(counts[int(code)])
    return AggregateVector(snapshot.time, buckets)


def transition_matrix(
    a: Snapshot, b: Snapshot, weights: WeightVector = WeightVector({})
) -> TransitionMatrix:
    """Weighted count of networks moving between each catchment pair.

    The label axis is the union of labels observed in either snapshot;
    networks absent from one side sit in its unknown bucket.  For two
    identical snapshots the matrix is diagonal and equals the aggregate.
    """
    keys, codes_a, codes_b, labels = align_pair(a, b)
    w = weights.array_for(keys)
    width = len(labels)
    flat = codes_a.astype(np.int64) * width + codes_b
    cells = np.bincount(flat, weights=w, minlength=width * width).reshape(width, width)

    observed = sorted(
        set(np.unique(codes_a)) | set(np.unique(codes_b)),
        key=lambda code: _label_sort_key(labels[int(code)]),
    )
    observed = [int(c) for c in observed]
    picked = cells[np.ix_(observed, observed)]
    axis = tuple(labels[c] for c in observed)
    return TransitionMatrix(a.time, b.time, axis, picked)


def weighted_mean_latency(
    samples: Sequence[LatencySample], weights: WeightVector = WeightVector({})
) -> float:
    """Weighted mean round-trip time over the sampled networks.

    All samples must share one time; a network sampled twice keeps the
    later entry.  Networks without a weight entry weigh 1.
    """
    if not samples:
        raise ValueError("weighted_mean_latency needs at least one sample")
    times = {s.time for s in samples}
    if len(times) > 1:
        raise ValueError(f"samples span multiple times: {sorted(times)}")
    latest: dict[str, LatencySample] = {}
    for sample in samples:
        latest[sample.network] = sample
    num = 0.0
    den = 0.0
    for sample in latest.values():
        w = weights.get(sample.network)
        num += sample.rtt_ms * w
        den += w
    if den <= 0:
        raise ValueError("total weight of sampled networks must be positive")
    return num / den


def per_catchment_percentile(
    samples: Sequence[LatencySample], percentile: float = 90.0
) -> dict[tuple[int, CatchmentLabel], float]:
    """Nearest-rank latency percentile per (time, catchment) group."""
    if not 0 < percentile <= 100:
        raise ValueError("percentile must lie in (0, 100]")
    groups: dict[tuple[int, CatchmentLabel], list[float]] = {}
    for sample in samples:
        groups.setdefault((sample.time, sample.catchment), []).append(sample.rtt_ms)
    result = {}
    for key, rtts in groups.items():
        rtts.sort()
        rank = math.ceil(percentile / 100.0 * len(rtts))
        result[key] = rtts[rank - 1]
    return result


def load_latency_samples(path) -> list[LatencySample]:
    """Read ``time,network,rtt_ms,label`` rows."""
    samples = []
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyInputError(path, 1, "file is empty") from None
        if [h.strip() for h in header] != ["time", "network", "rtt_ms", "label"]:
            raise ParseError(path, 1, f"bad header {','.join(header)!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise ParseError(path, lineno, f"expected 4 fields, got {len(row)}")
            try:
                samples.append(
                    LatencySample(
                        network=row[1].strip(),
                        time=int(row[0]),
                        rtt_ms=float(row[2]),
                        catchment=parse_label(row[3]),
                    )
                )
            except ValueError as exc:
                raise ParseError(path, lineno, str(exc)) from None
    return samples
