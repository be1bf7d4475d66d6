"""Cleaning for snapshot series, and construction of weight vectors.

Cleaning never deletes networks: a discarded observation becomes unknown,
a suppressed micro-catchment becomes the other state.  Keeping the
universe stable keeps similarity denominators comparable across cleaning
configurations.

The functional interface does the work; thin transformer classes wrap it
for pipeline composition.
"""

from __future__ import annotations

import csv
import ipaddress
from typing import Callable, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .core import (
    N_RESERVED,
    OTHER_CODE,
    UNKNOWN_CODE,
    CatchmentLabel,
    Snapshot,
    WeightVector,
    align_series,
    check_time_ordered,
)
from .ingest import ParseError

__all__ = [
    "remove_incorrect",
    "drop_micro_catchments",
    "micro_catchment_sites",
    "interpolate_missing",
    "expand_prefix_weights",
    "load_traffic_weights",
    "IncorrectDataFilter",
    "MicroCatchmentFilter",
    "GapInterpolator",
]


def remove_incorrect(
    series: Sequence[Snapshot],
    reject: Callable[[str, CatchmentLabel], bool],
) -> list[Snapshot]:
    """Blank out observations the predicate rejects.

    Rejected entries become unknown rather than disappearing, so the
    network universe is unchanged.
    """
    cleaned = []
    for snap in series:
        codes = snap.codes.copy()
        for pos, (key, label) in enumerate(snap.items()):
            if reject(key, label):
                codes[pos] = UNKNOWN_CODE
        cleaned.append(snap.replace_codes(codes))
    return cleaned


def micro_catchment_sites(
    series: Sequence[Snapshot],
    weights: WeightVector,
    min_share: float,
) -> set[CatchmentLabel]:
    """Sites whose weighted share never reaches ``min_share`` in any snapshot."""
    if not 0 <= min_share < 1:
        raise ValueError("min_share must be in [0, 1)")
    max_share: dict[CatchmentLabel, float] = {}
    for snap in series:
        w = weights.array_for(snap.network_keys)
        total = w.sum()
        if total <= 0:
            continue
        counts = np.bincount(snap.codes, weights=w, minlength=len(snap.labels))
        for code in range(N_RESERVED, len(snap.labels)):
            label = snap.labels[code]
            share = counts[code] / total
            if share > max_share.get(label, -1.0):
                max_share[label] = share
    return {label for label, share in max_share.items() if share < min_share}


def _relabel_to_other(series: Sequence[Snapshot], sites: set[CatchmentLabel]) -> list[Snapshot]:
    out = []
    for snap in series:
        doomed = np.fromiter(
            (lab in sites for lab in snap.labels), dtype=bool, count=len(snap.labels)
        )
        if not doomed.any():
            out.append(snap)
            continue
        lut = np.arange(len(snap.labels), dtype=np.int32)
        lut[doomed] = OTHER_CODE
        out.append(snap.replace_codes(lut[snap.codes]))
    return out


def drop_micro_catchments(
    series: Sequence[Snapshot],
    weights: WeightVector,
    min_share: float,
) -> list[Snapshot]:
    """Relabel negligible sites to the other state, everywhere.

    A site is kept if its weighted share reaches ``min_share`` in any
    snapshot of the series; suppression is all-or-nothing across time so
    labels never flicker.  Reserved labels are never touched.
    """
    return _relabel_to_other(series, micro_catchment_sites(series, weights, min_share))


def interpolate_missing(series: Sequence[Snapshot], max_gap: int = 3) -> list[Snapshot]:
    """Fill unknown runs per network from their nearest known neighbors.

    A maximal unknown run strictly between two known observations is
    filled with the left neighbor's label over its first half and the
    right neighbor's label over the rest (odd middles go left), but only
    when every filled slot would sit within ``max_gap`` observations of
    its neighbor; longer runs are left untouched, which makes the
    operation idempotent.  Leading and trailing runs have no neighbor and
    stay unknown.

    Output snapshots share the union universe of the series.
    """
    if max_gap < 0:
        raise ValueError("max_gap must be nonnegative")
    check_time_ordered(series)
    if not series:
        return []
    times, keys, codes, labels = align_series(series)
    n_rows, n_cols = codes.shape
    if n_rows < 3 or n_cols == 0 or max_gap == 0:
        return [
            Snapshot.from_parts(t, keys, codes[i], labels, validate=False)
            for i, t in enumerate(times)
        ]

    known = codes != UNKNOWN_CODE
    rows = np.arange(n_rows)[:, None]
    # Row index of the nearest known observation at-or-above / at-or-below.
    prev_known = np.maximum.accumulate(np.where(known, rows, -1), axis=0)
    nxt = np.where(known, rows, n_rows)
    next_known = np.minimum.accumulate(nxt[::-1], axis=0)[::-1]

    interior = (~known) & (prev_known >= 0) & (next_known <= n_rows - 1)
    run_len = next_known - prev_known - 1
    half = (run_len + 1) // 2
    fillable = interior & (half <= max_gap)
    take_left = fillable & ((rows - prev_known) <= half)
    take_right = fillable & ~take_left

    left_codes = np.take_along_axis(codes, np.maximum(prev_known, 0), axis=0)
    right_codes = np.take_along_axis(codes, np.minimum(next_known, n_rows - 1), axis=0)
    filled = np.where(take_left, left_codes, np.where(take_right, right_codes, codes))
    filled = filled.astype(np.int32)
    return [
        Snapshot.from_parts(t, keys, filled[i], labels, validate=False)
        for i, t in enumerate(times)
    ]


def _parse_coverage(coverage_prefixes: Sequence[str]) -> list[ipaddress.IPv4Network]:
    nets = []
    for text in coverage_prefixes:
        try:
            net = ipaddress.ip_network(text, strict=True)
        except ValueError as exc:
            raise ValueError(f"bad coverage prefix {text!r}: {exc}") from None
        if net.version != 4 or net.prefixlen > 24:
            raise ValueError(f"coverage prefix must be IPv4 with length <= 24: {text!r}")
        nets.append(net)
    nets.sort(key=lambda n: (int(n.network_address), n.prefixlen))
    for prev, cur in zip(nets, nets[1:]):
        if int(cur.network_address) <= int(prev.broadcast_address):
            raise ValueError(f"overlapping coverage prefixes: {prev} and {cur}")
    return nets


def expand_prefix_weights(
    observed_keys: Sequence[str] | set[str],
    coverage_prefixes: Sequence[str],
) -> WeightVector:
    """Spread each coverage prefix's /24-block count over its observed keys.

    One observation inside a /16 stands for 256 /24 blocks; two
    observations split them evenly.  Keys outside every coverage prefix
    weigh 1.
    """
    nets = _parse_coverage(coverage_prefixes)
    starts = [int(n.network_address) for n in nets]
    ends = [int(n.broadcast_address) for n in nets]

    def locate(address: int) -> int | None:
        import bisect

        i = bisect.bisect_right(starts, address) - 1
        if i >= 0 and address <= ends[i]:
            return i
        return None

    members: dict[int, list[str]] = {}
    outside: list[str] = []
    for key in sorted(observed_keys):
        try:
            addr = int(ipaddress.ip_network(key, strict=True).network_address)
        except ValueError:
            try:
                addr = int(ipaddress.ip_address(key))
            except ValueError:
                raise ValueError(
                    f"observed key {key!r} is neither a prefix nor an address"
                ) from None
        slot = locate(addr)
        if slot is None:
            outside.append(key)
        else:
            members.setdefault(slot, []).append(key)

    weights: dict[str, float] = {key: 1.0 for key in outside}
    for slot, keys in members.items():
        blocks = 2 ** (24 - nets[slot].prefixlen)
        share = blocks / len(keys)
        for key in keys:
            weights[key] = share
    return WeightVector(weights)


def load_traffic_weights(path) -> WeightVector:
    """Read ``network,weight`` rows; a zero-byte file is an empty vector."""
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            return WeightVector({})
        if [h.strip() for h in header] != ["network", "weight"]:
            raise ParseError(path, 1, f"expected header 'network,weight', got {','.join(header)!r}")
        data: dict[str, float] = {}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise ParseError(path, lineno, f"expected 2 fields, got {len(row)}")
            network = row[0].strip()
            if not network:
                raise ParseError(path, lineno, "empty network key")
            try:
                weight = float(row[1])
            except ValueError:
                raise ParseError(path, lineno, f"bad weight {row[1]!r}") from None
            if weight < 0:
                raise ParseError(path, lineno, f"negative weight {weight}")
            if network in data:
                raise ParseError(path, lineno, f"duplicate network {network!r}")
            data[network] = weight
    return WeightVector(data)


# -- pipeline-style wrappers --------------------------------------------------


class IncorrectDataFilter(BaseEstimator, TransformerMixin):
    """Stateless transformer form of :func:`remove_incorrect`."""

    def __init__(self, reject: Callable[[str, CatchmentLabel], bool] = None):
        self.reject = reject

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        if self.reject is None:
            return list(X)
        return remove_incorrect(X, self.reject)


class MicroCatchmentFilter(BaseEstimator, TransformerMixin):
    """Learns the micro-catchment site set on fit, relabels on transform."""

    def __init__(self, min_share: float = 0.0, weights: WeightVector = None):
        self.min_share = min_share
        self.weights = weights

    def fit(self, X, y=None):
        weights = self.weights if self.weights is not None else WeightVector({})
        self.micro_sites_ = micro_catchment_sites(X, weights, self.min_share)
        return self

    def transform(self, X):
        if not hasattr(self, "micro_sites_"):
            raise RuntimeError("MicroCatchmentFilter must be fitted before transform")
        return _relabel_to_other(X, self.micro_sites_)


class GapInterpolator(BaseEstimator, TransformerMixin):
    """Stateless transformer form of :func:`interpolate_missing`."""

    def __init__(self, max_gap: int = 3):
        self.max_gap = max_gap

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        return interpolate_missing(X, self.max_gap)
