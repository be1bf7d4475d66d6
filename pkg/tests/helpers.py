"""Shared fixtures and independent reference implementations.

The reference functions here are deliberately plain dict-and-loop Python:
they re-derive expected values along a different path than the library's
vectorized code so the two can be compared exactly.
"""

from __future__ import annotations

import numpy as np

from routemodes import ERROR, OTHER, UNKNOWN, Snapshot, site

# Reference transition counts for one observed anycast drain step
# (initial state rows, subsequent state columns).
GROOT_SITES = ("CMH", "NAP", "STR", "NRT", "SAT", "HNL", "err", "oth")
GROOT_DRAIN_STEP = {
    "CMH": (1352, 0, 0, 1, 0, 0, 16, 0),
    "NAP": (0, 1939, 0, 1, 0, 0, 272, 0),
    "STR": (0, 3097, 625, 4, 0, 0, 1542, 0),
    "NRT": (1, 2, 0, 985, 0, 0, 30, 0),
    "SAT": (1, 0, 0, 1, 472, 0, 2, 0),
    "HNL": (0, 0, 0, 0, 0, 12, 1, 0),
    "err": (17, 45, 15, 14, 7, 0, 309, 0),
    "oth": (0, 0, 0, 0, 0, 0, 1, 46),
}

# Aggregate counts for one observed snapshot of the same service.
GROOT_AGGREGATE = {
    "CMH": 1350,
    "NAP": 2200,
    "STR": 5200,
    "NRT": 1000,
    "SAT": 480,
    "HNL": 10,
    "err": 560,
    "oth": 50,
}


def groot_label(name: str):
    if name == "err":
        return ERROR
    if name == "oth":
        return OTHER
    return site(name)


def build_transition_fixture(t_from: int = 1000, t_to: int = 1240) -> tuple[Snapshot, Snapshot]:
    """Two snapshots whose transition matrix equals GROOT_DRAIN_STEP exactly."""
    entries_a = {}
    entries_b = {}
    serial = 0
    for from_name in GROOT_SITES:
        for to_name, count in zip(GROOT_SITES, GROOT_DRAIN_STEP[from_name]):
            for _ in range(count):
                key = f"net{serial:06d}"
                serial += 1
                entries_a[key] = groot_label(from_name)
                entries_b[key] = groot_label(to_name)
    return Snapshot(t_from, entries_a), Snapshot(t_to, entries_b)


def build_aggregate_fixture(time: int = 500) -> Snapshot:
    """Snapshot whose uniform-weight aggregate equals GROOT_AGGREGATE."""
    entries = {}
    serial = 0
    for name, count in GROOT_AGGREGATE.items():
        for _ in range(count):
            entries[f"net{serial:06d}"] = groot_label(name)
            serial += 1
    return Snapshot(time, entries)


# -- reference implementations -------------------------------------------------


def phi_reference(a: Snapshot, b: Snapshot, weights: dict[str, float]) -> float:
    """Similarity recomputed entry by entry over the union universe."""
    universe = set(a.entries) | set(b.entries)
    ea, eb = a.entries, b.entries
    num = 0.0
    den = 0.0
    for key in sorted(universe):
        w = weights.get(key, 1.0)
        den += w
        la = ea.get(key, UNKNOWN)
        lb = eb.get(key, UNKNOWN)
        if la == lb and la != UNKNOWN:
            num += w
    if den <= 0:
        raise ValueError("zero total weight")
    return num / den


def transition_reference(a: Snapshot, b: Snapshot, weights: dict[str, float]) -> dict:
    """Transition cells recomputed entry by entry over the union universe."""
    universe = set(a.entries) | set(b.entries)
    ea, eb = a.entries, b.entries
    cells: dict[tuple, float] = {}
    for key in sorted(universe):
        pair = (ea.get(key, UNKNOWN), eb.get(key, UNKNOWN))
        cells[pair] = cells.get(pair, 0.0) + weights.get(key, 1.0)
    return cells


def interpolate_reference(column: list, max_gap: int) -> list:
    """Per-network gap fill, re-derived run by run.

    A run of unknowns strictly between two known labels is filled only if
    every slot lands within ``max_gap`` of its assigned neighbor (first
    ceil(L/2) slots belong to the left neighbor, the rest to the right);
    otherwise the run is untouched.
    """
    out = list(column)
    n = len(out)
    i = 0
    while i < n:
        if out[i] != UNKNOWN:
            i += 1
            continue
        start = i
        while i < n and out[i] == UNKNOWN:
            i += 1
        end = i  # run is [start, end)
        if start == 0 or end == n:
            continue
        length = end - start
        half = (length + 1) // 2
        if half > max_gap:
            continue
        for offset in range(length):
            position = offset + 1
            out[start + offset] = column[start - 1] if position <= half else column[end]
    return out


def random_snapshot_pool(rng: np.random.Generator, n_networks: int, n_snapshots: int,
                         n_sites: int = 4, absent_rate: float = 0.15,
                         unknown_rate: float = 0.15, times=None) -> list[Snapshot]:
    """Random small snapshots with differing universes and unknowns."""
    sites = [site(f"S{i}") for i in range(n_sites)]
    keys = [f"k{i:03d}" for i in range(n_networks)]
    series = []
    for j in range(n_snapshots):
        entries = {}
        for key in keys:
            roll = rng.random()
            if roll < absent_rate:
                continue
            if roll < absent_rate + unknown_rate:
                entries[key] = UNKNOWN
            else:
                entries[key] = sites[int(rng.integers(n_sites))]
        series.append(Snapshot(100 + j if times is None else times[j], entries))
    return series
