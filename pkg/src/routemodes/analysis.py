"""Pairwise similarity, mode discovery, and change detection.

Similarity between two snapshots is the weighted fraction of networks
whose catchment label is unchanged, counting every unknown observation as
changed.  The value is therefore capped by observation coverage: two
identical snapshots that each miss half their networks score around 0.5,
not 1.0.

Modes are found by agglomerative clustering over distance 1 - similarity,
cut at a threshold that can be chosen adaptively by sweeping candidate
thresholds until the clustering is compact enough.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage as scipy_linkage
from scipy.spatial.distance import squareform
from sklearn.base import BaseEstimator, ClusterMixin

from .core import (
    UNKNOWN_CODE,
    ModeAssignment,
    SimilarityMatrix,
    Snapshot,
    WeightVector,
    align_series,
)

__all__ = [
    "similarity",
    "similarity_matrix",
    "hac_cluster",
    "adaptive_threshold",
    "mode_phi_range",
    "detect_changes",
    "score_boundaries",
    "ModeClusterer",
    "ChangeDetector",
]

LINKAGE_METHODS = ("average", "single")


def _phi_cell(codes_a: np.ndarray, codes_b: np.ndarray, w: np.ndarray | None, total: float) -> float:
    # TODO(known-only variant): an alternative similarity that drops
    # unknown networks from the denominator would change `total` here.
    matched = (codes_a == codes_b) & (codes_a != UNKNOWN_CODE)
    if w is None:
        return np.count_nonzero(matched) / total
    return float(w[matched].sum() / total)


def _weights_for(weights: WeightVector, keys: np.ndarray) -> tuple[np.ndarray | None, float]:
    if not len(keys):
        raise ValueError("similarity is undefined over an empty network universe")
    if not len(weights):
        return None, float(len(keys))
    w = weights.array_for(keys)
    total = float(w.sum())
    if total <= 0:
        raise ValueError("total weight of the network universe must be positive")
    return w, total


def similarity(a: Snapshot, b: Snapshot, weights: WeightVector = WeightVector({})) -> float:
    """Weighted fraction of networks with the same known catchment in both.

    The universe is the union of the two snapshots' keys; a network absent
    from one side is unknown there and counts as changed.
    """
    _, keys, codes, _ = align_series([a, b])
    w, total = _weights_for(weights, keys)
    return _phi_cell(codes[0], codes[1], w, total)


def _shared_universe(series: Sequence[Snapshot]) -> bool:
    first = series[0].network_keys
    return all(
        s.network_keys is first or np.array_equal(s.network_keys, first)
        for s in series[1:]
    )


def similarity_matrix(
    series: Sequence[Snapshot], weights: WeightVector = WeightVector({})
) -> SimilarityMatrix:
    """All-pairs similarity; each unordered pair is computed once.

    Snapshots sharing one universe (the canonical pipeline output) take a
    vectorized path; otherwise each cell aligns its own pair.
    """
    if not series:
        raise ValueError("similarity_matrix needs at least one snapshot")
    n = len(series)
    values = np.empty((n, n), dtype=np.float64)
    if _shared_universe(series):
        times, keys, codes, _ = align_series(series)
        w, total = _weights_for(weights, keys)
        for i in range(n):
            for j in range(i, n):
                phi = _phi_cell(codes[i], codes[j], w, total)
                values[i, j] = phi
                values[j, i] = phi
    else:
        times = [s.time for s in series]
        for i in range(n):
            for j in range(i, n):
                phi = similarity(series[i], series[j], weights)
                values[i, j] = phi
                values[j, i] = phi
    return SimilarityMatrix(times, values)


def _dendrogram(matrix: SimilarityMatrix, linkage: str) -> np.ndarray:
    if linkage not in LINKAGE_METHODS:
        raise ValueError(f"linkage must be one of {LINKAGE_METHODS}, got {linkage!r}")
    distance = 1.0 - matrix.values
    return scipy_linkage(squareform(distance, checks=False), method=linkage)


def _cut(tree: np.ndarray, n: int, threshold: float) -> np.ndarray:
    if n == 1:
        return np.zeros(1, dtype=np.int64)
    flat = fcluster(tree, t=threshold, criterion="distance")
    return np.asarray(flat, dtype=np.int64)


def _assignment_from_flat(
    matrix: SimilarityMatrix, flat: np.ndarray, threshold: float, min_mode_size: int = 2
) -> ModeAssignment:
    earliest: dict[int, int] = {}
    sizes: dict[int, int] = {}
    for time, raw in zip(matrix.times, flat):
        raw = int(raw)
        sizes[raw] = sizes.get(raw, 0) + 1
        if raw not in earliest or time < earliest[raw]:
            earliest[raw] = time
    ordered = sorted(earliest, key=lambda raw: earliest[raw])
    rename = {raw: rank for rank, raw in enumerate(ordered)}
    cluster_of = {time: rename[int(raw)] for time, raw in zip(matrix.times, flat)}
    mode_ids = frozenset(rename[raw] for raw, size in sizes.items() if size >= min_mode_size)
    return ModeAssignment(matrix.times, cluster_of, float(threshold), mode_ids)


def hac_cluster(
    matrix: SimilarityMatrix, threshold: float, linkage: str = "average"
) -> ModeAssignment:
    """Agglomerate snapshots; merging stops once the linkage distance
    between the closest clusters exceeds ``threshold``.

    Cluster ids are ordered by earliest member time; clusters with at
    least two members are designated modes.
    """
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must lie in [0, 1]")
    if len(set(matrix.times)) != len(matrix.times):
        raise ValueError("duplicate timestamps in similarity matrix")
    if len(matrix) == 1:
        return _assignment_from_flat(matrix, np.zeros(1, dtype=np.int64), threshold)
    tree = _dendrogram(matrix, linkage)
    flat = _cut(tree, len(matrix), threshold)
    return _assignment_from_flat(matrix, flat, threshold)


def _sweep_thresholds(step: float) -> list[float]:
    if not 0 < step <= 1:
        raise ValueError("step must lie in (0, 1]")
    count = int(math.floor(1.0 / step + 1e-9))
    values = [round(i * step, 10) for i in range(count + 1)]
    if values[-1] < 1.0:
        values.append(1.0)
    return values


def adaptive_threshold(
    matrix: SimilarityMatrix,
    max_modes: int = 15,
    min_size: int = 2,
    step: float = 0.01,
    linkage: str = "average",
) -> float:
    """First swept threshold giving a compact clustering.

    Thresholds are tried in ascending order; a candidate qualifies when
    the clustering has fewer than ``max_modes`` clusters and its largest
    cluster holds at least ``min_size`` snapshots.  Falls back to 1.0 when
    the sweep never qualifies.
    """
    if len(matrix) < 2:
        raise ValueError("adaptive_threshold needs at least two snapshots")
    if max_modes < 1 or min_size < 1:
        raise ValueError("max_modes and min_size must be positive")
    tree = _dendrogram(matrix, linkage)
    for threshold in _sweep_thresholds(step):
        flat = _cut(tree, len(matrix), threshold)
        sizes = np.bincount(flat)
        n_clusters = int(np.count_nonzero(sizes))
        if n_clusters < max_modes and int(sizes.max()) >= min_size:
            return float(threshold)
    return 1.0


def mode_phi_range(
    matrix: SimilarityMatrix,
    assignment: ModeAssignment,
    mode_a: int,
    mode_b: int,
) -> tuple[float, float]:
    """Min and max similarity across two modes (or within one)."""
    clusters = set(assignment.cluster_of.values())
    for mode in (mode_a, mode_b):
        if mode not in clusters:
            raise KeyError(f"no cluster with id {mode}")
    index_of = {t: i for i, t in enumerate(matrix.times)}
    members_a = [index_of[t] for t in assignment.members(mode_a)]
    members_b = [index_of[t] for t in assignment.members(mode_b)]
    if mode_a == mode_b:
        if len(members_a) < 2:
            raise ValueError(f"intra-mode range of a singleton cluster {mode_a} is undefined")
        cells = [
            matrix.values[i, j] for k, i in enumerate(members_a) for j in members_a[k + 1 :]
        ]
    else:
        cells = [matrix.values[i, j] for i in members_a for j in members_b]
    return float(min(cells)), float(max(cells))


def score_boundaries(phis: Sequence[float], window: int = 15, delta: float = 0.05) -> list[tuple[int, float]]:
    """Boundaries whose similarity drops below the trailing median.

    The score of boundary ``j`` is the median of up to ``window``
    preceding consecutive similarities minus the boundary's own; early
    boundaries use whatever history exists, and the very first has none,
    so it never scores as an event.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    events = []
    for j, phi in enumerate(phis):
        baseline = float(np.median(phis[max(0, j - window) : j])) if j else float(phi)
        score = baseline - float(phi)
        if score > delta:
            events.append((j, score))
    return events


def detect_changes(
    series: Sequence[Snapshot],
    weights: WeightVector = WeightVector({}),
    window: int = 15,
    delta: float = 0.05,
) -> list[tuple[int, float]]:
    """Boundary times where consecutive similarity drops sharply.

    Each event is ``(time of the first snapshot after the drop, score)``
    with the score from :func:`score_boundaries`.
    """
    if len(series) < 2:
        raise ValueError("detect_changes needs at least two snapshots")
    if _shared_universe(series):
        times, keys, codes, _ = align_series(series)
        w, total = _weights_for(weights, keys)
        phis = [
            _phi_cell(codes[i], codes[i + 1], w, total) for i in range(len(series) - 1)
        ]
    else:
        times = [s.time for s in series]
        phis = [similarity(a, b, weights) for a, b in zip(series, series[1:])]
    return [(times[j + 1], score) for j, score in score_boundaries(phis, window, delta)]


# -- estimator wrappers --------------------------------------------------------


def _as_similarity(X) -> SimilarityMatrix:
    if isinstance(X, SimilarityMatrix):
        return X
    values = np.asarray(X, dtype=np.float64)
    if values.ndim != 2 or values.shape[0] != values.shape[1]:
        raise ValueError("expected a square similarity matrix")
    return SimilarityMatrix(range(len(values)), values)


class ModeClusterer(BaseEstimator, ClusterMixin):
    """Discover recurring routing modes from a similarity matrix.

    Accepts a :class:`SimilarityMatrix` or a square array of similarities
    in [0, 1].  With ``threshold=None`` the cut distance is chosen by the
    adaptive sweep.  After fitting, ``labels_`` holds one cluster id per
    snapshot and ``mode_ids_`` the clusters with at least two members.
    """

    def __init__(
        self,
        threshold: float | None = None,
        max_modes: int = 15,
        min_size: int = 2,
        step: float = 0.01,
        linkage: str = "average",
    ):
        self.threshold = threshold
        self.max_modes = max_modes
        self.min_size = min_size
        self.step = step
        self.linkage = linkage

    def fit(self, X, y=None):
        matrix = _as_similarity(X)
        if self.threshold is None:
            threshold = adaptive_threshold(
                matrix, self.max_modes, self.min_size, self.step, self.linkage
            )
        else:
            threshold = float(self.threshold)
        assignment = hac_cluster(matrix, threshold, self.linkage)
        self.assignment_ = assignment
        self.threshold_ = assignment.threshold
        self.labels_ = assignment.labels_array()
        self.mode_ids_ = assignment.mode_ids
        self.n_clusters_ = assignment.n_clusters
        return self


class ChangeDetector(BaseEstimator):
    """Flag boundaries where routing shifted against the recent baseline.

    Fit on a time-ordered snapshot list (or a precomputed
    :class:`SimilarityMatrix`); ``events_`` then holds the flagged
    (time, score) pairs.
    """

    def __init__(self, window: int = 15, delta: float = 0.05, weights: WeightVector | None = None):
        self.window = window
        self.delta = delta
        self.weights = weights

    def fit(self, X, y=None):
        weights = self.weights if self.weights is not None else WeightVector({})
        if isinstance(X, SimilarityMatrix):
            phis = X.consecutive()
            events = [
                (X.times[j + 1], score)
                for j, score in score_boundaries(phis, self.window, self.delta)
            ]
        else:
            events = detect_changes(list(X), weights, self.window, self.delta)
        self.events_ = events
        self.n_events_ = len(events)
        return self

    def fit_predict(self, X, y=None):
        return [time for time, _ in self.fit(X).events_]
