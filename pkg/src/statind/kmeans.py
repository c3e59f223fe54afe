"""Seeded Lloyd k-means and aggregation of multiple samplings."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .classification import BinaryClassification
from .returns import as_array, demean_cross_sectionally, normalize_returns

# rows per distance chunk is chosen so chunk * k * d stays below this
_CHUNK_ELEMS = 4_000_000


@dataclass(frozen=True)
class ClusterAssignment:
    membership: np.ndarray  # N x K' one-hot, empty clusters dropped
    centers: np.ndarray  # K' x d, mean of member rows
    cluster_of: np.ndarray  # N labels in 0..K'-1
    objective: float
    objective_trace: tuple = field(default=())
    n_iter: int = 0
    converged: bool = False

    @property
    def n_clusters(self) -> int:
        return self.membership.shape[1]


def _sq_distances(x: np.ndarray, centers: np.ndarray) -> np.ndarray:
    n, d = x.shape
    k = centers.shape[0]
    out = np.empty((n, k))
    step = max(1, _CHUNK_ELEMS // max(1, k * d))
    for lo in range(0, n, step):
        diff = x[lo : lo + step, None, :] - centers[None, :, :]
        out[lo : lo + step] = np.einsum("ikd,ikd->ik", diff, diff)
    return out


def _update_centers(x, labels, centers):
    k = centers.shape[0]
    counts = np.bincount(labels, minlength=k)
    sums = np.zeros_like(centers)
    np.add.at(sums, labels, x)
    new = centers.copy()
    live = counts > 0
    # empty clusters keep their previous center
    new[live] = sums[live] / counts[live, None]
    return new


def _objective(x, labels, centers) -> float:
    diff = x - centers[labels]
    return float(np.einsum("ij,ij->", diff, diff))


def kmeans_cluster(x, k: int, iter_max: int = 10, seed: int = 0) -> ClusterAssignment:
    """Lloyd k-means with Forgy initialization drawn from ``numpy.random.default_rng(seed)``.

    Nearest-center ties go to the lowest center index, so identical rows
    always share a label. Iterates until no assignment changes or
    ``iter_max`` center updates have been made. Clusters that end up empty
    are dropped from the output.
    """
    x = as_array(x)
    n = x.shape[0]
    if k < 1 or k > n:
        raise ValueError(f"k must be in [1, N={n}], got {k}")
    if iter_max < 1:
        raise ValueError("iter_max must be >= 1")
    if not np.all(np.isfinite(x)):
        raise ValueError("k-means input contains non-finite entries")

    rng = np.random.default_rng(seed)
    centers = x[np.sort(rng.choice(n, size=k, replace=False))].copy()
    if np.unique(centers, axis=0).shape[0] < k:
        # duplicated starting rows: redraw among distinct rows (as R's kmeans does)
        _, first = np.unique(x, axis=0, return_index=True)
        first.sort()
        k = min(k, first.size)
        centers = x[first[np.sort(rng.choice(first.size, size=k, replace=False))]].copy()
    labels = _sq_distances(x, centers).argmin(axis=1)
    trace = [_objective(x, labels, centers)]

    converged = False
    n_iter = 0
    for n_iter in range(1, iter_max + 1):
        centers = _update_centers(x, labels, centers)
        trace.append(_objective(x, labels, centers))
        new_labels = _sq_distances(x, centers).argmin(axis=1)
        if np.array_equal(new_labels, labels):
            converged = True
            break
        labels = new_labels
    if not converged:
        centers = _update_centers(x, labels, centers)
        trace.append(_objective(x, labels, centers))

    live = np.flatnonzero(np.bincount(labels, minlength=k) > 0)
    remap = np.full(k, -1)
    remap[live] = np.arange(live.size)
    cluster_of = remap[labels]
    membership = np.zeros((n, live.size), dtype=np.int8)
    membership[np.arange(n), cluster_of] = 1
    return ClusterAssignment(
        membership=membership,
        centers=centers[live],
        cluster_of=cluster_of,
        objective=trace[-1],
        objective_trace=tuple(trace),
        n_iter=n_iter,
        converged=converged,
    )


def vote(counts: np.ndarray) -> np.ndarray:
    """Assign each row of an occurrence-count matrix to one column.

    Max count wins; ties go to the column with the largest total, then to
    the lowest column index. Returns the one-hot matrix with empty columns dropped.
    """
    counts = np.asarray(counts)
    totals = counts.sum(axis=0)
    best = counts == counts.max(axis=1, keepdims=True)
    tot_best = np.where(best, totals[None, :], -np.inf).max(axis=1, keepdims=True)
    best &= totals[None, :] == tot_best
    pick = best.argmax(axis=1)
    z = np.zeros(counts.shape, dtype=np.int8)
    z[np.arange(counts.shape[0]), pick] = 1
    return z[:, z.sum(axis=0) > 0]


def aggregate_samplings(
    ret,
    k: int,
    iter_max: int = 10,
    num_try: int = 100,
    seed: int = 0,
    demean: bool = False,
    workers: int = 1,
) -> BinaryClassification:
    """Cluster normalized returns ``num_try`` times and merge the samplings by voting.

    Sampling ``r`` uses seed ``seed + r``. Centers from all samplings are
    stacked and k-means'd into ``k`` groups (seed ``seed + num_try``) to align
    clusters across runs; each stock then goes to the aligned cluster it fell
    into most often. The result can have fewer than ``k`` clusters.
    """
    if num_try < 1:
        raise ValueError("num_try must be >= 1")
    x = as_array(ret)
    if demean:
        x = demean_cross_sectionally(x)
    x = normalize_returns(x)

    def one(r):
        return kmeans_cluster(x, k, iter_max, seed + r)

    if workers > 1 and num_try > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(one, range(num_try)))
    else:
        runs = [one(r) for r in range(num_try)]

    if num_try == 1:
        return BinaryClassification(runs[0].membership)

    stacked_centers = np.vstack([r.centers for r in runs])
    stacked_members = np.hstack([r.membership for r in runs]).astype(np.int64)
    align = kmeans_cluster(stacked_centers, min(k, stacked_centers.shape[0]), iter_max, seed + num_try)
    counts = stacked_members @ align.membership.astype(np.int64)
    return BinaryClassification(vote(counts))
