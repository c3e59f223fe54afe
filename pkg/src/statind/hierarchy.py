"""Multilevel classifications: bottom-up, top-down and relaxation clustering."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .classification import BinaryClassification, MultilevelClassification
from .kmeans import aggregate_samplings
from .returns import as_array, demean_cross_sectionally, normalize_returns


def _check_k_vec(k_vec: Sequence[int], n: int) -> list[int]:
    k_vec = [int(k) for k in k_vec]
    if not k_vec:
        raise ValueError("k_vec must have at least one level")
    if any(k < 1 for k in k_vec):
        raise ValueError("cluster counts must be >= 1")
    if any(a <= b for a, b in zip(k_vec, k_vec[1:])):
        raise ValueError(f"k_vec must be strictly decreasing, got {tuple(k_vec)}")
    if k_vec[0] > n:
        raise ValueError(f"K_1 = {k_vec[0]} exceeds the number of stocks N = {n}")
    return k_vec


def _stack_levels(
    ret,
    k_vec: Sequence[int],
    do_demean: Sequence[bool] | None,
    norm_cl_ret: bool,
    engine: Callable[[np.ndarray, int, bool, int], np.ndarray],
) -> MultilevelClassification:
    x = as_array(ret)
    k_vec = _check_k_vec(k_vec, x.shape[0])
    if do_demean is None:
        do_demean = [False] * len(k_vec)
    if len(do_demean) != len(k_vec):
        raise ValueError("do_demean needs one flag per level")

    levels = []
    stock_level = None
    for mu, k in enumerate(k_vec):
        if k >= x.shape[0]:
            # fewer aggregated rows than requested clusters: nothing to merge
            ind = np.eye(x.shape[0], dtype=np.int64)
        else:
            ind = engine(x, k, bool(do_demean[mu]), mu).astype(np.int64)
        stock_level = ind if stock_level is None else np.minimum(stock_level @ ind, 1)
        levels.append(BinaryClassification(stock_level))
        if mu + 1 < len(k_vec):
            x = ind.T @ (normalize_returns(x) if norm_cl_ret else x)
    return MultilevelClassification(tuple(levels))


def bottom_up(
    ret,
    k_vec: Sequence[int],
    iter_max: int = 10,
    num_try: int = 100,
    do_demean: Sequence[bool] | None = None,
    norm_cl_ret: bool = False,
    seed: int = 0,
    workers: int = 1,
) -> MultilevelClassification:
    """Build levels from the most granular upward.

    Level 1 clusters the stocks into ``k_vec[0]`` groups. Each higher level
    clusters the within-cluster sums of the previous level's returns (raw, or
    normalized when ``norm_cl_ret``). Level ``mu`` uses seeds starting at
    ``seed + mu * (num_try + 1)``.
    """
    def engine(x, k, demean, mu):
        return aggregate_samplings(
            x, k, iter_max, num_try, seed + mu * (num_try + 1), demean=demean, workers=workers
        ).membership

    return _stack_levels(ret, k_vec, do_demean, norm_cl_ret, engine)


def top_down(
    ret,
    l_rev: Sequence[int],
    iter_max: int = 10,
    num_try: int = 100,
    seed: int = 0,
    workers: int = 1,
) -> MultilevelClassification:
    """Recursively split clusters, least granular level first.

    ``l_rev`` gives the number of sub-clusters per split, starting with the
    split of the whole universe. A cluster with no more members than the
    requested split is carried forward unchanged. Returns levels ordered
    most granular first.
    """
    x = as_array(ret)
    n = x.shape[0]
    l_rev = [int(v) for v in l_rev]
    if not l_rev or any(v < 1 for v in l_rev):
        raise ValueError("split counts must be >= 1")

    prev = np.ones((n, 1), dtype=np.int8)
    built = []
    calls = 0
    for split in l_rev:
        cols = []
        for a in range(prev.shape[1]):
            take = prev[:, a] > 0
            size = int(take.sum())
            if size <= split:
                cols.append(take.astype(np.int8)[:, None])
                continue
            sub = aggregate_samplings(
                x[take], split, iter_max, num_try, seed + calls * (num_try + 1), workers=workers
            ).membership
            calls += 1
            block = np.zeros((n, sub.shape[1]), dtype=np.int8)
            block[take] = sub
            cols.append(block)
        prev = np.hstack(cols)
        built.append(BinaryClassification(prev))
    return MultilevelClassification(tuple(reversed(built)))


def pairwise_sq_distances(x: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances between rows via the Gram-matrix identity."""
    x = as_array(x)
    gram = x @ x.T
    diag = np.diag(gram)
    return diag[:, None] + diag[None, :] - 2.0 * gram


def relax_labels(dist: np.ndarray, k: int) -> np.ndarray:
    """Run the relaxation scheme on a symmetric distance matrix.

    Pairs are visited in ascending distance (ties broken by column-major
    position in the lower triangle). While fewer than ``k`` clusters exist, a
    pair of unassigned stocks founds a new cluster; a pair with one assigned
    member pulls the other one in. Once ``k`` clusters exist only the latter
    move is allowed. Returns 1-based labels.
    """
    dist = np.asarray(dist, dtype=float)
    n = dist.shape[0]
    if k < 1:
        raise ValueError("k must be >= 1")
    if n < 2:
        raise ValueError("need at least two stocks")
    if not np.all(np.isfinite(dist)):
        raise ValueError("non-finite pairwise distances")

    jj, ii = np.triu_indices(n, 1)  # ii > jj, column-major order over the lower triangle
    col_major = np.lexsort((ii, jj))
    ii, jj = ii[col_major], jj[col_major]
    order = np.argsort(dist[ii, jj], kind="stable")
    rank = np.empty(order.size, dtype=np.int64)
    rank[order] = np.arange(order.size)
    rank_mat = np.zeros((n, n), dtype=np.int64)
    rank_mat[ii, jj] = rank
    rank_mat[jj, ii] = rank
    pair_i, pair_j = ii[order], jj[order]

    w = np.zeros(n, dtype=np.int64)
    # best link from each unassigned stock to the assigned set, by pair rank
    best_rank = np.full(n, np.iinfo(np.int64).max)
    best_to = np.full(n, -1)

    def attach(p):
        r = rank_mat[:, p]
        better = (w == 0) & (r < best_rank)
        better[p] = False
        best_rank[better] = r[better]
        best_to[better] = p

    m = 0
    count = 0
    ptr = 0
    while count < n:
        while ptr < order.size and (w[pair_i[ptr]] or w[pair_j[ptr]]):
            ptr += 1
        free = np.flatnonzero(w == 0)
        link = free[best_rank[free].argmin()] if m > 0 else -1
        link_rank = best_rank[link] if link >= 0 else np.iinfo(np.int64).max
        if m < k and ptr < order.size and ptr < link_rank:
            i, j = pair_i[ptr], pair_j[ptr]
            m += 1
            w[i] = w[j] = m
            count += 2
            attach(i)
            attach(j)
        else:
            w[link] = w[best_to[link]]
            count += 1
            attach(link)
    return w


def relaxation_cluster(ret, k: int, demean: bool = False) -> BinaryClassification:
    """Deterministic agglomerative classification into at most ``k`` clusters."""
    x = as_array(ret)
    if demean:
        x = demean_cross_sectionally(x)
    x = normalize_returns(x)
    labels = relax_labels(pairwise_sq_distances(x), k)
    return BinaryClassification.from_labels(labels)


def relaxation_all(
    ret,
    k_vec: Sequence[int],
    do_demean: Sequence[bool] | None = None,
    norm_cl_ret: bool = False,
) -> MultilevelClassification:
    def engine(x, k, demean, mu):
        return relaxation_cluster(x, k, demean).membership

    return _stack_levels(ret, k_vec, do_demean, norm_cl_ret, engine)
