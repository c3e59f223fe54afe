"""Independent reference computations used as test oracles.

Nothing here calls the code path it is used to check, except where a
transcription deliberately shares the k-means engine so that aggregation
logic can be compared bit for bit.
"""

from itertools import combinations, product
import math
import statistics

import numpy as np

from statind.kmeans import kmeans_cluster


def pure_normalize(rows):
    """Element-wise normalized returns using only the statistics module."""
    sig = [statistics.stdev(r) for r in rows]
    ls = [math.log(s) for s in sig]
    med = statistics.median(ls)
    mad = 1.4826 * statistics.median([abs(x - med) for x in ls])
    v = math.exp(med - 3 * mad)
    u = [max(s / v, 1.0) for s in sig]
    return [[x / s / uu for x in r] for r, s, uu in zip(rows, sig, u)]


def brute_two_partition(points):
    """Globally optimal 2-means partition by enumerating all splits."""
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    best = (math.inf, None)
    for mask in product([0, 1], repeat=n - 1):
        lab = np.array((0,) + mask)
        if lab.min() == lab.max():
            continue
        g = sum(((pts[lab == a] - pts[lab == a].mean(axis=0)) ** 2).sum() for a in (0, 1))
        if g < best[0] - 1e-12:
            best = (g, lab)
    return best


def brute_rand_index(a, b):
    a, b = list(a), list(b)
    pairs = list(combinations(range(len(a)), 2))
    return sum((a[i] == a[j]) == (b[i] == b[j]) for i, j in pairs) / len(pairs)


def transcribed_aggregate(ret, k, iter_max, num_try, seed, demean):
    """Loop-by-loop transcription of the single-level aggregation routine."""
    ret = np.array(ret, dtype=float)
    if demean:
        ret = ret - ret.mean(axis=0)
    s = np.apply_along_axis(lambda r: np.std(r, ddof=1), 1, ret)
    u = np.log(s)
    med = np.median(u)
    mad = 1.4826 * np.median(np.abs(u - med))
    u = u - (med - 3 * mad)
    u = np.exp(u)
    u[~(u > 1)] = 1
    norm = ret / s[:, None] / u[:, None]

    comb_cent = comb_ind = None
    for i in range(num_try):
        res = kmeans_cluster(norm, k, iter_max, seed + i)
        if num_try == 1:
            return res.membership
        if i == 0:
            comb_cent, comb_ind = res.centers, res.membership
        else:
            comb_cent = np.vstack([comb_cent, res.centers])
            comb_ind = np.hstack([comb_ind, res.membership])

    res = kmeans_cluster(comb_cent, min(k, comb_cent.shape[0]), iter_max, seed + num_try)
    cl = res.cluster_of
    z = np.zeros((ret.shape[0], res.n_clusters))
    for i in range(len(cl)):
        z[:, cl[i]] = z[:, cl[i]] + comb_ind[:, i]
    q = z.sum(axis=0)
    for i in range(z.shape[0]):
        take = z[i] == z[i].max()
        take = take & (q == q[take].max())
        ix = min(np.flatnonzero(take))
        z[i] = 0
        z[i, ix] = 1
    return z[:, z.sum(axis=0) > 0].astype(np.int8)


def direct_sq_distances(x):
    x = np.asarray(x, dtype=float)
    n = len(x)
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            out[i, j] = sum((a - b) ** 2 for a, b in zip(x[i], x[j]))
    return out


def entropy_erank(values):
    vals = [v for v in values if v > 0]
    tot = sum(vals)
    return math.exp(-sum(v / tot * math.log(v / tot) for v in vals))


def assemble_gamma(values, vectors, f):
    """Element-wise assembly of the truncated correlation model."""
    n = vectors.shape[0]
    g = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            g[i, j] = sum(values[a] * vectors[i, a] * vectors[j, a] for a in range(f))
    for i in range(n):
        g[i, i] = 1.0
    return g


def sharpe(h, e, cov):
    # the traded alpha is -E (mean reversion)
    return float(-(h @ e) / math.sqrt(h @ cov @ h))


def grid_best_holdings(e, cov, investment, bounds, step):
    """Best dollar-neutral, gross-I, bounded 5-stock allocation on a grid.

    H1..H3 run over a grid with spacing ``step``; H4 and H5 follow from
    the neutrality and gross constraints (two branches).
    """
    e, cov, b = np.asarray(e), np.asarray(cov), np.asarray(bounds)
    assert e.size == 5
    g1 = np.arange(-b[0], b[0] + step / 2, step)
    g2 = np.arange(-b[1], b[1] + step / 2, step)
    g3 = np.arange(-b[2], b[2] + step / 2, step)
    best_s, best_h = -math.inf, None
    h2, h3 = np.meshgrid(g2, g3, indexing="ij")
    h2, h3 = h2.ravel(), h3.ravel()
    for h1 in g1:
        s = h1 + h2 + h3
        r = investment - (abs(h1) + np.abs(h2) + np.abs(h3))
        for sign in (1, -1):
            h4 = (r - s) / 2 if sign == 1 else -(r + s) / 2
            h5 = -(s + h4)
            ok = (r >= np.abs(s)) & (np.abs(h4) <= b[3]) & (np.abs(h5) <= b[4])
            if sign == 1:
                ok &= h4 >= np.maximum(0, -s) - 1e-12
            else:
                ok &= h4 <= np.minimum(0, -s) + 1e-12
            if not ok.any():
                continue
            hh = np.stack([np.full(ok.sum(), h1), h2[ok], h3[ok], h4[ok], h5[ok]], axis=1)
            num = -(hh @ e)
            den = np.sqrt(np.einsum("ki,ij,kj->k", hh, cov, hh))
            sr = num / den
            j = int(np.argmax(sr))
            if sr[j] > best_s:
                best_s, best_h = float(sr[j]), hh[j]
    return best_s, best_h


def naive_relaxation(dist, k):
    """Pair-list transcription of the relaxation loop, O(n^4) and obvious.

    Pairs (i > j) are listed column by column over the lower triangle,
    stably sorted by distance, then scanned from the front at every step.
    """
    n = len(dist)
    pairs = [(i, j) for j in range(n) for i in range(j + 1, n)]
    pairs.sort(key=lambda p: dist[p[0]][p[1]])  # sort is stable
    w = [0] * n
    m = count = 0
    while count < n:
        for i, j in pairs:
            if w[i] and w[j]:
                continue
            if not w[i] and not w[j] and m >= k:
                continue
            break
        if w[i]:
            w[j] = w[i]
            count += 1
        elif w[j]:
            w[i] = w[j]
            count += 1
        else:
            m += 1
            w[i] = w[j] = m
            count += 2
    return w
