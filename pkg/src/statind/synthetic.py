"""Synthetic panels with planted structure, for tests and experiment scripts."""

from __future__ import annotations

import numpy as np

from .backtest import PricePanel


def planted_returns(sizes, d: int, separation: float = 10.0, noise: float = 1.0, seed: int = 0):
    """Rows drawn around well separated group centers.

    Each group gets a random center with per-coordinate scale ``separation *
    noise``; rows add i.i.d. N(0, noise^2). Returns ``(values, labels)``.
    """
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(len(sizes)), sizes)
    centers = rng.normal(scale=separation * noise, size=(len(sizes), d))
    x = centers[labels] + rng.normal(scale=noise, size=(labels.size, d))
    return x, labels


def nested_planted_returns(groups, subgroups, per_sub, d, coarse=20.0, fine=6.0, noise=1.0, seed=0):
    """Two-level planted structure: ``groups`` super-blobs each holding ``subgroups`` sub-blobs."""
    rng = np.random.default_rng(seed)
    top = rng.normal(scale=coarse, size=(groups, d))
    rows, lab_fine, lab_coarse = [], [], []
    for g in range(groups):
        for s in range(subgroups):
            c = top[g] + rng.normal(scale=fine, size=d)
            rows.append(c + rng.normal(scale=noise, size=(per_sub, d)))
            lab_fine += [g * subgroups + s] * per_sub
            lab_coarse += [g] * per_sub
    return np.vstack(rows), np.array(lab_fine), np.array(lab_coarse)


def factor_returns(n, d, n_factors, factor_vol=0.02, idio_vol=0.005, seed=0):
    """Returns with ``n_factors`` strong orthogonal-ish factors plus small noise; ``(values, labels)``."""
    rng = np.random.default_rng(seed)
    f = rng.normal(scale=factor_vol, size=(n_factors, d))
    labels = np.arange(n) % n_factors
    x = f[labels] + rng.normal(scale=idio_vol, size=(n, d))
    return x, labels


def synthetic_price_panel(n=30, t=80, n_groups=3, reversion=0.3, vol=0.01, volume=5e6, seed=0):
    """Price panel whose overnight moves partially revert intraday.

    Dates run most recent first. Stocks in the same group share a common
    factor, which gives classifications something to find.
    """
    rng = np.random.default_rng(seed)
    groups = np.arange(n) % n_groups
    start = rng.uniform(20, 80, size=n)
    # simulate chronologically, then flip so column 0 is most recent
    o = np.empty((n, t))
    c = np.empty((n, t))
    prev_close = start
    for day in range(t):
        common = rng.normal(scale=vol, size=n_groups)[groups]
        gap = common + rng.normal(scale=vol, size=n)
        open_ = prev_close * np.exp(gap)
        intraday = -reversion * gap + 0.5 * common + rng.normal(scale=vol, size=n)
        close = open_ * np.exp(intraday)
        o[:, day], c[:, day] = open_, close
        prev_close = close
    o, c = o[:, ::-1], c[:, ::-1]
    vol_shares = volume * rng.uniform(0.5, 1.5, size=(n, t))
    ids = tuple(f"S{i:03d}" for i in range(n))
    return PricePanel(open=o, close=c, adj_open=o, adj_close=c, volume=vol_shares, stock_ids=ids)
