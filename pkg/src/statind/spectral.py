"""Correlation spectra, effective rank, dynamic cluster counts and statistical risk models."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .classification import MultilevelClassification
from .returns import DataError, as_array

# eigenvalues below this fraction of the largest one count as zero
RANK_CUTOFF = 1e-12


@dataclass(frozen=True)
class EigenSystem:
    values: np.ndarray  # descending
    vectors: np.ndarray  # N x L, column a pairs with values[a]


@dataclass(frozen=True)
class RiskModel:
    specific_variance: np.ndarray
    factor_loadings: np.ndarray  # N x F
    factor_cov: np.ndarray | None = None  # F x F; identity when None

    @property
    def covariance(self) -> np.ndarray:
        b = self.factor_loadings
        phi = np.eye(b.shape[1]) if self.factor_cov is None else self.factor_cov
        return np.diag(self.specific_variance) + b @ phi @ b.T

    @property
    def n_factors(self) -> int:
        return self.factor_loadings.shape[1]


def _standardized(ret) -> np.ndarray:
    x = as_array(ret)
    sd = x.std(axis=1, ddof=1)
    if np.any(~(sd > 0)):
        raise DataError(f"degenerate row variance for row {int(np.flatnonzero(~(sd > 0))[0])}")
    z = x / sd[:, None]
    return z - z.mean(axis=1, keepdims=True)


def correlation_matrix(ret) -> np.ndarray:
    z = _standardized(ret)
    return z @ z.T / (z.shape[1] - 1)


def correlation_eigen(ret, method: str = "auto") -> EigenSystem:
    """Eigenpairs of the sample correlation matrix of the rows.

    With ``d - 1 <= N`` the nonzero spectrum is obtained from the d x d Gram
    matrix of the standardized series, which is much cheaper than the N x N
    problem. Only eigenvalues above the numerical-rank cutoff are returned on
    that path.
    """
    z = _standardized(ret)
    n, d = z.shape
    if method == "auto":
        method = "gram" if d - 1 <= n else "direct"
    if method == "direct":
        vals, vecs = np.linalg.eigh(z @ z.T / (d - 1))
        idx = np.argsort(vals)[::-1]
        return EigenSystem(vals[idx], vecs[:, idx])
    if method != "gram":
        raise ValueError(f"unknown method {method!r}")
    vals, u = np.linalg.eigh(z.T @ z / (d - 1))
    idx = np.argsort(vals)[::-1]
    vals, u = vals[idx], u[:, idx]
    keep = vals > RANK_CUTOFF * max(vals[0], 0.0)
    vals, u = vals[keep], u[:, keep]
    vecs = z @ u / np.sqrt(vals * (d - 1))
    return EigenSystem(vals, vecs)


def erank(values) -> float:
    """exp of the Shannon entropy of the normalized positive eigenvalues."""
    lam = np.asarray(values, dtype=float).ravel()
    if lam.size == 0:
        raise ValueError("erank needs at least one eigenvalue")
    top = lam.max()
    if not top > 0:
        raise ValueError("erank needs a strictly positive eigenvalue")
    lam = lam[lam > RANK_CUTOFF * top]
    p = lam / lam.sum()
    return float(np.exp(-np.sum(p * np.log(p))))


def _round(x: float) -> int:
    # R's round(): half to even
    return int(round(x))


def dynamic_cluster_numbers(n: int, d: int, erank_value: float, p: int) -> tuple[int, ...]:
    """Cluster counts per level, log-equidistant between ``N/(d-1)`` and ``eRank``.

    >>> dynamic_cluster_numbers(2000, 21, 10.0, 4)
    (100, 46, 22, 10)
    """
    if p < 1:
        raise ValueError("number of levels must be >= 1")
    k1 = _round(n / (d - 1))
    kp = _round(erank_value)
    if p > 1 and k1 < kp:
        p = 1
    if p == 1:
        k = [k1]
    else:
        k = [_round(k1 ** ((p - 1 - j) / (p - 1)) * kp ** (j / (p - 1))) for j in range(p)]
    if len(k) > 1 and k[-1] == 1:
        k = k[:-1]
    out: list[int] = []
    for v in k:
        # rounding can repeat a count; repeated levels add nothing
        if v >= 1 and (not out or v < out[-1]):
            out.append(v)
    return tuple(out) if out else (max(k1, 1),)


def derive_topdown_l(k_vec: Sequence[int]) -> tuple[int, ...]:
    """Per-split counts ``round(K_mu / K_{mu+1})`` (with ``K_{P+1} = 1``), least granular first."""
    k = [int(v) for v in k_vec]
    nxt = k[1:] + [1]
    return tuple(_round(a / b) for a, b in zip(k, nxt))[::-1]


def classify_dynamic(
    ret,
    p: int,
    iter_max: int = 10,
    num_try: int = 100,
    top_down: bool = False,
    seed: int = 0,
    workers: int = 1,
) -> MultilevelClassification:
    from . import hierarchy

    x = as_array(ret)
    n, d = x.shape
    ev = erank(correlation_eigen(x).values) if p > 1 else 1.0
    k_vec = dynamic_cluster_numbers(n, d, ev, p)
    if top_down:
        return hierarchy.top_down(x, derive_topdown_l(k_vec), iter_max, num_try, seed, workers)
    demean = [False] + [True] * (len(k_vec) - 1)
    return hierarchy.bottom_up(x, k_vec, iter_max, num_try, demean, False, seed, workers)


def auto_factor_count(values, rounding: str = "round") -> int:
    ev = erank(values)
    if rounding == "round":
        return _round(ev)
    if rounding == "floor":
        return int(math.floor(ev))
    raise ValueError(f"unknown rounding {rounding!r}")


def statistical_risk_model(ret, n_factors: int | str = "auto", rounding: str = "round") -> RiskModel:
    """Truncated principal-component model of the correlation matrix.

    Keeps the top ``n_factors`` eigenpairs and restores the unit diagonal
    with specific variances ``1 - sum_a lambda_a V_ia^2``.
    """
    x = as_array(ret)
    d = x.shape[1]
    eig = correlation_eigen(x)
    if n_factors == "auto":
        f = auto_factor_count(eig.values, rounding)
    else:
        f = int(n_factors)
    if not 1 <= f <= d - 1:
        raise ValueError(f"number of factors must be in [1, {d - 1}], got {f}")
    f = min(f, eig.values.size)
    lam = np.clip(eig.values[:f], 0.0, None)
    loadings = eig.vectors[:, :f] * np.sqrt(lam)[None, :]
    spec = np.clip(1.0 - np.sum(loadings**2, axis=1), 0.0, None)
    return RiskModel(specific_variance=spec, factor_loadings=loadings)
