"""Intraday mean-reversion backtest used to compare classifications.

Conventions: price panels are N x T with column 0 the most recent date, so
``s + 1`` is the trading day before ``s``. Expected returns are overnight
(previous adjusted close to adjusted open) log-returns; positions are set at
the open and closed at the close of the same day with no transaction costs.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg

from .classification import MultilevelClassification
from .hierarchy import bottom_up, relaxation_all, top_down
from .hybrid import FundamentalClassification, improve_classification
from .returns import DataError, as_array, row_stats
from .spectral import RiskModel, classify_dynamic, derive_topdown_l, statistical_risk_model

log = logging.getLogger(__name__)

TRADING_DAYS = 252


class NumericalError(RuntimeError):
    pass


class InfeasibleError(ValueError):
    pass


@dataclass(frozen=True)
class PricePanel:
    open: np.ndarray
    close: np.ndarray
    adj_open: np.ndarray
    adj_close: np.ndarray
    volume: np.ndarray
    stock_ids: tuple = field(default=())
    dates: tuple = field(default=())

    def __post_init__(self):
        arrays = {}
        for name in ("open", "close", "adj_open", "adj_close", "volume"):
            a = np.array(getattr(self, name), dtype=float)
            if a.ndim != 2:
                raise DataError(f"{name} panel must be two-dimensional")
            arrays[name] = a
        shape = arrays["open"].shape
        for name, a in arrays.items():
            if a.shape != shape:
                raise DataError(f"{name} panel has shape {a.shape}, expected {shape}")
            finite = a[np.isfinite(a)]
            if name == "volume":
                if np.any(finite < 0):
                    raise DataError("negative volume")
            elif np.any(finite <= 0):
                i, t = np.argwhere(np.isfinite(a) & (a <= 0))[0]
                raise DataError(f"non-positive {name} price at stock row {i}, date column {t}")
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        n, t = shape
        ids = tuple(self.stock_ids) if len(self.stock_ids) else tuple(str(i + 1) for i in range(n))
        dates = tuple(self.dates) if len(self.dates) else tuple(str(s + 1) for s in range(t))
        if len(ids) != n or len(dates) != t:
            raise DataError("stock_ids / dates do not match the panel shape")
        object.__setattr__(self, "stock_ids", ids)
        object.__setattr__(self, "dates", dates)

    @property
    def n_stocks(self) -> int:
        return self.open.shape[0]

    @property
    def n_dates(self) -> int:
        return self.open.shape[1]


@dataclass(frozen=True)
class Holdings:
    h: np.ndarray
    eta: float
    investment_level: float


@dataclass(frozen=True)
class DailyResult:
    pnl: float
    traded_shares: float
    gross: float


def _price(a: np.ndarray, i: int, s: int, what: str) -> float:
    if not 0 <= s < a.shape[1]:
        raise DataError(f"{what}: date column {s} outside the panel")
    v = a[i, s]
    if not np.isfinite(v):
        raise DataError(f"{what}: missing price for stock row {i} at date column {s}")
    return float(v)


def overnight_return(panel: PricePanel, i: int, s: int) -> float:
    """``ln(P_adj_open[i, s] / P_adj_close[i, s + 1])``."""
    return math.log(_price(panel.adj_open, i, s, "adjusted open") / _price(panel.adj_close, i, s + 1, "adjusted close"))


def close_return(panel: PricePanel, i: int, s: int) -> float:
    return math.log(_price(panel.adj_close, i, s, "adjusted close") / _price(panel.adj_close, i, s + 1, "adjusted close"))


def overnight_returns(panel: PricePanel, s: int) -> np.ndarray:
    return np.log(panel.adj_open[:, s] / panel.adj_close[:, s + 1])


def close_returns(panel: PricePanel, start: int, d: int) -> np.ndarray:
    """N x d close-to-close log-returns for dates ``start .. start + d - 1``."""
    ac = panel.adj_close
    if start + d >= ac.shape[1]:
        raise DataError(f"need {d} returns from column {start}, panel has {ac.shape[1]} dates")
    return np.log(ac[:, start : start + d] / ac[:, start + 1 : start + d + 1])


def addv(panel: PricePanel, i: int, s: int, m: int = 21) -> float:
    """Average daily dollar volume over the ``m`` days strictly before ``s``."""
    if s + m >= panel.n_dates:
        raise DataError(f"ADDV at column {s} needs {m} prior days, panel has {panel.n_dates} dates")
    dv = panel.volume[i, s + 1 : s + m + 1] * panel.close[i, s + 1 : s + m + 1]
    if not np.all(np.isfinite(dv)):
        raise DataError(f"ADDV: missing volume or close for stock row {i} before column {s}")
    return float(dv.sum() / m)


def addv_vector(panel: PricePanel, s: int, m: int = 21) -> np.ndarray:
    """ADDV for every stock; NaN where the history is incomplete."""
    if s + m >= panel.n_dates:
        raise DataError(f"ADDV at column {s} needs {m} prior days, panel has {panel.n_dates} dates")
    dv = panel.volume[:, s + 1 : s + m + 1] * panel.close[:, s + 1 : s + m + 1]
    return dv.sum(axis=1) / m


def select_universe(panel: PricePanel, s: int, top_n: int = 2000, m: int = 21) -> np.ndarray:
    """Row indices of the ``top_n`` stocks by ADDV at ``s``, highest first; ties by stock id."""
    a = addv_vector(panel, s, m)
    ok = np.flatnonzero(np.isfinite(a))
    ranked = sorted(ok, key=lambda i: (-a[i], panel.stock_ids[i]))
    return np.array(ranked[:top_n], dtype=int)


@dataclass
class ClassifierConfig:
    """Which classification feeds the risk model.

    ``method`` is one of ``statistical`` (no classification, principal
    components only), ``bottom_up``, ``top_down``, ``relax``, ``dynamic``,
    ``fundamental`` or ``hybrid``.
    """

    method: str = "bottom_up"
    k_vec: tuple = (100,)
    levels: int = 3
    iter_max: int = 100
    num_try: int = 100
    seed: int | None = None
    norm_cl_ret: bool = False
    dynamic_top_down: bool = False
    fundamental: dict | None = None  # stock_id -> sub-industry name
    workers: int = 1

    def build(self, ret: np.ndarray, stock_ids: Sequence[str]) -> MultilevelClassification | None:
        if self.method == "statistical":
            return None
        if self.method in ("bottom_up", "top_down", "dynamic", "hybrid") and self.seed is None:
            raise ValueError(f"method {self.method!r} is stochastic and needs a seed")
        n = ret.shape[0]
        k_vec = []
        for k in self.k_vec:
            k = min(int(k), n)
            if not k_vec or k < k_vec[-1]:
                k_vec.append(k)
        demean = [False] + [True] * (len(k_vec) - 1)
        if self.method == "bottom_up":
            return bottom_up(ret, k_vec, self.iter_max, self.num_try, demean, self.norm_cl_ret, self.seed, self.workers)
        if self.method == "top_down":
            return top_down(ret, derive_topdown_l(k_vec), self.iter_max, self.num_try, self.seed, self.workers)
        if self.method == "relax":
            return relaxation_all(ret, k_vec, demean, self.norm_cl_ret)
        if self.method == "dynamic":
            return classify_dynamic(ret, self.levels, self.iter_max, self.num_try, self.dynamic_top_down, self.seed, self.workers)
        if self.method in ("fundamental", "hybrid"):
            if not self.fundamental:
                raise ValueError(f"method {self.method!r} needs a fundamental classification")
            fc = FundamentalClassification.from_names([self.fundamental[sid] for sid in stock_ids])
            if self.method == "fundamental":
                return MultilevelClassification((fc.membership,))
            return MultilevelClassification(
                (improve_classification(ret, fc, self.iter_max, self.num_try, self.seed),)
            )
        raise ValueError(f"unknown classification method {self.method!r}")


def build_risk_model(
    ret_window,
    classification: MultilevelClassification | str = "statistical",
    shrinkage: float = 0.1,
    specific_floor: float = 0.1,
) -> RiskModel:
    """Covariance of raw returns for the stocks of ``ret_window``.

    ``"statistical"``: principal-component model of the correlation matrix
    (factor count from the effective rank) rescaled by ``sigma_i sigma_j``.

    With a classification: one factor per cluster at every level plus a
    market factor. Factor returns are within-cluster sums of normalized
    returns, the factor covariance is their sample covariance shrunk toward
    its diagonal, and each stock loads on the mean of its clusters. The
    factor part of stock ``i`` is capped at ``(1 - specific_floor)`` of its
    sample variance and the specific variance fills the rest, so the
    diagonal reproduces sample variances exactly.
    """
    x = as_array(ret_window)
    sigma = x.std(axis=1, ddof=1)
    if np.any(~(sigma > 0)):
        raise DataError("risk model window contains a zero-variance stock")
    if isinstance(classification, str):
        if classification != "statistical":
            raise ValueError(f"unknown risk model {classification!r}")
        srm = statistical_risk_model(x, "auto")
        return RiskModel(
            specific_variance=srm.specific_variance * sigma**2,
            factor_loadings=srm.factor_loadings * sigma[:, None],
        )

    n = x.shape[0]
    st = row_stats(x)
    norm = x / (st.sigma * st.u)[:, None]
    blocks = [lv.membership.astype(float) for lv in classification.levels] + [np.ones((n, 1))]
    exposures = np.hstack(blocks)
    factor_ret = exposures.T @ norm
    phi_raw = np.atleast_2d(np.cov(factor_ret, ddof=1))
    weight = shrinkage
    while True:
        phi = (1.0 - weight) * phi_raw + weight * np.diag(np.diag(phi_raw))
        try:
            np.linalg.cholesky(phi)
            break
        except np.linalg.LinAlgError:
            if weight >= 0.5 - 1e-12:
                raise NumericalError("factor covariance singular even at shrinkage 0.5") from None
            weight = min(0.5, weight + 0.1)
    sizes = exposures.sum(axis=0)
    n_blocks = len(blocks)
    # loadings map factor returns (in normalized units) to mean cluster returns, then to raw units
    loadings = exposures / sizes[None, :] / n_blocks * (st.sigma * st.u)[:, None]
    factor_var = np.einsum("if,fg,ig->i", loadings, phi, loadings)
    cap = (1.0 - specific_floor) * sigma**2
    shrink = np.where(factor_var > cap, np.sqrt(cap / np.where(factor_var > 0, factor_var, 1.0)), 1.0)
    loadings = loadings * shrink[:, None]
    factor_var = factor_var * shrink**2
    spec = sigma**2 - factor_var
    return RiskModel(specific_variance=spec, factor_loadings=loadings, factor_cov=phi)


def _cov(risk) -> np.ndarray:
    return risk.covariance if isinstance(risk, RiskModel) else np.asarray(risk, dtype=float)


def _cho(cov: np.ndarray):
    try:
        return linalg.cho_factor(cov, lower=True, check_finite=True)
    except linalg.LinAlgError:
        raise NumericalError("risk covariance is not positive definite") from None


def _neutral_direction(cov: np.ndarray, e: np.ndarray):
    """``Gamma^-1 E - Gamma^-1 1 (1' Gamma^-1 E) / (1' Gamma^-1 1)``; sums to zero.

    Also returns ``Gamma^-1 E`` to judge whether the projection is numerically zero.
    """
    c = _cho(cov)
    x = linalg.cho_solve(c, e)
    w = linalg.cho_solve(c, np.ones_like(e))
    return x - w * (x.sum() / w.sum()), x


def _fixed_kappa(cov, e, bounds, kappa, max_rounds):
    """Box-clipped solution of min 1/2 H'GH + kappa E'H subject to sum(H) = 0.

    Violators are clipped to their bound and the free stocks re-solved with the
    clipped positions held fixed, until no new violations appear.
    """
    n = e.size
    h = np.zeros(n)
    fixed = np.zeros(n, dtype=bool)
    for _ in range(max_rounds):
        free = ~fixed
        if not free.any():
            break
        g_ff = cov[np.ix_(free, free)]
        rhs = kappa * e[free] + cov[np.ix_(free, fixed)] @ h[fixed]
        c = _cho(g_ff)
        a = linalg.cho_solve(c, rhs)
        w = linalg.cho_solve(c, np.ones(free.sum()))
        nu = (h[fixed].sum() - a.sum()) / w.sum()
        h_free = -a - nu * w
        over = np.abs(h_free) > bounds[free] * (1 + 1e-12)
        h[free] = h_free
        if not over.any():
            break
        idx = np.flatnonzero(free)[over]
        h[idx] = np.sign(h_free[over]) * bounds[idx]
        fixed[idx] = True
    return h


def optimize_holdings(
    e,
    risk,
    investment: float,
    bounds=None,
    max_rounds: int = 50,
) -> Holdings:
    """Dollar-neutral holdings maximizing the Sharpe ratio of the mean-reversion alpha ``-E``.

    Without bounds this is the closed form ``H = -eta P Gamma^-1 E`` with
    ``eta`` fixed by ``sum |H| = I``. With bounds, violators are clipped to
    their bounds and the free stocks re-solved for the best Sharpe ratio
    under neutrality and the gross target, until no new violations appear.
    A second start comes from tracing clipped mean-variance solutions in the
    risk-aversion parameter until the gross level hits ``I``; the feasible
    candidate with the best Sharpe ratio is returned.
    An alpha with no cross-sectional dispersion gives zero holdings.
    """
    e = np.asarray(e, dtype=float)
    cov = _cov(risk)
    if investment <= 0:
        raise ValueError("investment level must be positive")
    if not np.all(np.isfinite(e)):
        raise DataError("expected returns contain non-finite values")
    y, x = _neutral_direction(cov, e)
    gross = np.abs(y).sum()
    if not gross > 1e-12 * np.abs(x).sum():
        return Holdings(np.zeros_like(e), 0.0, investment)
    eta = investment / gross
    h = -eta * y
    if bounds is None:
        return Holdings(h, eta, investment)

    b = np.asarray(bounds, dtype=float)
    if np.any(b < 0) or not np.all(np.isfinite(b)):
        raise DataError("position bounds must be finite and non-negative")
    if b.sum() < investment:
        raise InfeasibleError("gross target unattainable: bounds sum to less than the investment level")
    if np.all(np.abs(h) <= b):
        return Holdings(h, eta, investment)

    # the gross target makes the bounded problem non-convex (one linear piece
    # per sign pattern), so refine from two starts and keep the better one
    candidates = [_clip_and_reoptimize(cov, e, b, investment, h, max_rounds)]
    try:
        start = _kappa_path(cov, e, b, investment, eta, max_rounds).h
    except InfeasibleError:
        # the path keeps one sign pattern; another split of longs and shorts may still work
        start = _feasible_start(h, b, investment)
    at_bound = np.abs(start) >= b * (1 - 1e-9)
    candidates += [start, _clip_and_reoptimize(cov, e, b, investment, start, max_rounds, at_bound)]
    best = max((c for c in candidates if c is not None), key=lambda c: -(c @ e) / math.sqrt(c @ cov @ c))
    return Holdings(best, eta, investment)


def _sharpe_with_fixed(cov, e, h_fixed, fixed, signs, investment):
    """Max-Sharpe free positions given clipped ones, neutrality and the gross target.

    With the sign of every free position assumed, the gross target is linear,
    so all constraints are affine: ``1'h_U = -1'h_F`` and ``s'h_U = I - |h_F|``.
    Writing ``h = g / tau`` turns them into a linear subspace in ``(tau, g_U)``
    where the Sharpe ratio has a closed-form maximizer. Returns None when the
    maximizer needs ``tau <= 0`` (no attainable optimum for this sign pattern).
    """
    free = ~fixed
    nf = int(free.sum())
    if not fixed.any():
        # nothing clipped: the best neutral direction, scaled onto the gross target
        y, _ = _neutral_direction(cov, e)
        scale = investment / float(signs @ -y)
        return -y * scale if scale > 0 else None
    c1 = -h_fixed[fixed].sum()
    c2 = investment - np.abs(h_fixed[fixed]).sum()
    # w = (tau, g_U);  g = T w with g_F = h_F tau
    t = np.zeros((e.size, nf + 1))
    t[fixed, 0] = h_fixed[fixed]
    t[np.flatnonzero(free), np.arange(1, nf + 1)] = 1.0
    m = t.T @ cov @ t
    lin = -(t.T @ e)
    b = np.zeros((nf + 1, 3))
    b[0, :2] = (-c1, -c2)
    b[1:, 0] = 1.0
    b[1:, 1] = signs
    b[:, 2] = lin
    c = _cho(m)
    mb = linalg.cho_solve(c, b)
    try:
        nu = np.linalg.solve(b.T @ mb, np.array([0.0, 0.0, 1.0]))
    except np.linalg.LinAlgError:
        return None
    w = mb @ nu
    if not w[0] > 0:
        return None
    h = h_fixed.copy()
    h[free] = w[1:] / w[0]
    return h


def _clip_and_reoptimize(cov, e, bounds, investment, h, max_rounds, fixed=None):
    """Clip violators to their bounds and re-solve the free stocks, until nothing moves.

    Returns None when the rounds do not settle on holdings that meet all
    constraints.
    """
    fixed = np.zeros(e.size, dtype=bool) if fixed is None else fixed.copy()
    for _ in range(max_rounds):
        over = ~fixed & (np.abs(h) > bounds * (1 + 1e-12))
        if over.any():
            h = h.copy()
            h[over] = np.sign(h[over]) * bounds[over]
            fixed |= over
        signs = np.sign(h[~fixed])
        if not signs.size or np.any(signs == 0):
            return None
        new = _sharpe_with_fixed(cov, e, h, fixed, signs, investment)
        if new is None:
            return None
        settled = np.array_equal(np.sign(new[~fixed]), signs) and not np.any(
            np.abs(new[~fixed]) > bounds[~fixed] * (1 + 1e-12)
        )
        h = new
        if settled:
            break
    else:
        return None
    tol = 1e-9 * investment
    if abs(h.sum()) > tol or abs(np.abs(h).sum() - investment) > tol or np.any(np.abs(h) > bounds + tol):
        return None
    return h


def _feasible_start(h, bounds, investment):
    """Neutral holdings with gross ``I`` inside the bounds, signs close to those of ``h``.

    Needs a split into longs and shorts with bound capacity of at least
    ``I / 2`` on each side. Starts from the signs of ``h`` and moves the
    smallest positions across; falls back to :func:`_capacity_split`.
    """
    half = 0.5 * investment

    def caps(sign):
        return bounds[sign > 0].sum(), bounds[sign < 0].sum()

    sign = np.where(h < 0, -1.0, 1.0)
    for side in (1.0, -1.0):
        for i in np.argsort(np.abs(h)):
            cap = caps(sign)
            if (cap[0] if side > 0 else cap[1]) >= half:
                break
            if sign[i] != side and (cap[1] if side > 0 else cap[0]) - bounds[i] >= half:
                sign[i] = side
    if min(caps(sign)) < half:
        sign = _capacity_split(bounds, half)
    long_cap, short_cap = caps(sign)
    if min(long_cap, short_cap) < half:
        raise InfeasibleError("gross target unattainable: no split of longs and shorts fits the bounds")
    return np.where(sign > 0, bounds * half / long_cap, -bounds * half / short_cap)


def _capacity_split(bounds, half):
    """Signs whose long and short bound capacities both reach ``half``, if found.

    Fills the long side largest bound first without overshooting what the
    short side needs; small universes are searched exhaustively.
    """
    n = bounds.size
    upper = bounds.sum() - half
    sign = -np.ones(n)
    total = 0.0
    for i in np.argsort(-bounds, kind="stable"):
        if total >= half:
            break
        if total + bounds[i] <= upper:
            sign[i] = 1.0
            total += bounds[i]
    if total >= half or n > 16:
        return sign
    for mask in range(1, 2**n):
        take = (mask >> np.arange(n)) & 1 > 0
        if half <= bounds[take].sum() <= upper:
            return np.where(take, 1.0, -1.0)
    return sign


def _kappa_path(cov, e, b, investment, eta, max_rounds):
    """Trace clipped mean-variance solutions until the gross level brackets ``I``.

    Always meets the constraints; the result is then refined by clip-and-reoptimize.
    """

    def solve(kappa):
        hk = _fixed_kappa(cov, e, b, kappa, max_rounds)
        ok = abs(hk.sum()) <= 1e-9 * investment and np.all(np.abs(hk) <= b * (1 + 1e-9))
        return hk, ok

    lo_k, h_lo = 0.0, np.zeros_like(e)
    hi_k = eta
    for _ in range(200):
        h_hi, ok = solve(hi_k)
        if not ok:
            raise InfeasibleError("gross target unattainable under bounds and dollar neutrality")
        if np.abs(h_hi).sum() >= investment:
            break
        lo_k, h_lo = hi_k, h_hi
        hi_k *= 2.0
    else:
        raise InfeasibleError("gross target unattainable under bounds and dollar neutrality")

    for _ in range(200):
        if np.abs(h_hi).sum() - np.abs(h_lo).sum() <= 1e-10 * investment:
            break
        mid = 0.5 * (lo_k + hi_k)
        h_mid, ok = solve(mid)
        if not ok:
            break
        if np.abs(h_mid).sum() >= investment:
            hi_k, h_hi = mid, h_mid
        else:
            lo_k, h_lo = mid, h_mid

    # gross is continuous along the segment between the two bracketing solutions
    t_lo, t_hi = 0.0, 1.0
    for _ in range(200):
        t = 0.5 * (t_lo + t_hi)
        g = np.abs((1 - t) * h_lo + t * h_hi).sum()
        if abs(g - investment) <= 1e-12 * investment:
            break
        if g < investment:
            t_lo = t
        else:
            t_hi = t
    h = (1 - t) * h_lo + t * h_hi
    return Holdings(h, 0.5 * (lo_k + hi_k), investment)


def simulate_day(panel: PricePanel, s: int, h, stocks=None) -> DailyResult:
    """Open-to-close P&L and traded shares of dollar holdings ``h`` on date column ``s``."""
    h = np.asarray(h, dtype=float)
    idx = np.arange(panel.n_stocks) if stocks is None else np.asarray(stocks, dtype=int)
    held = h != 0
    o = panel.open[idx, s]
    c = panel.close[idx, s]
    missing = held & ~(np.isfinite(o) & np.isfinite(c))
    if missing.any():
        raise DataError(f"missing fill price for held stock {panel.stock_ids[idx[np.flatnonzero(missing)[0]]]}")
    o = np.where(held, o, 1.0)
    c = np.where(held, c, 1.0)
    pnl = float(np.sum(h * (c / o - 1.0)))
    shares = float(np.sum(2.0 * np.abs(h) / o))
    return DailyResult(pnl=pnl, traded_shares=shares, gross=float(np.abs(h).sum()))


@dataclass
class BacktestConfig:
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    investment: float = 20e6
    lookback: int = 21  # returns per risk-model window
    addv_window: int = 21
    rebalance: int = 21
    top_n: int = 2000
    bound_fraction: float = 0.01
    shrinkage: float = 0.1
    specific_floor: float = 0.1

    def __post_init__(self):
        for name in ("lookback", "addv_window", "rebalance", "top_n"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not 0 < self.bound_fraction <= 1:
            raise ValueError("bound fraction must lie in (0, 1]")
        if self.investment <= 0:
            raise ValueError("investment level must be positive")


@dataclass
class MetricsReport:
    roc: float
    sr: float
    cps: float
    sr_defined: bool
    daily_pnl: np.ndarray
    daily_shares: np.ndarray
    investment: float
    cluster_counts: list = field(default_factory=list)

    @property
    def n_days(self) -> int:
        return int(self.daily_pnl.size)

    def as_row(self) -> dict:
        return {"ROC": self.roc, "SR": self.sr, "CPS": self.cps}

    def table(self) -> str:
        sr = f"{self.sr:.3f}" if self.sr_defined else "nan (zero P&L variance)"
        return "\n".join(
            [
                f"days          {self.n_days}",
                f"ROC (%)       {100 * self.roc:.3f}",
                f"Sharpe        {sr}",
                f"cents/share   {self.cps:.3f}",
            ]
        )


def metrics(daily_pnl, daily_shares, investment: float, cluster_counts=None) -> MetricsReport:
    """Annualized return on capital, annualized Sharpe ratio and cents per share."""
    pnl = np.asarray(daily_pnl, dtype=float)
    shares = np.asarray(daily_shares, dtype=float)
    mean = float(pnl.mean()) if pnl.size else 0.0
    roc = mean / investment * TRADING_DAYS
    sd = float(pnl.std(ddof=1)) if pnl.size > 1 else 0.0
    sr_defined = sd > 0
    sr = mean / sd * math.sqrt(TRADING_DAYS) if sr_defined else float("nan")
    total_shares = float(shares.sum())
    cps = 100.0 * float(pnl.sum()) / total_shares if total_shares > 0 else 0.0
    return MetricsReport(roc, sr, cps, sr_defined, pnl, shares, investment, list(cluster_counts or []))


def max_backtest_days(panel: PricePanel, config: BacktestConfig) -> int:
    # day s needs adjusted closes through s + lookback + 1 and ADDV history through s + addv_window
    return max(0, min(panel.n_dates - config.lookback - 1, panel.n_dates - config.addv_window))


def run_backtest(
    panel: PricePanel,
    config: BacktestConfig | None = None,
    days: int | None = None,
) -> MetricsReport:
    """Simulate ``days`` trading days ending at the most recent date of ``panel``.

    The universe, classification and risk model are rebuilt every
    ``config.rebalance`` days from data strictly before the rebalance date;
    positions are bounded by ``bound_fraction`` times the daily ADDV.
    """
    config = config or BacktestConfig()
    avail = max_backtest_days(panel, config)
    days = avail if days is None else int(days)
    if days < 1 or days > avail:
        raise DataError(f"panel supports between 1 and {avail} backtest days, requested {days}")

    pnl, shares, counts = [], [], []
    stocks = np.array([], dtype=int)
    cov = None
    for step, s in enumerate(range(days - 1, -1, -1)):
        if step % config.rebalance == 0:
            stocks, cov = _rebalance(panel, s, config, counts)
        if stocks.size < 2:
            pnl.append(0.0)
            shares.append(0.0)
            continue
        e = overnight_returns(panel, s)[stocks]
        a = addv_vector(panel, s, config.addv_window)[stocks]
        live = np.isfinite(e) & np.isfinite(a) & np.isfinite(panel.open[stocks, s]) & np.isfinite(panel.close[stocks, s])
        if live.sum() < 2:
            pnl.append(0.0)
            shares.append(0.0)
            continue
        sub = np.flatnonzero(live)
        hold = optimize_holdings(
            e[sub], cov[np.ix_(sub, sub)], config.investment, config.bound_fraction * a[sub]
        )
        day = simulate_day(panel, s, hold.h, stocks[sub])
        pnl.append(day.pnl)
        shares.append(day.traded_shares)
    return metrics(pnl, shares, config.investment, counts)


def _rebalance(panel: PricePanel, s: int, config: BacktestConfig, counts: list):
    universe = select_universe(panel, s, config.top_n, config.addv_window)
    ret = close_returns(panel, s + 1, config.lookback)[universe]
    ok = np.all(np.isfinite(ret), axis=1)
    ok[ok] = ret[ok].std(axis=1, ddof=1) > 0
    universe, ret = universe[ok], ret[ok]
    if universe.size < 2:
        log.info("date column %d: fewer than two tradable stocks, standing aside", s)
        counts.append(())
        return universe, None
    ids = [panel.stock_ids[i] for i in universe]
    classification = config.classifier.build(ret, ids)
    counts.append(() if classification is None else classification.cluster_counts)
    risk = build_risk_model(
        ret, "statistical" if classification is None else classification, config.shrinkage, config.specific_floor
    )
    return universe, risk.covariance
