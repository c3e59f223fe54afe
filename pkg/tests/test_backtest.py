import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

import statind.backtest as bt
from ledger import DAYS, INVESTMENT, hand_ledger, ledger_panel
from oracles import grid_best_holdings, sharpe
from statind.backtest import (
    BacktestConfig,
    ClassifierConfig,
    InfeasibleError,
    PricePanel,
    addv,
    build_risk_model,
    close_return,
    optimize_holdings,
    overnight_return,
    run_backtest,
    select_universe,
    simulate_day,
)
from statind.classification import BinaryClassification, MultilevelClassification
from statind.returns import DataError
from statind.synthetic import synthetic_price_panel


def flat_panel(n=2, t=5, price=10.0, volume=100.0):
    p = np.full((n, t), price)
    return PricePanel(p, p, p, p, np.full((n, t), volume))


def test_overnight_and_close_returns():
    p = flat_panel()
    assert overnight_return(p, 0, 0) == 0.0 and close_return(p, 1, 2) == 0.0
    ao = np.array([[110.0, 100.0], [1.0, 1.0]])
    ac = np.array([[105.0, 100.0], [1.0, 1.0]])
    q = PricePanel(ao, ac, ao, ac, np.ones((2, 2)))
    assert overnight_return(q, 0, 0) == pytest.approx(0.0953102, abs=1e-7)
    assert close_return(q, 0, 0) == pytest.approx(math.log(1.05), abs=1e-15)
    with pytest.raises(DataError):
        overnight_return(q, 0, 1)


def test_returns_on_fixture_rows():
    panel = ledger_panel()
    for s in (0, 3, 7):
        assert overnight_return(panel, 1, s) == pytest.approx(
            math.log(panel.adj_open[1, s] / panel.adj_close[1, s + 1]), rel=1e-15
        )
        assert close_return(panel, 0, s) == pytest.approx(math.log(panel.adj_close[0, s] / panel.adj_close[0, s + 1]))


def test_addv_examples():
    p = flat_panel(t=30, price=4.0, volume=25.0)
    assert addv(p, 0, 0) == pytest.approx(100.0)
    panel = synthetic_price_panel(n=4, t=40, seed=3)
    assert addv(panel, 2, 5, m=1) == pytest.approx(panel.volume[2, 6] * panel.close[2, 6])
    direct = sum(panel.volume[1, 5 + r] * panel.close[1, 5 + r] for r in range(1, 22)) / 21
    assert addv(panel, 1, 5) == pytest.approx(direct, rel=1e-12)
    with pytest.raises(DataError):
        addv(panel, 0, 30)


def test_select_universe_sort_oracle():
    panel = synthetic_price_panel(n=10, t=30, seed=4)
    got = select_universe(panel, 0, top_n=5)
    a = [addv(panel, i, 0) for i in range(10)]
    want = sorted(range(10), key=lambda i: (-a[i], panel.stock_ids[i]))[:5]
    assert got.tolist() == want
    assert len(select_universe(panel, 0, top_n=50)) == 10


def test_universe_ties_by_id():
    p = flat_panel(n=3, t=25)
    q = PricePanel(p.open, p.close, p.adj_open, p.adj_close, p.volume, stock_ids=("c", "a", "b"))
    assert select_universe(q, 0).tolist() == [1, 2, 0]


def test_addv_is_out_of_sample():
    panel = synthetic_price_panel(n=8, t=40, seed=5)
    s = 3
    vol = panel.volume.copy()
    vol[:, : s + 1] *= np.random.default_rng(0).uniform(0, 10, size=(8, s + 1))
    moved = PricePanel(panel.open, panel.close, panel.adj_open, panel.adj_close, vol, panel.stock_ids)
    assert select_universe(moved, s, 4).tolist() == select_universe(panel, s, 4).tolist()
    assert addv(moved, 2, s) == addv(panel, 2, s)


def test_risk_model_single_cluster():
    x = np.random.default_rng(0).normal(size=(12, 21)) * 0.01
    ml = MultilevelClassification((BinaryClassification(np.ones((12, 1), dtype=np.int8)),))
    rm = build_risk_model(x, ml)
    g = rm.covariance
    resid = g - np.diag(np.diag(g))
    # one cluster plus the market: both columns are constant, so the factor part is rank one
    assert np.linalg.matrix_rank(rm.factor_loadings @ rm.factor_cov @ rm.factor_loadings.T, tol=1e-14) == 1
    assert np.all(resid[~np.eye(12, dtype=bool)] != 0)


@given(st.integers(0, 10_000))
def test_risk_model_pd_with_sample_diagonal(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(30, 21)) * rng.uniform(0.005, 0.03, size=(30, 1))
    labels = rng.integers(0, 4, size=30)
    fine = BinaryClassification.from_labels(labels)
    coarse = BinaryClassification.from_labels(labels // 2)
    for how in (MultilevelClassification((fine, coarse)), "statistical"):
        g = build_risk_model(x, how).covariance
        np.testing.assert_allclose(g, g.T, atol=1e-18)
        assert np.linalg.eigvalsh(g).min() > 0
        np.testing.assert_allclose(np.diag(g), x.var(axis=1, ddof=1), rtol=1e-10)


def test_two_stock_identity_closed_form():
    h = optimize_holdings([0.01, -0.01], np.eye(2), 1e6).h
    assert np.max(np.abs(h - [-5e5, 5e5])) <= 1e-12 * 1e6


def random_instance(seed, n=None):
    rng = np.random.default_rng(seed)
    n = n or int(rng.integers(2, 30))
    a = rng.normal(size=(n, n))
    cov = a @ a.T / n + np.eye(n) * rng.uniform(0.05, 1)
    return rng.normal(size=n) * 0.01, cov, rng


@given(st.integers(0, 10_000), st.booleans())
def test_holdings_constraints(seed, bounded):
    e, cov, rng = random_instance(seed)
    inv = 1e6
    bounds = np.full(e.size, 2.5 * inv / e.size) * rng.uniform(0.5, 1.5, e.size) if bounded else None
    h = optimize_holdings(e, cov, inv, bounds).h
    assert abs(h.sum()) <= 1e-6 * inv
    assert abs(np.abs(h).sum() - inv) <= 1e-6 * inv
    if bounded:
        assert np.all(np.abs(h) <= bounds + 1e-6 * inv)


@given(st.integers(0, 10_000), st.floats(0.01, 100))
def test_scale_invariance(seed, c):
    e, cov, _ = random_instance(seed)
    np.testing.assert_allclose(optimize_holdings(e * c, cov, 1e6).h, optimize_holdings(e, cov, 1e6).h, atol=1e-6)


@given(st.integers(0, 10_000))
def test_sign_contrarian(seed):
    # diagonal covariance and an alpha with zero precision-weighted mean
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 20))
    var = rng.uniform(0.5, 2, n)
    e = rng.normal(size=n)
    e -= (e / var).sum() / (1 / var).sum()
    h = optimize_holdings(e, np.diag(var), 1e6).h
    big = np.abs(e) > 1e-9
    assert np.all(np.sign(h[big]) == -np.sign(e[big]))


def test_one_binding_bound_matches_grid_oracle():
    rng = np.random.default_rng(8)
    a = rng.normal(size=(5, 5))
    cov = a @ a.T / 5 + np.eye(5) * 0.5
    e = np.array([-0.02, 0.0, 0.0, -0.03, 0.03]) + rng.normal(size=5) * 0.004
    b = np.array([0.05, 0.12, 0.12, 0.5, 0.5])
    h = optimize_holdings(e, cov, 1.0, b).h
    assert np.isclose(abs(h[0]), b[0]) and np.all(np.abs(h[1:]) < b[1:] - 1e-3)
    best, h_grid = grid_best_holdings(e, cov, 1.0, b, 0.001)
    assert sharpe(h, e, cov) >= best - 1e-9
    assert np.max(np.abs(h - h_grid)) <= 0.002


def test_infeasible_bounds():
    with pytest.raises(InfeasibleError, match="gross target unattainable"):
        optimize_holdings([0.01, -0.01, 0.0], np.eye(3), 1.0, [0.2, 0.2, 0.2])
    with pytest.raises(InfeasibleError):
        # capacity suffices overall but not on both sides
        optimize_holdings([0.01, -0.01], np.eye(2), 1.0, [0.9, 0.3])


def test_flat_alpha_gives_no_position():
    hold = optimize_holdings([0.003] * 4, np.eye(4), 1e6)
    assert np.all(hold.h == 0) and hold.eta == 0.0


def test_simulate_day_examples():
    p = flat_panel()
    assert simulate_day(p, 0, [100.0, -100.0]).pnl == 0.0
    o = np.array([[100.0], [100.0]])
    c = np.array([[101.0], [99.0]])
    q = PricePanel(o, c, o, c, np.ones((2, 1)))
    day = simulate_day(q, 0, [100.0, -100.0])
    assert day.pnl == pytest.approx(2.0) and day.traded_shares == pytest.approx(4.0)
    panel = ledger_panel()
    h = np.array([300.0, -300.0])
    direct = sum(h[i] * (panel.close[i, 4] / panel.open[i, 4] - 1) for i in (0, 1))
    assert simulate_day(panel, 4, h).pnl == pytest.approx(direct, rel=1e-14)


def test_missing_fill_price():
    o = np.array([[100.0], [np.nan]])
    q = PricePanel(o, o, o, o, np.ones((2, 1)))
    with pytest.raises(DataError, match="missing fill price"):
        simulate_day(q, 0, [1.0, -1.0])


def test_ledger_fixture():
    panel = ledger_panel()
    cfg = BacktestConfig(ClassifierConfig(method="statistical"), investment=INVESTMENT)
    rep = run_backtest(panel, cfg, days=DAYS)
    want = hand_ledger(panel)
    assert rep.roc == pytest.approx(want["ROC"], rel=1e-9)
    assert rep.sr == pytest.approx(want["SR"], rel=1e-9)
    assert rep.cps == pytest.approx(want["CPS"], rel=1e-9)


def test_zero_volatility_panel():
    rep = run_backtest(flat_panel(n=3, t=40), BacktestConfig(ClassifierConfig(method="statistical")), days=5)
    assert rep.roc == 0.0 and rep.cps == 0.0
    assert math.isnan(rep.sr) and not rep.sr_defined


def test_doubling_investment():
    panel = synthetic_price_panel(n=12, t=60, volume=1e9, seed=2)
    cfg = BacktestConfig(ClassifierConfig(method="bottom_up", k_vec=(3,), num_try=5, seed=1), investment=1e6)
    a = run_backtest(panel, cfg, days=20)
    cfg.investment = 2e6
    b = run_backtest(panel, cfg, days=20)
    assert b.roc == pytest.approx(a.roc, rel=1e-9)
    assert b.sr == pytest.approx(a.sr, rel=1e-9)
    assert b.cps == pytest.approx(a.cps, rel=1e-9)


@pytest.mark.parametrize("method", ["statistical", "bottom_up", "top_down", "relax", "dynamic", "hybrid"])
def test_holdings_invariants_every_day(method, monkeypatch):
    seen = []
    real = bt.optimize_holdings

    def spy(e, risk, investment, bounds=None, **kw):
        hold = real(e, risk, investment, bounds, **kw)
        seen.append((hold.h, investment, bounds))
        return hold

    monkeypatch.setattr(bt, "optimize_holdings", spy)
    panel = synthetic_price_panel(n=24, t=70, seed=6)
    fundamental = {sid: f"g{i % 2}" for i, sid in enumerate(panel.stock_ids)}
    cfg = ClassifierConfig(method=method, k_vec=(6, 3), levels=2, num_try=5, seed=3, fundamental=fundamental)
    rep = run_backtest(panel, BacktestConfig(cfg, investment=1e6), days=30)
    assert len(seen) == rep.n_days == 30
    for h, inv, bounds in seen:
        assert abs(h.sum()) <= 1e-6 * inv
        assert abs(np.abs(h).sum() - inv) <= 1e-6 * inv
        assert np.all(np.abs(h) <= bounds + 1e-6 * inv)


def test_stochastic_method_needs_seed():
    panel = synthetic_price_panel(n=10, t=50, seed=1)
    with pytest.raises(ValueError, match="seed"):
        run_backtest(panel, BacktestConfig(ClassifierConfig(method="bottom_up", k_vec=(3,))), days=2)


def test_metrics_report_table():
    rep = bt.metrics([1.0, -0.5, 2.0], [10.0, 10.0, 10.0], 100.0)
    assert rep.roc == pytest.approx(2.5 / 3 / 100 * 252)
    assert "Sharpe" in rep.table() and rep.as_row()["CPS"] == pytest.approx(250 / 30)
