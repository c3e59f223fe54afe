"""Backtest a bottom-up single-level classification over a range of K on a synthetic panel."""

import argparse

from statind.backtest import BacktestConfig, ClassifierConfig, run_backtest
from statind.synthetic import synthetic_price_panel


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--stocks", type=int, default=120)
    ap.add_argument("--dates", type=int, default=160)
    ap.add_argument("--days", type=int, default=100)
    ap.add_argument("--k", default="2,5,10,20")
    ap.add_argument("--num-try", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    a = ap.parse_args()

    panel = synthetic_price_panel(n=a.stocks, t=a.dates, n_groups=6, seed=a.seed)
    print("K,ROC,SR,CPS")
    for k in (int(v) for v in a.k.split(",")):
        cfg = ClassifierConfig(method="bottom_up", k_vec=(k,), num_try=a.num_try, seed=a.seed)
        rep = run_backtest(panel, BacktestConfig(cfg, investment=1e6, top_n=a.stocks), days=a.days)
        print(f"{k},{rep.roc:.5f},{rep.sr:.3f},{rep.cps:.3f}")


if __name__ == "__main__":
    main()
