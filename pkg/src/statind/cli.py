"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys

import numpy as np

from . import io
from .backtest import BacktestConfig, ClassifierConfig, InfeasibleError, NumericalError, run_backtest
from .classification import ClassificationError, MultilevelClassification
from .hierarchy import bottom_up, relaxation_all, top_down
from .hybrid import FundamentalClassification, improve_classification
from .returns import DataError, read_return_csv
from .spectral import (
    auto_factor_count,
    classify_dynamic,
    correlation_eigen,
    erank,
    statistical_risk_model,
)

EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 1, 2, 3

DEFAULTS = {
    "k": None,
    "levels": 3,
    "iter_max": 100,
    "num_try": 100,
    "seed": None,
    "demean": None,
    "norm_cl_ret": False,
    "factors": "auto",
    "rounding": "round",
    "method": "bottom-up",
    "investment": 20e6,
    "lookback": 21,
    "addv_window": 21,
    "rebalance": 21,
    "top_n": 2000,
    "bound_fraction": 0.01,
    "days": None,
    "workers": 1,
    "k_values": None,
    "fundamental": None,
    "top_down": False,
}

STOCHASTIC = {"bottom-up", "top-down", "dynamic", "hybrid"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _int_list(text) -> list[int]:
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    try:
        return [int(v) for v in str(text).replace(" ", "").split(",") if v]
    except ValueError:
        raise UsageError(f"expected a comma-separated list of integers, got {text!r}") from None


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    v = str(text).strip().lower()
    if v in ("1", "true", "t", "yes", "y"):
        return True
    if v in ("0", "false", "f", "no", "n"):
        return False
    raise UsageError(f"expected a boolean, got {text!r}")


def _bool_list(text) -> list[bool]:
    return [_bool(v) for v in str(text).split(",") if v.strip()]


def _add_common(p, seed=True, clustering=True):
    p.add_argument("--config", help="key = value file; command-line flags override it")
    if seed:
        p.add_argument("--seed", type=int, help="base seed (required for k-means based methods)")
    if clustering:
        p.add_argument("--iter-max", type=int, dest="iter_max")
        p.add_argument("--num-try", type=int, dest="num_try", help="k-means samplings to aggregate")
        p.add_argument("--workers", type=int, help="threads for independent samplings")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="statind", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    cl = sub.add_parser("classify", help="build a statistical classification from a return panel")
    cl.add_argument("algorithm", choices=["bottom-up", "top-down", "relax", "dynamic"])
    cl.add_argument("returns", help="return panel CSV (stock_id,<date_1>,...; date_1 most recent)")
    cl.add_argument("--k", help="cluster counts per level, most granular first, e.g. 100,30,10")
    cl.add_argument("--levels", type=int, help="number of levels for the dynamic algorithm")
    cl.add_argument("--demean", help="per-level demeaning flags, e.g. 0,1,1")
    cl.add_argument("--norm-cl-ret", dest="norm_cl_ret", action="store_const", const=True)
    cl.add_argument("--top-down", dest="top_down", action="store_const", const=True,
                    help="dynamic algorithm: split top-down instead of bottom-up")
    cl.add_argument("-o", "--out", required=True, help="classification CSV")
    cl.add_argument("--json", help="also write the JSON variant")
    _add_common(cl)

    hy = sub.add_parser("hybrid", help="split oversized sub-industries of a fundamental classification")
    hy.add_argument("returns")
    hy.add_argument("fundamental", help="stock_id,subindustry_label CSV")
    hy.add_argument("-o", "--out", required=True)
    hy.add_argument("--json")
    _add_common(hy)

    er = sub.add_parser("erank", help="effective rank of the sample correlation matrix")
    er.add_argument("returns")
    er.add_argument("-o", "--out", help="CSV output (default stdout)")
    _add_common(er, seed=False, clustering=False)

    rm = sub.add_parser("risk-model", help="statistical risk model (correlation units)")
    rm.add_argument("returns")
    rm.add_argument("--factors", help="number of factors or 'auto'")
    rm.add_argument("--rounding", choices=["round", "floor"])
    rm.add_argument("-o", "--out", required=True, help="covariance CSV")
    rm.add_argument("--specific-out", help="specific variance CSV")
    _add_common(rm, seed=False, clustering=False)

    for name, helptext in (("backtest", "run the intraday backtest"), ("sweep", "backtest over a list of K")):
        bt = sub.add_parser(name, help=helptext)
        bt.add_argument("--panel-dir", required=True, dest="panel_dir",
                        help="directory with open/close/adj_open/adj_close/volume CSVs")
        if name == "backtest":
            bt.add_argument("--method", choices=["statistical", "bottom-up", "top-down", "relax", "dynamic",
                                                 "fundamental", "hybrid"])
            bt.add_argument("--k")
            bt.add_argument("--levels", type=int)
            bt.add_argument("--fundamental", help="stock_id,subindustry_label CSV")
        else:
            bt.add_argument("--k-values", dest="k_values", required=True, help="e.g. 2,5,10")
        bt.add_argument("--norm-cl-ret", dest="norm_cl_ret", action="store_const", const=True)
        bt.add_argument("--days", type=int)
        bt.add_argument("--investment", type=float)
        bt.add_argument("--lookback", type=int)
        bt.add_argument("--addv-window", type=int, dest="addv_window")
        bt.add_argument("--rebalance", type=int)
        bt.add_argument("--top-n", type=int, dest="top_n")
        bt.add_argument("--bound-fraction", type=float, dest="bound_fraction")
        bt.add_argument("-o", "--out", help="metrics CSV")
        _add_common(bt)

    va = sub.add_parser("validate", help="check a price panel directory")
    va.add_argument("--panel-dir", required=True, dest="panel_dir")
    return parser


def _settings(args) -> dict:
    """Merge built-in defaults, the config file and explicit flags (flags win)."""
    merged = dict(DEFAULTS)
    cfg_path = getattr(args, "config", None)
    if cfg_path:
        for key, value in io.read_config(cfg_path).items():
            if key not in DEFAULTS:
                raise UsageError(f"{cfg_path}: unknown setting {key!r}")
            merged[key] = value
    for key, value in vars(args).items():
        if value is not None:
            merged[key] = value
    conv = {
        "levels": int, "iter_max": int, "num_try": int, "lookback": int, "addv_window": int,
        "rebalance": int, "top_n": int, "workers": int, "investment": float, "bound_fraction": float,
        "norm_cl_ret": _bool, "top_down": _bool,
    }
    for key, fn in conv.items():
        if merged.get(key) is not None:
            try:
                merged[key] = fn(merged[key])
            except ValueError:
                raise UsageError(f"bad value for {key}: {merged[key]!r}") from None
    for key in ("seed", "days"):
        if merged.get(key) is not None:
            merged[key] = int(merged[key])
    for key in ("levels", "iter_max", "num_try", "lookback", "addv_window", "rebalance", "top_n", "workers"):
        if merged.get(key) is not None and merged[key] < 1:
            raise UsageError(f"{key} must be >= 1")
    if not 0 < merged["bound_fraction"] <= 1:
        raise UsageError("bound fraction must lie in (0, 1]")
    return merged


def _need_seed(opts, what):
    if opts["seed"] is None:
        raise UsageError(f"{what} is stochastic: --seed is required")


def _write_outputs(ml: MultilevelClassification, ids, opts, args, **meta):
    io.write_classification_csv(ml, ids, args.out)
    if getattr(args, "json", None):
        io.write_classification_json(ml, ids, args.json, **meta)
    print(io.format_summary(ml))


def cmd_classify(args, opts):
    algo = args.algorithm
    if algo in STOCHASTIC:
        _need_seed(opts, f"classify {algo}")
    ret = read_return_csv(args.returns)
    if algo == "dynamic":
        ml = classify_dynamic(ret, opts["levels"], opts["iter_max"], opts["num_try"], opts["top_down"],
                              opts["seed"], opts["workers"])
    else:
        if opts["k"] is None:
            raise UsageError(f"classify {algo} needs --k")
        k = _int_list(opts["k"])
        if algo == "top-down":
            # --k holds the per-split counts, least granular first
            ml = top_down(ret, k, opts["iter_max"], opts["num_try"], opts["seed"], opts["workers"])
        else:
            demean = _bool_list(opts["demean"]) if opts["demean"] else [False] + [True] * (len(k) - 1)
            if algo == "bottom-up":
                ml = bottom_up(ret, k, opts["iter_max"], opts["num_try"], demean, opts["norm_cl_ret"],
                               opts["seed"], opts["workers"])
            else:
                ml = relaxation_all(ret, k, demean, opts["norm_cl_ret"])
    _write_outputs(ml, ret.stock_ids, opts, args, algorithm=algo, seed=opts["seed"])
    return 0


def cmd_hybrid(args, opts):
    _need_seed(opts, "hybrid")
    ret = read_return_csv(args.returns)
    names = io.read_fundamental_csv(args.fundamental)
    missing = [sid for sid in ret.stock_ids if sid not in names]
    if missing or len(names) != len(ret.stock_ids):
        raise DataError(f"fundamental classification does not cover exactly the panel stocks (e.g. {missing[:3]})")
    fc = FundamentalClassification.from_names([names[sid] for sid in ret.stock_ids])
    out = improve_classification(ret, fc, opts["iter_max"], opts["num_try"], opts["seed"])
    print(f"sub-industries: {fc.membership.shape[1]} in, {out.n_clusters} out")
    _write_outputs(MultilevelClassification((out,)), ret.stock_ids, opts, args, algorithm="hybrid", seed=opts["seed"])
    return 0


def cmd_erank(args, opts):
    ret = read_return_csv(args.returns)
    eig = correlation_eigen(ret)
    n, d = ret.shape
    rows = [
        ("erank", erank(eig.values)),
        ("positive_eigenvalues", int(eig.values.size)),
        ("factors_round", auto_factor_count(eig.values, "round")),
        ("factors_floor", auto_factor_count(eig.values, "floor")),
        ("k1", int(round(n / (d - 1)))),
    ]
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(fh)
        w.writerow(["metric", "value"])
        w.writerows(rows)
    finally:
        if args.out:
            fh.close()
    return 0


def cmd_risk_model(args, opts):
    ret = read_return_csv(args.returns)
    f = opts["factors"]
    f = f if str(f) == "auto" else int(f)
    model = statistical_risk_model(ret, f, opts["rounding"])
    cov = model.covariance
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["stock_id", *ret.stock_ids])
        for sid, row in zip(ret.stock_ids, cov):
            w.writerow([sid, *(repr(float(v)) for v in row)])
    if args.specific_out:
        with open(args.specific_out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["stock_id", "specific_variance"])
            for sid, v in zip(ret.stock_ids, model.specific_variance):
                w.writerow([sid, repr(float(v))])
    print(f"factors: {model.n_factors}")
    return 0


def _backtest_config(opts, method, k_vec, fundamental=None) -> BacktestConfig:
    method_key = method.replace("-", "_")
    if method in STOCHASTIC:
        _need_seed(opts, f"backtest with {method}")
    clf = ClassifierConfig(
        method=method_key,
        k_vec=tuple(k_vec) if k_vec else (100,),
        levels=opts["levels"],
        iter_max=opts["iter_max"],
        num_try=opts["num_try"],
        seed=opts["seed"],
        norm_cl_ret=opts["norm_cl_ret"],
        dynamic_top_down=opts["top_down"],
        fundamental=fundamental,
        workers=opts["workers"],
    )
    return BacktestConfig(
        classifier=clf,
        investment=opts["investment"],
        lookback=opts["lookback"],
        addv_window=opts["addv_window"],
        rebalance=opts["rebalance"],
        top_n=opts["top_n"],
        bound_fraction=opts["bound_fraction"],
    )


def cmd_backtest(args, opts):
    method = opts["method"]
    k_vec = _int_list(opts["k"]) if opts["k"] else None
    if method in ("bottom-up", "top-down", "relax") and not k_vec:
        raise UsageError(f"backtest with {method} needs --k")
    fundamental = io.read_fundamental_csv(opts["fundamental"]) if opts.get("fundamental") else None
    config = _backtest_config(opts, method, k_vec, fundamental)
    panel = io.read_price_panel(args.panel_dir)
    report = run_backtest(panel, config, opts["days"])
    print(report.table())
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["ROC", "SR", "CPS", "days"])
            w.writerow([repr(report.roc), repr(report.sr), repr(report.cps), report.n_days])
    return 0


def cmd_sweep(args, opts):
    _need_seed(opts, "sweep")
    panel = io.read_price_panel(args.panel_dir)
    rows = []
    for k in sorted(set(_int_list(opts["k_values"]))):
        report = run_backtest(panel, _backtest_config(opts, "bottom-up", [k]), opts["days"])
        rows.append({"K": k, **report.as_row()})
        print(f"K = {k}: ROC = {100 * report.roc:.3f}%, SR = {report.sr:.3f}, CPS = {report.cps:.3f}")
    if args.out:
        io.write_sweep_csv(rows, args.out)
    return 0


def cmd_validate(args, opts):
    report = io.validate_panel(args.panel_dir)
    print(report)
    return 0 if report.ok else EXIT_DATA


COMMANDS = {
    "classify": cmd_classify,
    "hybrid": cmd_hybrid,
    "erank": cmd_erank,
    "risk-model": cmd_risk_model,
    "backtest": cmd_backtest,
    "sweep": cmd_sweep,
    "validate": cmd_validate,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        opts = _settings(args)
        return COMMANDS[args.command](args, opts)
    except UsageError as exc:
        print(f"statind: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalError, InfeasibleError, np.linalg.LinAlgError) as exc:
        print(f"statind: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, ClassificationError, ValueError, OSError) as exc:
        print(f"statind: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
