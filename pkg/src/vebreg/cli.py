"""Command-line interface: ``vebreg {simulate,fit,trendfilter,compare}``.

Data files are headerless CSV. Result documents are JSON on stdout (or
``--out``); logs go to stderr.  Exit codes: 0 success, 1 I/O failure,
2 invalid arguments.  Wall-clock timings are nondeterministic and are only
included when ``--timings`` is passed.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from .cavi import cavi_fit
from .errors import DomainError
from .fit import FitOptions, FitResult, fit, fit_trendfilter
from .invert import InversionOptions
from .linop import DenseOperator, tf_operator
from .objective import ParamLayout, RegressionData, objective_direct
from .optim import SolverOptions
from .simulate import SimSpec, metrics, rmse, sim_linreg, sim_trendfilter

log = logging.getLogger("vebreg")


class UsageError(Exception):
    """Bad argument detected after parsing; maps to exit code 2."""


# ---------------------------------------------------------------- file I/O

def write_csv(path, arr):
    arr = np.asarray(arr, dtype=float)
    np.savetxt(path, arr if arr.ndim == 2 else arr.reshape(-1, 1), fmt="%.17g", delimiter=",")


def read_matrix(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=2)


def read_vector(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=1).ravel()


def dumps(doc) -> str:
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"


def emit(doc, out):
    text = dumps(doc)
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def prior_doc(g) -> dict:
    if g.family == "ash":
        return {"family": "ash", "grid": g.grid_variances.tolist(), "weights": g.weights.tolist()}
    return {"family": g.family, "grid": [0.0, g.slab_variance], "weights": [1.0 - g.w, g.w],
            "w": g.w, "slab_variance": g.slab_variance}


def result_doc(res: FitResult, timings: bool, coef_path=None) -> dict:
    doc = {
        "method": res.method,
        "prior": prior_doc(res.prior),
        "sigma2": res.sigma2,
        "elbo": res.elbo,
        "n_iters": res.n_iters,
        "status": res.status,
        "intercept": res.intercept,
    }
    if coef_path:
        write_csv(coef_path, res.coef)
        doc["coefficients_path"] = str(coef_path)
    else:
        doc["coefficients"] = res.coef.tolist()
    if timings:
        doc["timings"] = res.timings
    return doc


def threads_from_env() -> int:
    raw = os.environ.get("GRADVI_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"GRADVI_THREADS must be an integer, got {raw!r}")
    if n < 0:
        raise UsageError("GRADVI_THREADS must be nonnegative")
    return n or (os.cpu_count() or 1)


def thread_limit(n):
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # pragma: no cover
        return nullcontext()
    return threadpool_limits(limits=n)


# ------------------------------------------------------------ arg checking

def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return v


def _nonneg_int(text):
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be a nonnegative integer, got {text}")
    return v


def _open_unit(text):
    v = float(text)
    if not 0.0 < v < 1.0:
        raise argparse.ArgumentTypeError(f"must lie strictly between 0 and 1, got {text}")
    return v


def _positive_float(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def _nonneg_float(text):
    v = float(text)
    if not v >= 0:
        raise argparse.ArgumentTypeError(f"must be nonnegative, got {text}")
    return v


def _add_fit_flags(p, default_iter=2000):
    p.add_argument("--method", choices=["direct", "compound"], default="compound")
    p.add_argument("--prior", choices=["ash", "point-normal"], default="ash")
    p.add_argument("--k-mix", type=_positive_int, default=20, help="ash grid size")
    p.add_argument("--max-iter", type=_positive_int, default=default_iter)
    p.add_argument("--timings", action="store_true", help="include wall-clock timings")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vebreg", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="write a simulated dataset")
    simsub = sim.add_subparsers(dest="design_kind", required=True)
    lr = simsub.add_parser("linreg")
    lr.add_argument("--n", type=_positive_int, default=500)
    lr.add_argument("--p", type=_positive_int, default=10_000)
    lr.add_argument("--s", type=_nonneg_int, default=10)
    lr.add_argument("--pve", type=_open_unit, default=0.6)
    lr.add_argument("--design", choices=["iid", "block"], default="iid")
    lr.add_argument("--min-block-size", type=_positive_int, default=2000)
    lr.add_argument("--n-test", type=_nonneg_int, default=0)
    lr.add_argument("--seed", type=int, default=0)
    lr.add_argument("--out", required=True)
    tf = simsub.add_parser("trendfilter")
    tf.add_argument("--n", type=_positive_int, default=4096)
    tf.add_argument("--changepoints", type=_nonneg_int, default=10)
    tf.add_argument("--sigma", type=_nonneg_float, default=1.0)
    tf.add_argument("--seed", type=int, default=0)
    tf.add_argument("--out", required=True)

    ft = sub.add_parser("fit", help="fit a linear regression from X.csv / y.csv")
    ft.add_argument("--data", required=True, help="directory with X.csv and y.csv")
    _add_fit_flags(ft)
    ft.add_argument("--init", default="null", help="'null' or a CSV of warm-start coefficients")
    ft.add_argument("--warmup", type=_nonneg_int, default=None,
                    help="prior-only warm-up iterations (default 50 with --init FILE)")
    ft.add_argument("--standardize", action="store_true")
    ft.add_argument("--coef-out", default=None, help="write coefficients here instead of inline")
    ft.add_argument("--out", default=None)

    tr = sub.add_parser("trendfilter", help="empirical Bayes trend filtering of y.csv")
    tr.add_argument("--data", required=True, help="directory with y.csv")
    tr.add_argument("--order", type=int, choices=[0, 1, 2], default=0)
    tr.add_argument("--scaled", action="store_true")
    _add_fit_flags(tr)
    tr.add_argument("--out", required=True, help="output directory for trend.csv and result.json")

    cm = sub.add_parser("compare", help="compare compound, direct and coordinate ascent")
    cm.add_argument("--data", default=None, help="simulation directory")
    cm.add_argument("--max-iter", type=_positive_int, default=2000)
    cm.add_argument("--cavi-max-sweeps", type=_positive_int, default=5000)
    cm.add_argument("--cavi-check", action="store_true",
                    help="report the gradient norm at the coordinate-ascent fixed point")
    cm.add_argument("--timing-sweep", action="store_true",
                    help="time trend-filter fits over a range of n (nondeterministic)")
    cm.add_argument("--sweep-log2", type=int, nargs=2, default=[10, 14], metavar=("LO", "HI"))
    cm.add_argument("--sweep-iters", type=_positive_int, default=20)
    cm.add_argument("--timings", action="store_true")
    cm.add_argument("--out", default=None)
    return parser


# ---------------------------------------------------------------- commands

def cmd_simulate(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.design_kind == "linreg":
        min_block = min(args.min_block_size, args.p // 3) if args.design == "block" else 2000
        try:
            spec = SimSpec(kind=args.design, n=args.n, p=args.p, s=args.s, pve=args.pve,
                           min_block_size=max(min_block, 1), n_test=args.n_test, seed=args.seed)
        except DomainError as e:
            raise UsageError(str(e))
        sim = sim_linreg(spec)
        write_csv(out / "X.csv", sim.X)
        write_csv(out / "y.csv", sim.y)
        truth = {"kind": "linreg", "spec": spec.to_dict(), "seed": args.seed,
                 "b_true": sim.b_true.tolist(), "sigma2": sim.sigma2,
                 "block_sizes": sim.block_sizes}
        if spec.n_test:
            write_csv(out / "X_test.csv", sim.X_test)
            write_csv(out / "y_test.csv", sim.y_test)
    else:
        try:
            spec = SimSpec(kind="trendfilter", n=args.n, n_changepoints=args.changepoints,
                           sigma_noise=args.sigma, seed=args.seed)
        except DomainError as e:
            raise UsageError(str(e))
        sim = sim_trendfilter(spec)
        write_csv(out / "y.csv", sim.y)
        truth = {"kind": "trendfilter", "spec": spec.to_dict(), "seed": args.seed,
                 "sigma": args.sigma, "mu_true": sim.mu_true.tolist(),
                 "changepoints": sim.changepoints.tolist(), "jumps": sim.jumps.tolist()}
    (out / "truth.json").write_text(dumps(truth))
    log.info("wrote simulation to %s", out)
    return 0


def _load_truth(folder: Path):
    path = folder / "truth.json"
    return json.loads(path.read_text()) if path.exists() else None


def _fit_options(args, **kw) -> FitOptions:
    solver = SolverOptions(max_iters=args.max_iter)
    return FitOptions(method=args.method, prior=args.prior, K=args.k_mix, solver=solver, **kw)


def _linreg_metrics(res: FitResult, folder: Path, X, y, truth) -> dict:
    """Prediction error of the fit and of the true coefficients.

    Uses the held-out set when present, otherwise the training data.
    """
    if (folder / "X_test.csv").exists():
        X_eval, y_eval = read_matrix(folder / "X_test.csv"), read_vector(folder / "y_test.csv")
    else:
        X_eval, y_eval = X, y
    out = {"rmse": rmse(y_eval, res.predict(X_eval))}
    if truth and "b_true" in truth:
        b_true = np.asarray(truth["b_true"])
        if b_true.size == res.coef.size:
            out = metrics(y_eval, res.predict(X_eval), pred_ref=X_eval @ b_true)
            out["rmse_truth"] = rmse(y_eval, X_eval @ b_true)
            out["coef_rmse"] = rmse(b_true, res.coef)
    return out


def cmd_fit(args):
    folder = Path(args.data)
    X, y = read_matrix(folder / "X.csv"), read_vector(folder / "y.csv")
    if X.shape[0] != y.size:
        raise UsageError(f"X.csv has {X.shape[0]} rows but y.csv has {y.size} entries")
    init = None
    if args.init != "null":
        init = read_vector(args.init)
        if init.size != X.shape[1]:
            raise UsageError(f"--init has {init.size} coefficients, expected {X.shape[1]}")
    try:
        opts = _fit_options(args, init=init, prior_warmup_iters=args.warmup,
                            standardize=args.standardize)
        res = fit(RegressionData.from_arrays(X, y), opts)
    except DomainError as e:
        raise UsageError(str(e))
    doc = result_doc(res, args.timings, args.coef_out)
    truth = _load_truth(folder)
    doc["metrics"] = _linreg_metrics(res, folder, X, y, truth)
    if truth:
        doc["seed"] = truth.get("seed")
        doc["spec"] = truth.get("spec")
    emit(doc, args.out)
    return 0


def cmd_trendfilter(args):
    folder = Path(args.data)
    y = read_vector(folder / "y.csv")
    try:
        res = fit_trendfilter(y, args.order, _fit_options(args), scaled=args.scaled)
    except DomainError as e:
        raise UsageError(str(e))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "trend.csv", res.trend)
    doc = result_doc(res, args.timings)
    doc.update(order=args.order, scaled=args.scaled)
    truth = _load_truth(folder)
    if truth and "mu_true" in truth and len(truth["mu_true"]) == y.size:
        mu = np.asarray(truth["mu_true"])
        mse_fit = float(np.mean((res.trend - mu) ** 2))
        mse_data = float(np.mean((y - mu) ** 2))
        doc["metrics"] = {"mse": mse_fit, "mse_data": mse_data,
                          "mse_improvement": mse_data - mse_fit, "rmse": math.sqrt(mse_fit)}
        doc["seed"] = truth.get("seed")
    (out / "result.json").write_text(dumps(doc))
    sys.stdout.write(dumps(doc))
    return 0


def _loglog_slope(ns, secs):
    if len(ns) < 2:
        return None
    return float(np.polyfit(np.log(ns), np.log(secs), 1)[0])


def timing_sweep(log2_lo, log2_hi, iters=20, seed=0, dense=False, method="compound"):
    """Seconds per solver iteration of trend-filter fits over ``n = 2**j``."""
    rows = []
    for j in range(log2_lo, log2_hi + 1):
        n = 2 ** j
        sim = sim_trendfilter(SimSpec(kind="trendfilter", n=n, sigma_noise=0.5, seed=seed))
        op = DenseOperator(tf_operator(n, 0).todense()) if dense else tf_operator(n, 0)
        data = RegressionData.from_arrays(op, sim.y)
        solver = SolverOptions(max_iters=iters, grad_tol=0.0, rel_obj_tol=0.0)
        t0 = time.perf_counter()
        res = fit(data, FitOptions(method=method, solver=solver))
        elapsed = time.perf_counter() - t0
        rows.append({"n": n, "n_iters": res.n_iters,
                     "seconds_per_iter": elapsed / max(res.n_iters, 1),
                     "matvec_fraction": res.timings["matvec_seconds"] / elapsed})
    slope = _loglog_slope([r["n"] for r in rows], [r["seconds_per_iter"] for r in rows])
    return {"operator": "dense" if dense else "fast", "rows": rows, "loglog_slope": slope}


def _compare_linreg(args, folder, truth, pool):
    X, y = read_matrix(folder / "X.csv"), read_vector(folder / "y.csv")
    data = RegressionData.from_arrays(X, y)
    solver = SolverOptions(max_iters=args.max_iter)
    methods = ("compound", "direct")
    fits = dict(zip(methods, pool.map(
        lambda m: fit(data, FitOptions(method=m, solver=solver)), methods)))
    ref = fits["compound"]
    if (folder / "X_test.csv").exists():
        X_eval, y_eval = read_matrix(folder / "X_test.csv"), read_vector(folder / "y_test.csv")
    else:
        X_eval, y_eval = X, y
    ref_pred = ref.predict(X_eval)

    report = {}
    for name, res in fits.items():
        m = metrics(y_eval, res.predict(X_eval), res.elbo, ref.elbo, pred_ref=ref_pred)
        m.update(elbo=res.elbo, n_iters=res.n_iters, status=res.status)
        if args.timings:
            m["seconds_per_iter"] = res.timings["total_seconds"] / max(res.n_iters, 1)
        report[name] = m

    # coordinate ascent with the compound fit's prior and sigma2 held fixed
    tol = 1e-10 if args.cavi_check else 1e-8
    t0 = time.perf_counter()
    b_cavi, sweeps = cavi_fit(data, ref.prior, ref.sigma2, tol=tol, max_sweeps=args.cavi_max_sweeps)
    cavi_seconds = time.perf_counter() - t0
    layout = ParamLayout(data.p, ref.prior)
    ov = objective_direct(layout.pack(b_cavi, ref.prior, ref.sigma2), data, layout,
                          InversionOptions(tol=1e-13))
    m = metrics(y_eval, X_eval @ b_cavi, ov.elbo, ref.elbo, pred_ref=ref_pred)
    m.update(elbo=ov.elbo, n_iters=sweeps, status="converged" if sweeps < args.cavi_max_sweeps
             else "max_sweeps")
    if args.timings:
        m["seconds_per_iter"] = cavi_seconds / max(sweeps, 1)
    if args.cavi_check:
        m["stationarity_grad_inf"] = float(np.max(np.abs(ov.grad[layout.coef])))
    report["cavi_fixed_prior"] = m
    return {"kind": "linreg", "reference": "compound", "methods": report,
            "seed": truth.get("seed") if truth else None}


def _compare_trendfilter(args, folder, truth, pool):
    y = read_vector(folder / "y.csv")
    solver = SolverOptions(max_iters=args.max_iter)
    variants = {
        "compound": dict(method="compound", scaled=False),
        "compound_scaled": dict(method="compound", scaled=True),
        "direct_scaled": dict(method="direct", scaled=True),
    }

    def run(name):
        v = variants[name]
        return fit_trendfilter(y, 0, FitOptions(method=v["method"], solver=solver),
                               scaled=v["scaled"])

    fits = dict(zip(variants, pool.map(run, list(variants))))
    ref = fits["compound"]
    mu = np.asarray(truth["mu_true"]) if truth and "mu_true" in truth else y
    report = {}
    for name, res in fits.items():
        m = metrics(mu, res.trend, res.elbo, ref.elbo, pred_ref=ref.trend)
        m.update(elbo=res.elbo, n_iters=res.n_iters, status=res.status)
        if args.timings:
            m["seconds_per_iter"] = res.timings["total_seconds"] / max(res.n_iters, 1)
        report[name] = m
    return {"kind": "trendfilter", "reference": "compound", "methods": report,
            "seed": truth.get("seed") if truth else None}


def cmd_compare(args):
    if args.data is None and not args.timing_sweep:
        raise UsageError("compare needs --data and/or --timing-sweep")
    lo, hi = args.sweep_log2
    if not 1 <= lo <= hi <= 24:
        raise UsageError("--sweep-log2 needs 1 <= LO <= HI <= 24")
    threads = threads_from_env()
    doc = {}
    with thread_limit(threads), ThreadPoolExecutor(max_workers=threads) as pool:
        if args.data is not None:
            folder = Path(args.data)
            truth = _load_truth(folder)
            if (folder / "X.csv").exists():
                doc.update(_compare_linreg(args, folder, truth, pool))
            else:
                doc.update(_compare_trendfilter(args, folder, truth, pool))
        if args.timing_sweep:
            doc["timing_sweep"] = timing_sweep(lo, hi, args.sweep_iters)
    emit(doc, args.out)
    return 0


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "trendfilter": cmd_trendfilter,
            "compare": cmd_compare}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        sys.stderr.write(f"vebreg: error: {e}\n")
        return 2
    except OSError as e:
        sys.stderr.write(f"vebreg: I/O error: {e}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
