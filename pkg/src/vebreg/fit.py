"""Fitting entry points: initialization, optional prior warm-up, and the solve."""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import DomainError
from .invert import InversionOptions, invert
from .linop import DenseOperator, tf_operator
from .objective import (ParamLayout, RegressionData, make_objective, objective_compound,
                        objective_direct, recover_coefficients, restrict)
from .optim import SolverOptions, minimize
from .priors import AshPrior, PointNormalPrior, Prior, default_ash_grid


@dataclass(frozen=True)
class FitOptions:
    """Options for :func:`fit`.

    ``prior_warmup_iters=None`` means 50 warm-up iterations when ``init`` is
    given and none otherwise.
    """

    method: str = "compound"
    prior: str = "ash"
    K: int = 20
    grid: Optional[tuple] = None
    init: Optional[np.ndarray] = None
    prior_warmup_iters: Optional[int] = None
    sigma2_init: float = 1.0
    solver: SolverOptions = SolverOptions()
    inversion: InversionOptions = InversionOptions(tol=1e-10)
    standardize: bool = False

    def __post_init__(self):
        if self.method not in ("direct", "compound"):
            raise DomainError(f"method must be 'direct' or 'compound', got {self.method!r}")
        if self.prior not in ("ash", "point-normal"):
            raise DomainError(f"prior must be 'ash' or 'point-normal', got {self.prior!r}")
        if not self.sigma2_init > 0:
            raise DomainError("sigma2_init must be positive")


@dataclass
class FitResult:
    coef: np.ndarray
    prior: Prior
    sigma2: float
    elbo: float
    elbo_trace: list
    n_iters: int
    n_fev: int
    status: str
    method: str
    z: Optional[np.ndarray] = None
    intercept: float = 0.0
    timings: dict = field(default_factory=dict)
    trend: Optional[np.ndarray] = None

    def predict(self, X) -> np.ndarray:
        return np.asarray(X, dtype=float) @ self.coef + self.intercept


def initial_prior(opts: FitOptions) -> Prior:
    """Equal mixture proportions; the point-normal slab starts at variance 1."""
    if opts.prior == "point-normal":
        return PointNormalPrior(0.5, 1.0)
    grid = default_ash_grid(opts.K) if opts.grid is None else np.asarray(opts.grid, dtype=float)
    return AshPrior(grid)


def _standardized(data: RegressionData):
    if not isinstance(data.operator, DenseOperator):
        raise DomainError("standardization needs an explicit (dense) design matrix")
    X = data.operator.X
    mean, sd = X.mean(axis=0), X.std(axis=0)
    if np.any(sd == 0):
        raise DomainError("cannot standardize a constant column")
    y_mean = float(data.y.mean())
    std = RegressionData.from_arrays((X - mean) / sd, data.y - y_mean)
    return std, mean, sd, y_mean


def fit(data: RegressionData, opts: FitOptions | None = None) -> FitResult:
    """Fit the regression by minimizing the direct or compound objective."""
    opts = opts or FitOptions()
    if opts.standardize:
        std, mean, sd, y_mean = _standardized(data)
        init = None if opts.init is None else np.asarray(opts.init, dtype=float) * sd
        res = fit(std, replace(opts, standardize=False, init=init))
        res.coef = res.coef / sd
        res.intercept = y_mean - float(mean @ res.coef)
        return res

    t_start = time.perf_counter()
    op = data.operator
    op_seconds0 = op.matvec_seconds
    stats = {"invert_seconds": 0.0}

    g0 = initial_prior(opts)
    layout = ParamLayout(data.p, g0)
    if opts.init is None:
        b0 = np.zeros(data.p)
    else:
        b0 = np.asarray(opts.init, dtype=float).ravel()
        if b0.size != data.p:
            raise DomainError(f"warm start has length {b0.size}, expected {data.p}")
    sigma2 = float(opts.sigma2_init)
    x = layout.pack(b0, g0, sigma2)

    warmup = opts.prior_warmup_iters
    if warmup is None:
        warmup = 50 if opts.init is not None else 0
    if warmup > 0 and layout.prior.n_packed > 0:
        f_full = make_objective("direct", data, layout, opts.inversion, stats)
        f_prior, embed = restrict(f_full, x, layout.prior_block)
        wres = minimize(f_prior, x[layout.prior_block],
                        replace(opts.solver, max_iters=int(warmup)))
        x = embed(wres.x)

    if opts.method == "compound":
        _, g, sigma2 = layout.unpack(x)
        if np.any(b0 != 0):
            t0 = time.perf_counter()
            x[layout.coef] = invert(b0, g, sigma2 * data.d2, opts.inversion)
            stats["invert_seconds"] += time.perf_counter() - t0
        else:
            x[layout.coef] = 0.0

    f = make_objective(opts.method, data, layout, opts.inversion, stats)
    sres = minimize(f, x, opts.solver)
    coef_block, g, sigma2 = layout.unpack(sres.x)
    if opts.method == "compound":
        z = coef_block.copy()
        coef = recover_coefficients(z, g, sigma2, data)
    else:
        z = None
        coef = coef_block.copy()

    timings = {
        "total_seconds": time.perf_counter() - t_start,
        "matvec_seconds": op.matvec_seconds - op_seconds0,
        "inversion_seconds": stats["invert_seconds"],
    }
    return FitResult(
        coef=coef, prior=g, sigma2=sigma2, elbo=-sres.fun,
        elbo_trace=[-v for v in sres.trace], n_iters=sres.n_iters, n_fev=sres.n_fev,
        status=sres.status, method=opts.method, z=z, timings=timings)


def fit_arrays(X, y, opts: FitOptions | None = None) -> FitResult:
    return fit(RegressionData.from_arrays(X, y), opts)


def objective_at(result: FitResult, data: RegressionData, inversion=None) -> float:
    """Objective value (negative ELBO) of a fitted result on ``data``."""
    layout = ParamLayout(data.p, result.prior)
    if result.method == "compound" and result.z is not None:
        return objective_compound(layout.pack(result.z, result.prior, result.sigma2),
                                  data, layout).value
    x = layout.pack(result.coef, result.prior, result.sigma2)
    return objective_direct(x, data, layout, inversion).value


def fit_trendfilter(y, k: int = 0, opts: FitOptions | None = None,
                    scaled: bool = False) -> FitResult:
    """Empirical Bayes trend filtering of order ``k`` on evenly spaced inputs.

    The design is the fast ``H^(k+1)`` operator; the fitted trend is stored
    in ``result.trend``.
    """
    y = np.asarray(y, dtype=float).ravel()
    op = tf_operator(y.size, k, scaled)
    data = RegressionData.from_arrays(op, y)
    res = fit(data, opts or FitOptions())
    res.trend = op.matvec(res.coef)
    return res
