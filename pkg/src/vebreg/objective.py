"""Penalized-regression objectives for variational empirical Bayes regression.

Two equivalent objectives are provided, each with exact gradients over the
packed parameter vector ``[coefficients | prior | log sigma2]``:

* the *direct* objective over posterior means ``b``, whose penalty needs the
  inverse ``T`` of the shrinkage operator;
* the *compound* objective over ``z`` with ``b = S(z)``, which needs no
  inversion.

Both cost one forward and one adjoint operator product per evaluation.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .errors import DomainError
from .invert import InversionOptions, invert
from .linop import DenseOperator, DesignOperator
from .priors import Prior, nm_eval, nm_logml, posterior_mean

LOG_2PI = np.log(2.0 * np.pi)


@dataclass
class RegressionData:
    """Response, design operator and the per-column ``d_j^2 = 1 / x_j'x_j``."""

    operator: DesignOperator
    y: np.ndarray
    d2: np.ndarray
    yty: float

    @classmethod
    def from_arrays(cls, X, y) -> "RegressionData":
        op = X if isinstance(X, DesignOperator) else DenseOperator(X)
        y = np.asarray(y, dtype=float).ravel()
        if y.shape[0] != op.shape[0]:
            raise DomainError(f"y has length {y.shape[0]} but the design has {op.shape[0]} rows")
        norms = op.column_sq_norms()
        if np.any(~(norms > 0)):
            j = int(np.flatnonzero(~(norms > 0))[0])
            raise DomainError(f"column {j} of the design has zero norm")
        return cls(op, y, 1.0 / norms, float(y @ y))

    @property
    def n(self) -> int:
        return self.operator.shape[0]

    @property
    def p(self) -> int:
        return self.operator.shape[1]


@dataclass(frozen=True)
class ParamLayout:
    """Packed vector layout ``[coefficients (p) | prior | log sigma2]``.

    ``prior`` is a template fixing the family (and grid for ash); its
    parameter values are ignored when unpacking.
    """

    p: int
    prior: Prior

    @property
    def size(self) -> int:
        return self.p + self.prior.n_packed + 1

    @property
    def coef(self) -> slice:
        return slice(0, self.p)

    @property
    def prior_block(self) -> slice:
        return slice(self.p, self.p + self.prior.n_packed)

    @property
    def sigma_index(self) -> int:
        return self.size - 1

    def pack(self, coef, prior: Prior, sigma2: float) -> np.ndarray:
        coef = np.asarray(coef, dtype=float).ravel()
        if coef.size != self.p:
            raise DomainError(f"expected {self.p} coefficients, got {coef.size}")
        if not sigma2 > 0:
            raise DomainError("sigma2 must be positive")
        return np.concatenate([coef, prior.pack(), [np.log(sigma2)]])

    def unpack(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.size,):
            raise DomainError(f"packed vector must have length {self.size}, got {x.shape}")
        prior = self.prior.with_packed(x[self.prior_block])
        with np.errstate(over="ignore", under="ignore"):
            sigma2 = np.exp(x[-1])
        return x[self.coef], prior, sigma2


@dataclass
class ObjectiveValue:
    value: float
    grad: np.ndarray
    coef: Optional[np.ndarray] = None

    @property
    def elbo(self) -> float:
        return -self.value


class PenaltyEval(NamedTuple):
    value: np.ndarray
    d_coef: np.ndarray
    d_prior: np.ndarray
    d_v2: np.ndarray


def penalty_direct(b, g: Prior, v2, opts: InversionOptions | None = None, T=None) -> PenaltyEval:
    """Penalty ``rho(b)`` via the inverse ``T(b)`` and its partials.

    ``d_prior`` is over natural prior parameters. Pass ``T`` to reuse an
    inverse computed elsewhere.
    """
    b = np.asarray(b, dtype=float)
    v2 = np.broadcast_to(np.asarray(v2, dtype=float), b.shape)
    if T is None:
        T = invert(b, g, v2, opts)
    ev = nm_logml(T, g, v2)
    gap = T - b
    value = -ev.logml - gap * gap / (2.0 * v2)
    return PenaltyEval(value, gap / v2, -ev.d_prior, -ev.d_s2 + 0.5 * ev.d_z ** 2)


def penalty_compound(z, g: Prior, v2) -> PenaltyEval:
    """Compound penalty ``rho(S(z)) = -l(z) - v2 * l'(z)**2 / 2`` and its partials.

    ``z``, the prior parameters and ``v2`` are the independent arguments.
    """
    ev = nm_eval(z, g, v2)
    v2 = np.broadcast_to(np.asarray(v2, dtype=float), ev.logml.shape)
    lz = ev.d_z
    value = -ev.logml - 0.5 * v2 * lz * lz
    d_z = -lz * (1.0 + v2 * ev.d_zz)
    d_prior = -ev.d_prior - (v2 * lz)[..., None] * ev.d_zprior
    d_v2 = -ev.d_s2 - 0.5 * lz * lz - v2 * lz * ev.d_zs2
    return PenaltyEval(value, d_z, d_prior, d_v2)


def _out_of_range(sigma2, v2) -> bool:
    # exp(log sigma2) under/overflowed; report +inf so line searches back off
    return not (0.0 < sigma2 < np.inf) or not np.all((v2 > 0) & np.isfinite(v2))


def _infeasible(layout: ParamLayout) -> ObjectiveValue:
    return ObjectiveValue(np.inf, np.full(layout.size, np.nan))


def _log_sigma2_grad(rss, sigma2, d_v2, data: RegressionData) -> float:
    # d/d(log sigma2), using v_j^2 = sigma2 * d_j^2
    return float(-rss / (2.0 * sigma2) + sigma2 * np.sum(d_v2 * data.d2)
                 + 0.5 * (data.n - data.p))


def _constants(data: RegressionData, sigma2: float) -> float:
    return -0.5 * np.sum(np.log(data.d2)) + 0.5 * (data.n - data.p) * (LOG_2PI + np.log(sigma2))


def objective_direct(x, data: RegressionData, layout: ParamLayout,
                     invert_opts: InversionOptions | None = None,
                     stats: dict | None = None) -> ObjectiveValue:
    """Objective over posterior means ``b`` with numerically inverted penalty."""
    if layout.p != data.p:
        raise DomainError(f"layout has {layout.p} coefficients but data has {data.p} columns")
    b, g, sigma2 = layout.unpack(x)
    v2 = sigma2 * data.d2
    if _out_of_range(sigma2, v2):
        return _infeasible(layout)

    t0 = time.perf_counter()
    T = invert(b, g, v2, invert_opts)
    if stats is not None:
        stats["invert_seconds"] = stats.get("invert_seconds", 0.0) + time.perf_counter() - t0
    pen = penalty_direct(b, g, v2, T=T)

    r = data.y - data.operator.matvec(b)
    rss = float(r @ r)
    value = rss / (2.0 * sigma2) + float(np.sum(pen.value)) + _constants(data, sigma2)

    grad = np.empty(layout.size)
    grad[layout.coef] = -data.operator.rmatvec(r) / sigma2 + pen.d_coef
    grad[layout.prior_block] = g.packed_grad(pen.d_prior.sum(axis=0))
    grad[-1] = _log_sigma2_grad(rss, sigma2, pen.d_v2, data)
    return ObjectiveValue(value, grad, coef=b)


def objective_compound(x, data: RegressionData, layout: ParamLayout,
                       stats: dict | None = None) -> ObjectiveValue:
    """Objective over ``z`` with coefficients ``b = S(z)``; no inversion."""
    if layout.p != data.p:
        raise DomainError(f"layout has {layout.p} coefficients but data has {data.p} columns")
    z, g, sigma2 = layout.unpack(x)
    v2 = sigma2 * data.d2
    if _out_of_range(sigma2, v2):
        return _infeasible(layout)
    ev = nm_eval(z, g, v2)
    b, dS = ev.post_mean, ev.post_mean_deriv
    lz = ev.d_z

    r = data.y - data.operator.matvec(b)
    rss = float(r @ r)
    pen = -ev.logml - 0.5 * v2 * lz * lz
    value = rss / (2.0 * sigma2) + float(np.sum(pen)) + _constants(data, sigma2)

    gb = -data.operator.rmatvec(r) / sigma2
    resid_grad = gb - lz
    grad = np.empty(layout.size)
    grad[layout.coef] = dS * resid_grad
    d_nat = (v2 * resid_grad) @ ev.d_zprior - ev.d_prior.sum(axis=0)
    grad[layout.prior_block] = g.packed_grad(d_nat)
    d_v2 = resid_grad * (lz + v2 * ev.d_zs2) + lz * lz - ev.d_s2 - 0.5 * lz * lz
    grad[-1] = _log_sigma2_grad(rss, sigma2, d_v2, data)
    return ObjectiveValue(value, grad, coef=b)


def recover_coefficients(z, g: Prior, sigma2: float, data: RegressionData):
    """Posterior means ``b_j = S(z_j)`` with ``v_j^2 = sigma2 * d_j^2``."""
    return posterior_mean(z, g, sigma2 * data.d2)


def make_objective(method: str, data: RegressionData, layout: ParamLayout,
                   invert_opts: InversionOptions | None = None, stats: dict | None = None):
    """Return ``f(x) -> (value, grad)`` for :func:`vebreg.optim.minimize`."""
    if method == "direct":
        def f(x):
            ov = objective_direct(x, data, layout, invert_opts, stats)
            return ov.value, ov.grad
    elif method == "compound":
        def f(x):
            ov = objective_compound(x, data, layout, stats)
            return ov.value, ov.grad
    else:
        raise DomainError(f"unknown method {method!r}")
    return f


def restrict(fun, x_full, free):
    """Freeze all entries of ``x_full`` except ``free`` (indices or mask).

    Returns ``f(x_free) -> (value, grad_free)`` and a function that embeds a
    free sub-vector back into the full vector.
    """
    x_full = np.array(x_full, dtype=float)
    free = np.arange(x_full.size)[free]

    def embed(x_free):
        x = x_full.copy()
        x[free] = x_free
        return x

    def f(x_free):
        value, grad = fun(embed(x_free))
        return value, grad[free]

    return f, embed
