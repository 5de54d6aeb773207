"""Limited-memory BFGS with a strong-Wolfe line search.

Parameters are unconstrained; bounded quantities are reparameterized by the
caller.  The objective is a callable ``fun(x) -> (value, grad)``.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np

from .errors import DomainError, NumericalError

STATUSES = ("converged_grad", "converged_obj", "max_iters", "line_search_failure")


@dataclass(frozen=True)
class SolverOptions:
    memory: int = 10
    max_iters: int = 2000
    grad_tol: float = 1e-5
    rel_obj_tol: float = 1e-9
    c1: float = 1e-4
    c2: float = 0.9
    max_ls: int = 40

    def __post_init__(self):
        if not (0 < self.c1 < self.c2 < 1):
            raise DomainError("line-search constants need 0 < c1 < c2 < 1")
        if self.memory < 1:
            raise DomainError("memory must be at least 1")


@dataclass
class SolverResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    trace: list = field(default_factory=list)
    grad_norm: float = math.inf
    n_iters: int = 0
    n_fev: int = 0
    status: str = "max_iters"

    @property
    def converged(self) -> bool:
        return self.status.startswith("converged")


class StepInfo(NamedTuple):
    """Accepted step, passed to the optional callback."""

    iteration: int
    x: np.ndarray
    f: float
    grad: np.ndarray
    step: float
    f0: float
    dphi0: float
    dphi: float


def _two_loop(g, S, Y):
    q = g.copy()
    alphas = []
    for s, y in zip(reversed(S), reversed(Y)):
        rho = 1.0 / (y @ s)
        a = rho * (s @ q)
        q -= a * y
        alphas.append((rho, a))
    s, y = S[-1], Y[-1]
    q *= (s @ y) / (y @ y)
    for (s, y), (rho, a) in zip(zip(S, Y), reversed(alphas)):
        q += (a - rho * (y @ q)) * s
    return q


def _cubic_min(a0, f0, d0, a1, f1, d1):
    """Minimizer of the cubic interpolating two points and slopes, or None."""
    if not all(map(math.isfinite, (f0, d0, f1, d1))) or a0 == a1:
        return None
    e1 = d0 + d1 - 3.0 * (f0 - f1) / (a0 - a1)
    disc = e1 * e1 - d0 * d1
    if disc < 0:
        return None
    e2 = math.copysign(math.sqrt(disc), a1 - a0)
    den = d1 - d0 + 2.0 * e2
    if den == 0:
        return None
    return a1 - (a1 - a0) * (d1 + e2 - e1) / den


class _LineSearch:
    """Strong-Wolfe search: bracketing phase then zoom with cubic interpolation."""

    def __init__(self, fun, x, f0, g0, d, opts):
        self.fun, self.x, self.d = fun, x, d
        self.f0 = f0
        self.dphi0 = float(g0 @ d)
        self.opts = opts
        self.n_eval = 0

    def _phi(self, a):
        self.n_eval += 1
        # trial points may leave the representable range; those come back as inf
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            f, g = self.fun(self.x + a * self.d)
        f = float(f)
        g = np.asarray(g, dtype=float)
        if not math.isfinite(f) or not np.all(np.isfinite(g)):
            return math.inf, math.nan, g
        return f, float(g @ self.d), g

    def _armijo(self, a, f):
        return f <= self.f0 + self.opts.c1 * a * self.dphi0

    def _curvature(self, dphi):
        return abs(dphi) <= -self.opts.c2 * self.dphi0

    def run(self, alpha):
        a_prev, f_prev, d_prev = 0.0, self.f0, self.dphi0
        first = True
        while self.n_eval < self.opts.max_ls:
            f, dphi, g = self._phi(alpha)
            if not self._armijo(alpha, f) or (not first and f >= f_prev):
                return self._zoom((a_prev, f_prev, d_prev), (alpha, f, dphi))
            if self._curvature(dphi):
                return alpha, f, g, dphi
            if dphi >= 0:
                return self._zoom((alpha, f, dphi), (a_prev, f_prev, d_prev))
            a_prev, f_prev, d_prev = alpha, f, dphi
            alpha *= 2.0
            first = False
        return None

    def _zoom(self, lo, hi):
        while self.n_eval < self.opts.max_ls:
            (a_lo, f_lo, d_lo), (a_hi, f_hi, d_hi) = lo, hi
            width = abs(a_hi - a_lo)
            # relative to the step scale: badly scaled problems need tiny steps
            if width <= 1e-14 * max(abs(a_lo), abs(a_hi)):
                return None
            a = _cubic_min(a_lo, f_lo, d_lo, a_hi, f_hi, d_hi)
            left, right = min(a_lo, a_hi), max(a_lo, a_hi)
            if a is None or not math.isfinite(a):
                a = 0.5 * (a_lo + a_hi)
            else:
                a = min(max(a, left + 0.1 * width), right - 0.1 * width)
            f, dphi, g = self._phi(a)
            if not self._armijo(a, f) or f >= f_lo:
                hi = (a, f, dphi)
            else:
                if self._curvature(dphi):
                    return a, f, g, dphi
                if dphi * (a_hi - a_lo) >= 0:
                    hi = lo
                lo = (a, f, dphi)
        return None


def minimize(fun: Callable, x0, opts: SolverOptions | None = None,
             callback: Optional[Callable[[StepInfo], None]] = None) -> SolverResult:
    """Minimize ``fun`` from ``x0`` with L-BFGS.

    Stops when the gradient infinity norm falls to ``grad_tol``, when the
    relative objective change between accepted iterates falls to
    ``rel_obj_tol``, or after ``max_iters`` iterations.  A failed line
    search clears the memory and retries from steepest descent once; a
    second consecutive failure ends the run with status
    ``line_search_failure``.
    """
    opts = opts or SolverOptions()
    x = np.array(x0, dtype=float)
    f, g = fun(x)
    f, g = float(f), np.array(g, dtype=float)
    if not math.isfinite(f) or not np.all(np.isfinite(g)):
        raise NumericalError("objective or gradient is not finite at the initial point", x=x)
    res = SolverResult(x=x, fun=f, grad=g, trace=[f], n_fev=1)
    S: deque = deque(maxlen=opts.memory)
    Y: deque = deque(maxlen=opts.memory)

    gnorm = float(np.max(np.abs(g))) if g.size else 0.0
    status = "converged_grad" if gnorm <= opts.grad_tol else "max_iters"
    it = 0
    just_reset = False
    while status == "max_iters" and it < opts.max_iters:
        if S:
            d = -_two_loop(g, S, Y)
            alpha0 = 1.0
        else:
            d = -g
            alpha0 = 1.0 / max(np.linalg.norm(g), 1e-300)
        if not g @ d < 0:
            S.clear()
            Y.clear()
            d = -g
            alpha0 = 1.0 / max(np.linalg.norm(g), 1e-300)

        ls = _LineSearch(fun, x, f, g, d, opts)
        found = ls.run(alpha0)
        res.n_fev += ls.n_eval
        if found is None:
            if just_reset:
                status = "line_search_failure"
                break
            S.clear()
            Y.clear()
            just_reset = True
            continue
        just_reset = False
        alpha, f_new, g_new, dphi = found
        s = alpha * d
        x_new = x + s
        yv = g_new - g
        sy = float(s @ yv)
        if sy > 1e-12 * float(np.linalg.norm(s) * np.linalg.norm(yv)):
            S.append(s)
            Y.append(yv)
        it += 1
        if callback is not None:
            callback(StepInfo(it, x_new, f_new, g_new, alpha, f, ls.dphi0, dphi))

        obj_change = abs(f - f_new)
        x, f, g = x_new, f_new, g_new
        res.trace.append(f)
        gnorm = float(np.max(np.abs(g)))
        if gnorm <= opts.grad_tol:
            status = "converged_grad"
        elif obj_change <= opts.rel_obj_tol * max(abs(f), 1.0):
            status = "converged_obj"

    res.x, res.fun, res.grad = x, f, g
    res.grad_norm = float(np.max(np.abs(g))) if g.size else 0.0
    res.n_iters = it
    res.status = status
    return res
