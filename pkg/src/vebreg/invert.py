"""Inverse of the posterior-mean (shrinkage) operator.

Given targets ``b`` find ``z`` with ``posterior_mean(z, g, v2) == b``.  The
shrinkage operator is odd and monotone with ``0 <= S(z)/z <= 1``, so every
root lies at or beyond ``|b|`` on the same side of zero; all solvers work on
``|b|`` and restore the sign.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import DomainError, InternalError, InversionError
from .priors import Prior, posterior_mean

METHODS = ("auto", "trisection", "fssi", "analytic")


@dataclass(frozen=True)
class InversionOptions:
    tol: float = 1e-8
    max_expand: int = 60
    max_iters: int = 200
    method: str = "auto"
    fssi_points: int = 2000

    def __post_init__(self):
        if not self.tol > 0:
            raise DomainError("inversion tolerance must be positive")
        if self.max_iters < 1:
            raise DomainError("max_iters must be at least 1")
        if self.method not in METHODS:
            raise DomainError(f"unknown inversion method {self.method!r}")


def _prepare(b, v2):
    b = np.asarray(b, dtype=float)
    v2 = np.broadcast_to(np.asarray(v2, dtype=float), b.shape)
    if np.any(~(v2 > 0)):
        raise DomainError("v2 must be positive")
    if np.any(~np.isfinite(b)):
        raise DomainError("targets must be finite")
    return b, v2


def _trisect(t, s2, lo, hi, g, opts, index):
    """Lockstep trisection on brackets with ``S(lo) <= t <= S(hi)``."""
    best_z = lo.copy()
    best_r = np.abs(posterior_mean(lo, g, s2) - t)
    r_hi = np.abs(posterior_mean(hi, g, s2) - t)
    take = r_hi < best_r
    best_z[take], best_r[take] = hi[take], r_hi[take]
    width_tol = 1e-12 * np.maximum(1.0, t)
    done = (best_r <= opts.tol) | (hi - lo <= width_tol)

    for _ in range(opts.max_iters):
        act = np.flatnonzero(~done)
        if act.size == 0:
            break
        l, h, ta, sa = lo[act], hi[act], t[act], s2[act]
        third = (h - l) / 3.0
        m1, m2 = l + third, h - third
        S = posterior_mean(np.concatenate([m1, m2]), g, np.concatenate([sa, sa]))
        S1, S2 = S[: act.size], S[act.size:]

        for m, Sm in ((m1, S1), (m2, S2)):
            r = np.abs(Sm - ta)
            better = r < best_r[act]
            best_z[act[better]] = m[better]
            best_r[act[better]] = r[better]

        left = S1 > ta
        right = ~left & (S2 < ta)
        mid = ~left & ~right
        h = np.where(left, m1, np.where(mid, m2, h))
        l = np.where(right, m2, np.where(mid, m1, l))
        lo[act], hi[act] = l, h
        done[act] = (best_r[act] <= opts.tol) | (h - l <= width_tol[act])
    return best_z


def _expand_brackets(t, s2, g, opts, index):
    lo = t.copy()
    hi = 2.0 * t + 1.0
    S_lo = posterior_mean(lo, g, s2)
    if np.any(S_lo > t * (1.0 + 1e-12) + 1e-300):
        j = index[np.argmax(S_lo - t)]
        raise InternalError(f"shrinkage operator exceeds its argument at coordinate {j}")
    S_hi = posterior_mean(hi, g, s2)
    for _ in range(opts.max_expand):
        need = np.flatnonzero(S_hi < t)
        if need.size == 0:
            break
        hi[need] *= 2.0
        S_hi[need] = posterior_mean(hi[need], g, s2[need])
    else:
        need = np.flatnonzero(S_hi < t)
        if need.size:
            j = index[need[0]]
            raise InversionError(
                f"could not bracket the inverse at coordinate {j} after "
                f"{opts.max_expand} doublings", index=int(j))
    return lo, hi


def invert_trisection(b, g: Prior, v2, opts: InversionOptions | None = None):
    """Invert ``S`` coordinate-wise, all coordinates iterated together."""
    opts = opts or InversionOptions()
    b, v2 = _prepare(b, v2)
    flat_b, flat_v2 = b.ravel(), v2.ravel()
    z = np.zeros(flat_b.size)
    idx = np.flatnonzero(flat_b != 0)
    if idx.size:
        t, s2 = np.abs(flat_b[idx]), flat_v2[idx].copy()
        lo, hi = _expand_brackets(t, s2, g, opts, idx)
        z[idx] = np.sign(flat_b[idx]) * _trisect(t, s2, lo, hi, g, opts, idx)
    return z.reshape(b.shape)


def _fssi_grid(z_max, n_points):
    n_lin = n_points // 2
    lin = np.linspace(0.0, 1.0, n_lin)
    geo = np.geomspace(1.0, max(z_max, 1.0 + 1e-9), n_points - n_lin + 1)[1:]
    return np.concatenate([lin, geo])


def invert_fssi(b, g: Prior, v2: float, opts: InversionOptions | None = None):
    """Invert ``S`` for a single shared ``v2`` by swapping axes and interpolating.

    ``S`` is tabulated once on a grid over ``[0, z_max]``; a monotone cubic
    (PCHIP) interpolant of ``z`` as a function of ``S(z)`` gives the inverse.
    Queries whose forward residual exceeds ``opts.tol`` are finished by
    trisection inside the grid cell that brackets them.
    """
    opts = opts or InversionOptions()
    v2 = float(np.asarray(v2, dtype=float).ravel()[0]) if np.ndim(v2) else float(v2)
    b, _ = _prepare(b, v2)
    flat_b = b.ravel()
    z = np.zeros(flat_b.size)
    idx = np.flatnonzero(flat_b != 0)
    if idx.size == 0:
        return z.reshape(b.shape)
    t = np.abs(flat_b[idx])
    t_max = t.max()

    z_max = max(10.0, 2.0 * t_max)
    for _ in range(opts.max_expand + 1):
        grid = _fssi_grid(z_max, opts.fssi_points)
        S = posterior_mean(grid, g, v2)
        if S[-1] >= t_max:
            break
        z_max *= 2.0
    else:
        raise InversionError(
            f"FSSI grid could not reach target {t_max:g} after {opts.max_expand} extensions",
            index=int(idx[np.argmax(t)]))

    keep = np.concatenate([[True], S[1:] > np.maximum.accumulate(S)[:-1]])
    S_k, grid_k = S[keep], grid[keep]
    zhat = PchipInterpolator(S_k, grid_k, extrapolate=False)(t)

    s2 = np.full(t.size, v2)
    resid = np.abs(posterior_mean(zhat, g, s2) - t)
    bad = np.flatnonzero(~(resid <= opts.tol))
    if bad.size:
        cell = np.clip(np.searchsorted(S_k, t[bad], side="left"), 1, S_k.size - 1)
        lo, hi = grid_k[cell - 1].copy(), grid_k[cell].copy()
        zhat[bad] = _trisect(t[bad], s2[bad], lo, hi, g, opts, idx[bad])
    z[idx] = np.sign(flat_b[idx]) * zhat
    return z.reshape(b.shape)


def invert_analytic(b, var: float, v2):
    """Inverse for a single normal prior ``N(0, var)``."""
    b, v2 = _prepare(b, v2)
    if var <= 0:
        if np.any(b != 0):
            raise InversionError("a point-mass prior maps every z to 0; nonzero target")
        return np.zeros_like(b)
    return b * (var + v2) / var


def choose_method(g: Prior, v2) -> str:
    if g.single_normal_variance() is not None:
        return "analytic"
    v2 = np.asarray(v2, dtype=float)
    if v2.ndim == 0 or v2.size == 1 or np.ptp(v2) <= 1e-12 * np.max(np.abs(v2)):
        return "fssi"
    return "trisection"


def invert(b, g: Prior, v2, opts: InversionOptions | None = None):
    """Dispatch to the analytic, FSSI or trisection inverse."""
    opts = opts or InversionOptions()
    method = opts.method if opts.method != "auto" else choose_method(g, v2)
    if method == "analytic":
        var = g.single_normal_variance()
        if var is None:
            raise DomainError("analytic inversion requires a single-normal prior")
        return invert_analytic(b, var, v2)
    if method == "fssi":
        v2 = np.asarray(v2, dtype=float)
        return invert_fssi(b, g, float(v2.ravel()[0]), opts)
    return invert_trisection(b, g, v2, opts)
