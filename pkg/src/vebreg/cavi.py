"""Coordinate-ascent updates of posterior means under a fixed prior and sigma2.

Each coordinate moves to ``b_j = S(z_j)`` with the single-coordinate
least-squares estimate ``z_j = b_j + d_j^2 x_j' r`` and ``v_j^2 = sigma2 d_j^2``.
A fixed point of these updates is a stationary point of the direct objective
in the coefficient block, which makes the sweep a useful independent oracle.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .objective import RegressionData
from .priors import Prior, posterior_mean


@dataclass
class CaviState:
    coef: np.ndarray
    residual: np.ndarray
    prior: Prior
    sigma2: float
    n_sweeps: int = 0

    @classmethod
    def initial(cls, data: RegressionData, prior: Prior, sigma2: float, coef=None):
        coef = np.zeros(data.p) if coef is None else np.array(coef, dtype=float)
        return cls(coef, data.y - data.operator.matvec(coef), prior, float(sigma2))


def cavi_sweep(state: CaviState, data: RegressionData) -> CaviState:
    """One ascending pass over all coordinates; returns a new state."""
    b = state.coef.copy()
    r = state.residual.copy()
    op = data.operator
    v2 = state.sigma2 * data.d2
    for j in range(data.p):
        x_j = op.column(j)
        z_j = b[j] + data.d2[j] * (x_j @ r)
        b_new = float(posterior_mean(z_j, state.prior, v2[j]))
        if b_new != b[j]:
            r -= x_j * (b_new - b[j])
            b[j] = b_new
    # resynchronize to cap drift from the incremental updates
    r = data.y - op.matvec(b)
    return CaviState(b, r, state.prior, state.sigma2, state.n_sweeps + 1)


def cavi_fit(data: RegressionData, prior: Prior, sigma2: float, tol: float = 1e-8,
             max_sweeps: int = 5000, coef=None, trace: list | None = None):
    """Sweep until ``max |delta b| <= tol``; returns ``(coef, n_sweeps)``.

    If ``trace`` is a list, the coefficient vector after every sweep is
    appended to it.
    """
    state = CaviState.initial(data, prior, sigma2, coef)
    for _ in range(max_sweeps):
        new = cavi_sweep(state, data)
        if trace is not None:
            trace.append(new.coef.copy())
        delta = np.max(np.abs(new.coef - state.coef)) if data.p else 0.0
        state = new
        if delta <= tol:
            break
    return state.coef, state.n_sweeps
