"""Prior families and normal-means quantities.

A prior ``g`` is a zero-centered scale mixture of normals,
``g = sum_k pi_k N(0, var_k)``, where the mixture proportions ``pi`` and the
component variances ``var`` are functions of a small set of *natural*
parameters (the ash weights, or ``(w, slab_variance)`` for point-normal).
For an observation ``z ~ N(mu, s2)`` with ``mu ~ g`` the marginal density is
``sum_k pi_k N(z | 0, var_k + s2)``, so every quantity below has a closed
form.  All evaluations are vectorized over ``z`` (and ``s2``, which
broadcasts against ``z``).

Derivatives with respect to prior parameters are returned in natural
parameter space.  The chain rule to the packed (unconstrained) space is
``Prior.packed_grad``.
"""
from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import expit, logit, softmax

from .errors import DomainError

LOG_2PI = np.log(2.0 * np.pi)


def default_ash_grid(K: int) -> np.ndarray:
    """Variance grid ``(2**((k-1)/K) - 1)**2`` for ``k = 1..K``.

    The first entry is exactly zero (a point mass at zero).
    """
    if int(K) != K or K < 1:
        raise DomainError(f"grid size must be a positive integer, got {K!r}")
    k = np.arange(K, dtype=float)
    return (2.0 ** (k / K) - 1.0) ** 2


class Prior(ABC):
    """Zero-centered normal scale mixture with a packed parameterization."""

    family: str = ""

    @property
    @abstractmethod
    def n_packed(self) -> int:
        """Length of the unconstrained packed vector."""

    @abstractmethod
    def mixture(self):
        """Return ``(log_pi, var)``, both of length ``K``."""

    @abstractmethod
    def mixture_jacobians(self):
        """Return ``(J_pi, J_var)``, each ``K x P``.

        Entry ``[k, i]`` is the derivative of ``pi_k`` (resp. ``var_k``) with
        respect to natural parameter ``i``. ``J_pi=None`` means the natural
        parameters are the proportions themselves; ``J_var=None`` means the
        component variances are fixed.
        """

    @abstractmethod
    def pack(self) -> np.ndarray:
        ...

    @abstractmethod
    def with_packed(self, v) -> "Prior":
        """New prior of the same family and grid from a packed vector."""

    @abstractmethod
    def packed_grad(self, grad_natural) -> np.ndarray:
        """Chain a gradient over natural parameters to packed space."""

    def single_normal_variance(self) -> Optional[float]:
        """Variance of the only component carrying mass, or ``None``."""
        log_pi, var = self.mixture()
        live = np.isfinite(log_pi) & (np.exp(log_pi) > 0)
        if np.count_nonzero(live) != 1:
            # components sharing one variance still form a single normal
            if np.count_nonzero(live) > 1 and np.ptp(var[live]) == 0:
                return float(var[live][0])
            return None
        return float(var[live][0])


@dataclass(frozen=True, eq=False)
class AshPrior(Prior):
    """Finite scale mixture of zero-mean normals on a fixed variance grid.

    Parameters
    ----------
    grid_variances : array_like
        Ascending, nonnegative component variances. The first may be 0.
    weights : array_like, optional
        Mixture proportions on the simplex. Defaults to uniform.
    """

    grid_variances: np.ndarray
    weights: Optional[np.ndarray] = None

    family = "ash"

    def __post_init__(self):
        grid = np.array(self.grid_variances, dtype=float).ravel()
        if grid.size == 0:
            raise DomainError("ash prior needs at least one grid component")
        if np.any(np.isnan(grid)) or np.any(grid < 0) or np.any(np.diff(grid) < 0):
            raise DomainError("grid variances must be nonnegative and ascending")
        if self.weights is None:
            w = np.full(grid.size, 1.0 / grid.size)
        else:
            w = np.array(self.weights, dtype=float).ravel()
        if w.shape != grid.shape:
            raise DomainError("weights and grid must have the same length")
        if np.any(np.isnan(w)) or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-10:
            raise DomainError("weights must lie on the probability simplex")
        w = w / w.sum()
        grid.flags.writeable = False
        w.flags.writeable = False
        object.__setattr__(self, "grid_variances", grid)
        object.__setattr__(self, "weights", w)

    @property
    def K(self) -> int:
        return self.grid_variances.size

    @property
    def logits(self) -> np.ndarray:
        """Softmax pre-image of the weights, with the last logit pinned to 0."""
        with np.errstate(divide="ignore"):
            lw = np.log(self.weights)
        return lw - lw[-1]

    @property
    def n_packed(self) -> int:
        return self.K - 1

    def mixture(self):
        with np.errstate(divide="ignore"):
            return np.log(self.weights), self.grid_variances

    def mixture_jacobians(self):
        return None, None

    def pack(self) -> np.ndarray:
        if self.weights[-1] <= 0 or np.any(self.weights <= 0):
            raise DomainError("cannot pack ash weights containing zeros")
        return self.logits[:-1].copy()

    @classmethod
    def from_logits(cls, logits, grid_variances) -> "AshPrior":
        logits = np.asarray(logits, dtype=float)
        if np.any(np.isnan(logits)):
            raise DomainError("NaN in ash logits")
        return cls(grid_variances, softmax(logits))

    def with_packed(self, v) -> "AshPrior":
        v = np.asarray(v, dtype=float).ravel()
        if v.size != self.n_packed:
            raise DomainError(f"expected {self.n_packed} packed ash parameters, got {v.size}")
        return AshPrior.from_logits(np.append(v, 0.0), self.grid_variances)

    def packed_grad(self, grad_natural) -> np.ndarray:
        G = np.asarray(grad_natural, dtype=float)
        w = self.weights
        return (w * (G - np.dot(w, G)))[:-1]


@dataclass(frozen=True, eq=False)
class PointNormalPrior(Prior):
    """Spike-and-slab prior ``(1 - w) delta_0 + w N(0, slab_variance)``."""

    w: float = 0.5
    slab_variance: float = 1.0

    family = "point-normal"

    def __post_init__(self):
        w, s = float(self.w), float(self.slab_variance)
        if not (0.0 <= w <= 1.0) or not (s >= 0.0):
            raise DomainError(f"invalid point-normal parameters w={w}, slab_variance={s}")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "slab_variance", s)

    @property
    def n_packed(self) -> int:
        return 2

    def mixture(self):
        with np.errstate(divide="ignore"):
            log_pi = np.log(np.array([1.0 - self.w, self.w]))
        return log_pi, np.array([0.0, self.slab_variance])

    def mixture_jacobians(self):
        J_pi = np.array([[-1.0, 0.0], [1.0, 0.0]])
        J_var = np.array([[0.0, 0.0], [0.0, 1.0]])
        return J_pi, J_var

    def pack(self) -> np.ndarray:
        if not (0.0 < self.w < 1.0) or self.slab_variance <= 0:
            raise DomainError("point-normal packing needs 0 < w < 1 and slab_variance > 0")
        return np.array([logit(self.w), np.log(self.slab_variance)])

    def with_packed(self, v) -> "PointNormalPrior":
        v = np.asarray(v, dtype=float).ravel()
        if v.size != 2 or np.any(np.isnan(v)):
            raise DomainError("point-normal packed vector must hold two finite numbers")
        return PointNormalPrior(expit(v[0]), np.exp(v[1]))

    def packed_grad(self, grad_natural) -> np.ndarray:
        G = np.asarray(grad_natural, dtype=float)
        return np.array([G[0] * self.w * (1.0 - self.w), G[1] * self.slab_variance])


def pack_prior(g: Prior) -> np.ndarray:
    return g.pack()


def unpack_prior(v, family: str, grid=None) -> Prior:
    """Inverse of :func:`pack_prior`.

    ``grid`` is required for the ash family (its variances are not packed).
    """
    v = np.asarray(v, dtype=float)
    if np.any(np.isnan(v)):
        raise DomainError("NaN in packed prior")
    if family == "ash":
        if grid is None:
            raise DomainError("ash prior needs its variance grid to unpack")
        return AshPrior(grid, np.full(len(grid), 1.0 / len(grid))).with_packed(v)
    if family == "point-normal":
        return PointNormalPrior().with_packed(v)
    raise DomainError(f"unknown prior family {family!r}")


@dataclass
class NmEval:
    """Normal-means log marginal likelihood and its partial derivatives.

    ``d_prior`` is over natural prior parameters (last axis). The mixed
    partials ``d_zprior`` and ``d_zs2`` (derivatives of ``d_z``) and the
    shrinkage values ``post_mean`` / ``post_mean_deriv`` are filled in by
    :func:`nm_eval`; :func:`nm_logml` leaves the mixed partials empty.
    """

    logml: np.ndarray
    d_z: np.ndarray
    d_zz: np.ndarray
    d_prior: np.ndarray
    d_s2: np.ndarray
    d_zprior: Optional[np.ndarray] = None
    d_zs2: Optional[np.ndarray] = None
    post_mean: Optional[np.ndarray] = None
    post_mean_deriv: Optional[np.ndarray] = None


def _check_s2(s2):
    s2 = np.asarray(s2, dtype=float)
    if np.any(~(s2 > 0)):
        raise DomainError("normal-means variance s2 must be positive")
    return s2


class _Parts:
    """Per-component arrays, laid out components-first as ``(K, m)``.

    Reductions over the (short) component axis are far faster in this
    layout; public results are reshaped back to the shape of ``z``.
    """

    def __init__(self, z, g: Prior, s2):
        z = np.asarray(z, dtype=float)
        s2 = _check_s2(s2)
        z, s2 = np.broadcast_arrays(z, s2)
        self.shape = z.shape
        self.z = z.ravel()
        self.s2 = s2.ravel()
        log_pi, var = g.mixture()
        self.var = var[:, None]
        t = self.var + self.s2
        self.inv_t = np.reciprocal(t)
        log_n = np.log(t, out=t)
        log_n += LOG_2PI
        log_n += (self.z * self.z) * self.inv_t
        log_n *= -0.5
        self.log_n = log_n
        L = log_n + log_pi[:, None]
        top = L.max(axis=0)
        L -= top
        e = np.exp(L, out=L)
        total = e.sum(axis=0)
        e /= total
        self.resp = e
        self.logml = top + np.log(total)

    def out(self, v):
        return v.reshape(self.shape)

    def out_params(self, M, J):
        # (K, m) -> (..., P)
        M = M.T if J is None else M.T @ J
        return M.reshape(self.shape + (M.shape[-1],))

    def shrink(self):
        # responsibility form: no cancellation between z and s2 * d_z
        ratio = (self.resp * (self.var * self.inv_t)).sum(axis=0)
        r_inv_t = self.resp * self.inv_t
        m1 = r_inv_t.sum(axis=0)
        m2 = (r_inv_t * self.inv_t).sum(axis=0)
        dS = ratio + self.s2 * self.z * self.z * np.maximum(m2 - m1 * m1, 0.0)
        return self.z * ratio, dS, m1, m2


def nm_eval(z, g: Prior, s2, mixed: bool = True) -> NmEval:
    """Full normal-means evaluation at ``z`` with noise variance ``s2``."""
    P = _Parts(z, g, s2)
    J_pi, J_var = g.mixture_jacobians()
    z, resp, inv_t = P.z, P.resp, P.inv_t
    a = -z * inv_t                         # d log N_k / dz
    d_z = (resp * a).sum(axis=0)
    S, dS, m1, m2 = P.shrink()
    z2 = z * z
    d_zz = z2 * m2 - m1 - d_z * d_z
    # d log N_k / dt_k = (z^2 inv_t^2 - inv_t) / 2, averaged over resp
    d_s2 = 0.5 * (z2 * m2 - m1)
    with np.errstate(over="ignore"):
        q = np.exp(P.log_n - P.logml)     # d logml / d pi_k
    d_prior = P.out_params(q, J_pi)
    if J_var is not None or mixed:
        c = 0.5 * (z2 * inv_t - 1.0) * inv_t
    if J_var is not None:
        d_prior = d_prior + P.out_params(resp * c, J_var)

    out = NmEval(P.out(P.logml), P.out(d_z), P.out(d_zz), d_prior, P.out(d_s2))
    if mixed:
        a_c = a - d_z
        d_zprior = P.out_params(q * a_c, J_pi)
        dvar_z = resp * (z * inv_t * inv_t + c * a_c)
        if J_var is not None:
            d_zprior = d_zprior + P.out_params(dvar_z, J_var)
        out.d_zprior = d_zprior
        out.d_zs2 = P.out(dvar_z.sum(axis=0))
        out.post_mean = P.out(S)
        out.post_mean_deriv = P.out(dS)
    return out


def nm_logml(z, g: Prior, s2) -> NmEval:
    """Log marginal likelihood ``log sum_k pi_k N(z | 0, var_k + s2)`` and partials."""
    return nm_eval(z, g, s2, mixed=False)


def posterior_mean(z, g: Prior, s2):
    """Posterior mean ``E[mu | z]``, equal to ``z + s2 * d_z logml`` by Tweedie."""
    P = _Parts(z, g, s2)
    return P.out(P.z * (P.resp * (P.var * P.inv_t)).sum(axis=0))


def posterior_mean_deriv(z, g: Prior, s2):
    """Derivative of :func:`posterior_mean` with respect to ``z``."""
    P = _Parts(z, g, s2)
    return P.out(P.shrink()[1])
