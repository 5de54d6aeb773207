"""Seeded simulation designs and evaluation metrics."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .errors import DomainError

TF_SIGMAS = (0.2, 0.6, 1.0, 1.4, 1.8)


@dataclass(frozen=True)
class SimSpec:
    """Simulation settings.

    For linear regression give either ``pve`` (noise set to hit the target
    proportion of variance explained) or ``sigma_noise``.  ``n_test`` extra
    rows are drawn from the same design and coefficients for held-out
    evaluation.
    """

    kind: str = "iid"
    n: int = 500
    p: int = 10_000
    s: int = 10
    pve: Optional[float] = 0.6
    sigma_noise: Optional[float] = None
    n_blocks: int = 3
    min_block_size: int = 2000
    block_corr: float = 0.95
    n_test: int = 0
    n_changepoints: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("iid", "block", "trendfilter"):
            raise DomainError(f"unknown simulation kind {self.kind!r}")
        if self.n < 1:
            raise DomainError("n must be positive")
        if self.kind == "trendfilter":
            if self.sigma_noise is None or not self.sigma_noise >= 0:
                raise DomainError("trend-filter simulation needs a nonnegative sigma_noise")
            if not 0 <= self.n_changepoints < self.n:
                raise DomainError("n_changepoints must lie in [0, n)")
            return
        if self.p < 1 or not 0 <= self.s <= self.p:
            raise DomainError("need p >= 1 and 0 <= s <= p")
        if self.sigma_noise is None:
            if self.pve is None or not 0 < self.pve < 1:
                raise DomainError(f"pve must lie strictly between 0 and 1, got {self.pve}")
            if self.s == 0:
                raise DomainError("a PVE target needs at least one causal predictor")
        elif not self.sigma_noise > 0:
            raise DomainError("sigma_noise must be positive")
        if self.kind == "block":
            if not 0 <= self.block_corr < 1:
                raise DomainError("block correlation must lie in [0, 1)")
            if self.n_blocks * self.min_block_size > self.p:
                raise DomainError(
                    f"{self.n_blocks} blocks of at least {self.min_block_size} "
                    f"do not fit in p={self.p}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class LinRegSim:
    X: np.ndarray
    y: np.ndarray
    b_true: np.ndarray
    sigma2: float
    X_test: Optional[np.ndarray] = None
    y_test: Optional[np.ndarray] = None
    block_sizes: list = field(default_factory=list)


@dataclass
class TrendSim:
    x: np.ndarray
    y: np.ndarray
    mu_true: np.ndarray
    jumps: np.ndarray
    changepoints: np.ndarray


def random_block_sizes(rng, p, n_blocks, min_size):
    """Block sizes uniform over compositions of ``p`` with a floor of ``min_size``."""
    extra = p - n_blocks * min_size
    if extra < 0:
        raise DomainError(f"{n_blocks} blocks of at least {min_size} do not fit in p={p}")
    cuts = np.sort(rng.integers(0, extra + 1, size=n_blocks - 1))
    parts = np.diff(np.concatenate([[0], cuts, [extra]]))
    return [int(min_size + q) for q in parts]


def _design(rng, spec, n, block_sizes):
    Z = rng.standard_normal((n, spec.p))
    if spec.kind == "iid":
        return Z
    # shared factor per block gives within-block correlation block_corr
    rho = spec.block_corr
    U = rng.standard_normal((n, len(block_sizes)))
    factor = np.repeat(U, block_sizes, axis=1)
    return math.sqrt(rho) * factor + math.sqrt(1.0 - rho) * Z


def sim_linreg(spec: SimSpec) -> LinRegSim:
    """Sparse linear regression data; deterministic in ``spec`` (incl. seed)."""
    if spec.kind == "trendfilter":
        raise DomainError("use sim_trendfilter for trend-filter designs")
    rng = np.random.default_rng(spec.seed)
    sizes = (random_block_sizes(rng, spec.p, spec.n_blocks, spec.min_block_size)
             if spec.kind == "block" else [])
    X_all = _design(rng, spec, spec.n + spec.n_test, sizes)
    causal = rng.choice(spec.p, size=spec.s, replace=False)
    b = np.zeros(spec.p)
    b[causal] = rng.standard_normal(spec.s)

    X, X_test = X_all[: spec.n], X_all[spec.n:]
    mu = X @ b
    if spec.sigma_noise is None:
        sigma2 = float(np.var(mu, ddof=1) * (1.0 - spec.pve) / spec.pve)
    else:
        sigma2 = float(spec.sigma_noise) ** 2
    sd = math.sqrt(sigma2)
    y = mu + sd * rng.standard_normal(spec.n)
    out = LinRegSim(X, y, b, sigma2, block_sizes=sizes)
    if spec.n_test:
        out.X_test = X_test
        out.y_test = X_test @ b + sd * rng.standard_normal(spec.n_test)
    return out


def sim_trendfilter(spec: SimSpec) -> TrendSim:
    """Piecewise-constant trend on evenly spaced inputs plus Gaussian noise."""
    if spec.kind != "trendfilter":
        raise DomainError("sim_trendfilter needs kind='trendfilter'")
    rng = np.random.default_rng(spec.seed)
    n = spec.n
    cps = np.sort(rng.choice(np.arange(1, n), size=spec.n_changepoints, replace=False))
    jumps = np.zeros(n)
    jumps[cps] = rng.standard_normal(spec.n_changepoints)
    mu = np.cumsum(jumps)
    y = mu + spec.sigma_noise * rng.standard_normal(n)
    return TrendSim(np.linspace(0.0, 1.0, n), y, mu, jumps, cps)


def rmse(ref, pred) -> float:
    ref, pred = np.asarray(ref, dtype=float), np.asarray(pred, dtype=float)
    if ref.shape != pred.shape:
        raise DomainError("reference and prediction must have equal length")
    return float(np.linalg.norm(ref - pred) / math.sqrt(ref.size))


def metrics(ref, pred, elbo_method=None, elbo_ref=None, pred_ref=None) -> dict:
    """RMSE of ``pred`` against ``ref``, plus deltas against a reference method.

    ``delta_rmse_pct`` compares against ``pred_ref`` and is ``None`` when the
    reference RMSE is zero but the method's is not.
    """
    out = {"rmse": rmse(ref, pred)}
    if pred_ref is not None:
        r_ref = rmse(ref, pred_ref)
        if r_ref == 0:
            out["delta_rmse_pct"] = 0.0 if out["rmse"] == 0 else None
        else:
            out["delta_rmse_pct"] = 100.0 * (out["rmse"] - r_ref) / r_ref
    if elbo_method is not None and elbo_ref is not None:
        out["delta_elbo"] = float(elbo_method - elbo_ref)
    return out
