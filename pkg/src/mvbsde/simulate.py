"""Path simulation for the factor and for wealth under a trading policy.

All randomness for one ensemble comes from a single PCG64 generator seeded
once; the normal draws are shaped (n_paths, 2, n_steps), so path m consumes
a contiguous block of the stream and is reproducible independently of how
many paths follow it.

Factor schemes: full-truncation Euler for p in (0, 1] (raw iterates are
stored, the positive part enters drift and diffusion), plain Euler for
p = 0, and an exact Gaussian transition for the p = 0 case.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import MarketModel, coefficients_at

__all__ = ["TimeGrid", "PathEnsemble", "WealthPath", "simulate_factor", "simulate_wealth"]


@dataclass(frozen=True)
class TimeGrid:
    horizon: float
    n_steps: int

    def __post_init__(self):
        if self.n_steps < 1:
            raise ValueError("need at least one time step")
        if not (self.horizon > 0.0 and math.isfinite(self.horizon)):
            raise ValueError("horizon must be positive and finite")

    @property
    def dt(self) -> float:
        return self.horizon / self.n_steps

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.n_steps + 1)


@dataclass(frozen=True)
class PathEnsemble:
    """Simulated factor paths plus the Brownian increments that drove them.

    factor has shape (n_paths, n_steps + 1); db_factor and db_stock have
    shape (n_paths, n_steps).  db_stock is correlated with db_factor at the
    model's rho_corr.
    """

    grid: TimeGrid
    factor: np.ndarray
    db_factor: np.ndarray
    db_stock: np.ndarray
    seed: int
    scheme: str

    @property
    def n_paths(self) -> int:
        return self.factor.shape[0]


@dataclass(frozen=True)
class WealthPath:
    grid: TimeGrid
    wealth: np.ndarray  # (n_paths, n_steps + 1)
    policy_values: np.ndarray  # (n_paths, n_steps)
    policy_used: str = ""


def simulate_factor(model: MarketModel, grid: TimeGrid, n_paths: int, seed: int,
                    scheme: str = "auto") -> PathEnsemble:
    """Simulate the factor and both correlated Brownian increment arrays.

    scheme: "auto" picks full truncation for p > 0 and plain Euler for
    p = 0; "exact_ou" (p = 0 only) uses the exact Gaussian transition with
    the same draws in place of the Euler step.
    """
    p = model.ckls.p
    if scheme == "auto":
        scheme = "full_truncation" if p > 0.0 else "euler"
    if scheme == "full_truncation" and p == 0.0:
        raise ValueError("full truncation needs p > 0; use euler or exact_ou")
    if scheme == "exact_ou" and p != 0.0:
        raise ValueError("exact transition is only available at p = 0")
    if scheme not in ("full_truncation", "euler", "exact_ou"):
        raise ValueError(f"unknown scheme {scheme!r}")
    if n_paths < 1:
        raise ValueError("need at least one path")

    a, b, sigma = model.ckls.a, model.ckls.b, model.ckls.sigma
    rho = model.stock.rho_corr
    n = grid.n_steps
    dt = grid.dt
    sq = math.sqrt(dt)

    z = np.random.default_rng(seed).standard_normal((n_paths, 2, n))
    db_r = sq * z[:, 0, :]
    db_s = rho * db_r + math.sqrt(1.0 - rho * rho) * (sq * z[:, 1, :])

    r = np.empty((n_paths, n + 1))
    r[:, 0] = model.ckls.r0_factor
    if scheme == "full_truncation":
        for i in range(n):
            pos = np.maximum(r[:, i], 0.0)
            r[:, i + 1] = r[:, i] + (a - b * pos) * dt + sigma * pos ** p * db_r[:, i]
    elif scheme == "euler":
        for i in range(n):
            r[:, i + 1] = r[:, i] + (a - b * r[:, i]) * dt + sigma * db_r[:, i]
    else:
        # exact OU transition driven by the same normals as the Euler step
        decay = math.exp(-b * dt)
        mean_shift = a * dt if b == 0.0 else a * (-math.expm1(-b * dt)) / b
        std = sigma * math.sqrt(dt if b == 0.0
                                else (-math.expm1(-2.0 * b * dt)) / (2.0 * b))
        for i in range(n):
            r[:, i + 1] = r[:, i] * decay + mean_shift + std * z[:, 0, i]

    return PathEnsemble(grid=grid, factor=r, db_factor=db_r, db_stock=db_s,
                        seed=seed, scheme=scheme)


def simulate_wealth(model: MarketModel, policy, ensemble: PathEnsemble,
                    w0: float = 1.0) -> WealthPath:
    """Euler wealth paths under a wealth-independent fraction-in-stock policy.

    policy(s, r) must accept a vector of factor values and return the
    invested fractions.  Factor values are clamped to their positive part
    before entering the stock coefficients when the model carries
    fractional exponents.
    """
    grid = ensemble.grid
    n = grid.n_steps
    dt = grid.dt
    clamp = model.fractional_powers()
    nodes = grid.nodes

    w = np.empty((ensemble.n_paths, n + 1))
    w[:, 0] = w0
    u_all = np.empty((ensemble.n_paths, n))
    for i in range(n):
        r_i = ensemble.factor[:, i]
        r_eval = np.maximum(r_i, 0.0) if clamp else r_i
        u = np.asarray(policy(nodes[i], r_eval), dtype=float)
        if u.ndim == 0:
            u = np.full(ensemble.n_paths, float(u))
        coef = coefficients_at(model, nodes[i], np.maximum(r_eval, 1e-12) if clamp else r_eval)
        growth = (model.stock.r0 + u * coef["beta_excess"]) * dt \
            + u * coef["sigma_stock"] * ensemble.db_stock[:, i]
        w[:, i + 1] = w[:, i] * (1.0 + growth)
        u_all[:, i] = u
    return WealthPath(grid=grid, wealth=w, policy_values=u_all,
                      policy_used=str(getattr(policy, "policy_id", "")))
