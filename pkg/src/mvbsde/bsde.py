"""Least-squares backward solver for tau-indexed BSDE families.

The unknown fields Y^tau_t, Z^tau_t live on the triangle t <= tau of a
shared time grid and are coupled through weighted sums over the tau index.
Each (t, tau) slot is represented by regression coefficients on a Laguerre
basis of the simulated factor value at t; the basis is shared by all tau
at a fixed t.

Backward recursion over layers t = N-1 .. 0.  Inside a layer, columns are
solved in descending tau order so the terminal column is available to the
generator; values this order cannot provide yet (lower columns at the same
layer) enter through their last-available estimates, and the whole
tau-descent is repeated for a configurable number of sweeps, stopping
early once the largest coefficient change drops below tolerance.  Each
column fit runs a short Picard loop: the generator consumes the previous
iterate's fields, and one joint least-squares pass fits the Y and Z
coefficients against the design [q(R_t), q(R_t) * dB_t].
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .model import MarketModel
from .regression import Basis, eval_basis, fit_standardization, lsq_solve
from .simulate import PathEnsemble, TimeGrid

__all__ = ["Generator", "SolverConfig", "BsdeSolution", "solve", "eval_Y", "eval_Z",
           "mv_generator", "trapezoid_tail_weights"]


@dataclass(frozen=True)
class Generator:
    """Driver of the backward system.

    h(tau_idx, t_idx, y1, y2, y3, z1, z2, z3, r) is evaluated per path:
    y1/z1 are the own-column fields at t, y2/z2 the weighted nonlocal sums
    over columns n = t..N (trapezoid-in-tau, weights phi resp. varphi),
    y3/z3 the terminal-column (tau = N) fields at t, and r the factor
    value.  phi(s, v) and varphi(s, v) must broadcast over a vector v.
    """

    h: callable
    phi: callable
    varphi: callable
    lipschitz: str = "deterministic"  # deterministic | stochastic

    def __post_init__(self):
        if self.lipschitz not in ("deterministic", "stochastic"):
            raise ValueError(f"unknown lipschitz tag {self.lipschitz!r}")


@dataclass(frozen=True)
class SolverConfig:
    basis_size: int = 3
    picard_iters: int = 3
    layer_sweeps: int = 2
    tol: float = 1e-6
    threads: int = 1

    def __post_init__(self):
        if min(self.basis_size, self.picard_iters, self.layer_sweeps, self.threads) < 1:
            raise ValueError("basis_size, picard_iters, layer_sweeps, threads must be >= 1")
        if not self.tol > 0.0:
            raise ValueError("tolerance must be positive")


@dataclass(frozen=True)
class BsdeSolution:
    grid: TimeGrid
    bases: tuple
    coef_y: np.ndarray  # (N+1, N+1, K); [t, tau] valid for tau > t
    coef_z: np.ndarray
    terminal: object    # callable (tau_idx, r) -> diagonal values
    diagnostics: dict = field(repr=False)


def trapezoid_tail_weights(n_from: int, n_to: int, dt: float) -> np.ndarray:
    """Trapezoid quadrature weights on the nodes n_from..n_to (inclusive)."""
    m = n_to - n_from
    if m == 0:
        return np.zeros(1)
    w = np.full(m + 1, dt)
    w[0] = w[-1] = 0.5 * dt
    return w


def _zero_terminal(tau_idx, r):
    return np.zeros_like(np.asarray(r, dtype=float))


def solve(generator: Generator, ensemble: PathEnsemble, config: SolverConfig,
          terminal=None) -> BsdeSolution:
    """Solve the backward system on the ensemble's grid.

    terminal(tau_idx, r) supplies the diagonal values Y^tau_tau (default 0,
    matching a pure running-cost system).  Returns the coefficient tables
    plus per-layer sweep diagnostics; a layer whose final sweep still moved
    coefficients by more than the tolerance is flagged, not fatal.
    """
    xi = terminal if terminal is not None else _zero_terminal
    grid = ensemble.grid
    n, dt = grid.n_steps, grid.dt
    m_paths = ensemble.n_paths
    k = config.basis_size
    if m_paths < 2 * k:
        raise ValueError("need at least 2*basis_size paths for the joint fit")
    r_all = ensemble.factor
    nodes = grid.nodes

    def _fit_slot(t):
        basis = fit_standardization(r_all[:, t], k)
        return basis, eval_basis(basis, r_all[:, t])

    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            slots = list(pool.map(_fit_slot, range(n + 1)))
    else:
        slots = [_fit_slot(t) for t in range(n + 1)]
    bases = tuple(s[0] for s in slots)
    q_all = [s[1] for s in slots]

    coef_y = np.zeros((n + 1, n + 1, k))
    coef_z = np.zeros((n + 1, n + 1, k))
    sweep_deltas = [[] for _ in range(n + 1)]
    converged = np.ones(n + 1, dtype=bool)
    worst_residual = 0.0

    for t in range(n - 1, -1, -1):
        qt = q_all[t]
        x_t = r_all[:, t]
        design = np.concatenate([qt, qt * ensemble.db_factor[:, t][:, None]], axis=1)
        xi_t = xi(t, x_t)
        wq = trapezoid_tail_weights(t, n, dt)
        wy = wq * np.asarray(generator.phi(nodes[t], nodes[t:]), dtype=float)
        wz = wq * np.asarray(generator.varphi(nodes[t], nodes[t:]), dtype=float)
        # next-time values per column are fixed data for every sweep
        y_next = {}
        for tau in range(n, t, -1):
            if tau == t + 1:
                y_next[tau] = xi(tau, r_all[:, t + 1])
            else:
                y_next[tau] = q_all[t + 1] @ coef_y[t + 1, tau]

        for sweep in range(config.layer_sweeps):
            prev_y = coef_y[t].copy()
            prev_z = coef_z[t].copy()
            for tau in range(n, t, -1):
                for _ in range(config.picard_iters):
                    y_here = qt @ coef_y[t].T
                    z_here = qt @ coef_z[t].T
                    y_here[:, t] = xi_t
                    z_here[:, t] = 0.0
                    h = generator.h(
                        tau, t,
                        y_here[:, tau], y_here[:, t:] @ wy, y_here[:, n],
                        z_here[:, tau], z_here[:, t:] @ wz, z_here[:, n],
                        x_t)
                    h = np.asarray(h, dtype=float)
                    if not np.all(np.isfinite(h)):
                        bad = int(np.flatnonzero(~np.isfinite(h))[0])
                        raise RuntimeError(
                            f"non-finite generator value at t={t}, tau={tau}, path {bad}")
                    fit = lsq_solve(design, y_next[tau] + dt * h)
                    coef_y[t, tau] = fit.coefficients[:k]
                    coef_z[t, tau] = fit.coefficients[k:]
                    worst_residual = max(worst_residual, fit.residual_norm)
            delta = max(np.max(np.abs(coef_y[t] - prev_y)),
                        np.max(np.abs(coef_z[t] - prev_z)))
            sweep_deltas[t].append(float(delta))
            if sweep > 0 and delta < config.tol:
                break
        converged[t] = sweep_deltas[t][-1] < config.tol or config.layer_sweeps == 1

    return BsdeSolution(
        grid=grid, bases=bases, coef_y=coef_y, coef_z=coef_z, terminal=xi,
        diagnostics={
            "sweep_deltas": sweep_deltas,
            "converged": converged,
            "worst_residual_norm": worst_residual,
        })


def _check_triangle(sol: BsdeSolution, t_idx: int, tau_idx: int):
    if not 0 <= t_idx <= tau_idx <= sol.grid.n_steps:
        raise ValueError(f"need 0 <= t <= tau <= N, got t={t_idx}, tau={tau_idx}")


def eval_Y(sol: BsdeSolution, t_idx: int, tau_idx: int, r) -> np.ndarray:
    """Y^tau at grid time t for factor values r (diagonal is the terminal map)."""
    _check_triangle(sol, t_idx, tau_idx)
    r = np.asarray(r, dtype=float)
    if t_idx == tau_idx:
        return np.asarray(sol.terminal(tau_idx, r), dtype=float)
    return eval_basis(sol.bases[t_idx], r) @ sol.coef_y[t_idx, tau_idx]


def eval_Z(sol: BsdeSolution, t_idx: int, tau_idx: int, r) -> np.ndarray:
    """Z^tau at grid time t for factor values r (0 on the diagonal)."""
    _check_triangle(sol, t_idx, tau_idx)
    r = np.asarray(r, dtype=float)
    if t_idx == tau_idx:
        return np.zeros_like(r)
    return eval_basis(sol.bases[t_idx], r) @ sol.coef_z[t_idx, tau_idx]


def mv_generator(model: MarketModel, grid: TimeGrid) -> Generator:
    """Driver of the hedging-field system for the mean-variance problem.

    h = (delta^2 rho(s) / gamma) R^{2 kappa}
        - rho_corr delta R^kappa (z2 + z3) / (1 + int lam(s, .))
    with z2 the lam-weighted trapezoid sum over columns and z3 the terminal
    column.  The denominator uses the same trapezoid rule on the same grid,
    so policy formulas built from this solution see one consistent
    quadrature.  Fractional powers evaluate on the positive part of R.
    """
    lam = model.lambda_ratio()
    kappa = model.kappa
    delta = model.stock.delta
    gamma = model.pref.gamma
    rho_corr = model.stock.rho_corr
    rho_of = model.pref.rho_weight.rho
    clamp = model.ckls.p > 0.0
    nodes = grid.nodes
    n = grid.n_steps
    denom = np.empty(n + 1)
    for t in range(n + 1):
        wq = trapezoid_tail_weights(t, n, grid.dt)
        denom[t] = 1.0 + float(wq @ np.asarray(lam.lam(nodes[t], nodes[t:]), dtype=float))

    def h(tau_idx, t_idx, y1, y2, y3, z1, z2, z3, r):
        base = np.maximum(r, 0.0) if clamp else r
        s = nodes[t_idx]
        myopic_src = (delta * delta * float(rho_of(s)) / gamma) * base ** (2.0 * kappa)
        coupling = rho_corr * delta * base ** kappa
        return myopic_src - coupling * (z2 + z3) / denom[t_idx]

    def phi(s, v):
        return np.zeros_like(np.asarray(v, dtype=float))

    return Generator(h=h, phi=phi, varphi=lam.lam, lipschitz="stochastic")
