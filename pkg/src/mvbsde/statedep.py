"""Deterministic integral equation for the state-dependent policy fraction.

With deterministic market coefficients the wealth-multiplicative policy
fraction phi(s) solves a one-dimensional fixed-point equation: two
positive fractions sharing a common denominator, minus the myopic ratio
beta/sigma^2.  Every term is an integral of exponentials of cumulative
integrals of phi, so one pass of cumulative trapezoid sums per iteration
prices all three exponential kernels on the whole grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["StateDepProblem", "StateDepSolution", "solve_phi"]

DAMPING = 0.5


@dataclass(frozen=True)
class StateDepProblem:
    """Inputs on [0, horizon]: deterministic loadings and preferences.

    beta(s), sigma(s), rho(s) are callables of time; lam(s, tau) must
    broadcast over a vector tau.  sigma must be bounded away from zero on
    the grid (checked at solve time).
    """

    beta: object
    sigma: object
    r0: float
    gamma: float
    rho: object
    lam: object
    horizon: float
    n_grid: int

    def __post_init__(self):
        if self.gamma <= 0.0:
            raise ValueError("gamma must be positive")
        if self.n_grid < 2:
            raise ValueError("need at least 2 grid intervals")
        if not (self.horizon > 0.0 and math.isfinite(self.horizon)):
            raise ValueError("horizon must be positive and finite")

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.n_grid + 1)


@dataclass(frozen=True)
class StateDepSolution:
    nodes: np.ndarray
    phi: np.ndarray
    residual: float
    iterations: int

    def __call__(self, s) -> np.ndarray:
        return np.interp(s, self.nodes, self.phi)


def _cumtrapz(values: np.ndarray, h: float) -> np.ndarray:
    out = np.empty_like(values)
    out[0] = 0.0
    np.cumsum(0.5 * h * (values[1:] + values[:-1]), out=out[1:])
    return out


def solve_phi(problem: StateDepProblem, tol: float = 1e-10,
              max_iter: int = 500) -> StateDepSolution:
    """Damped fixed-point iteration phi <- (1-w) phi + w RHS(phi), w = 0.5.

    Inner exponential integrals use cumulative trapezoid log-sums; outer
    tau-integrals use trapezoid weights on the tail nodes.  Returns once
    the sup-norm residual |phi - RHS(phi)| falls below tol (the final
    iterate is one full undamped application of the map, so the terminal
    node carries its closed-form value exactly); raises after max_iter
    with the last residual.
    """
    if not tol > 0.0:
        raise ValueError("tolerance must be positive")
    nodes = problem.nodes
    n = problem.n_grid
    h = problem.horizon / n
    beta_v = np.array([float(problem.beta(s)) for s in nodes])
    sigma_v = np.array([float(problem.sigma(s)) for s in nodes])
    rho_v = np.array([float(problem.rho(s)) for s in nodes])
    if np.any(np.abs(sigma_v) < 1e-300):
        raise ValueError("sigma vanishes on the grid")
    sig2 = sigma_v * sigma_v
    lam_rows = [np.asarray(problem.lam(nodes[i], nodes[i:]), dtype=float)
                for i in range(n + 1)]
    tail_w = []
    for i in range(n + 1):
        m = n - i
        w = np.full(m + 1, h)
        if m == 0:
            w[:] = 0.0
        else:
            w[0] = w[-1] = 0.5 * h
        tail_w.append(w)

    def rhs(phi: np.ndarray) -> np.ndarray:
        g1 = problem.r0 + beta_v * phi
        c1 = _cumtrapz(g1, h)
        c3 = _cumtrapz(2.0 * g1 + sig2 * phi * phi, h)
        out = np.empty(n + 1)
        for i in range(n + 1):
            e1 = np.exp(c1[i:] - c1[i])
            e2 = e1 * e1
            e3 = np.exp(c3[i:] - c3[i])
            lw = lam_rows[i] * tail_w[i]
            n1 = rho_v[i] * (lw @ e1 + e1[-1])
            n2 = lw @ e2 + e2[-1]
            den = lw @ e3 + e3[-1]
            out[i] = (beta_v[i] / (problem.gamma * sig2[i])) * n1 / den \
                + (beta_v[i] / sig2[i]) * n2 / den - beta_v[i] / sig2[i]
        return out

    phi = np.zeros(n + 1)
    for it in range(1, max_iter + 1):
        target = rhs(phi)
        residual = float(np.max(np.abs(phi - target)))
        if residual < tol:
            final_residual = float(np.max(np.abs(target - rhs(target))))
            if final_residual <= residual:
                return StateDepSolution(nodes=nodes, phi=target,
                                        residual=final_residual, iterations=it)
            return StateDepSolution(nodes=nodes, phi=phi,
                                    residual=residual, iterations=it)
        phi = (1.0 - DAMPING) * phi + DAMPING * target
    raise RuntimeError(
        f"no convergence after {max_iter} iterations; last residual {residual:.3e}")
