"""Equilibrium investment policies: myopic demand plus hedging demand.

The myopic part is the instantaneous risk-return trade-off weighted by the
terminal preference weight (or, equivalently, by the Volterra coefficient
divided by 1 + the integrated discount ratio).  The hedging part offsets
fluctuations of the investment opportunity set and is assembled from the
backward solver's Z-field columns; closed-form baselines can stand in for
the Z-columns via a hedge callable.

All policies are wealth-independent: they map (time, factor value) to the
fraction of wealth invested.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bsde import BsdeSolution, trapezoid_tail_weights
from .model import MarketModel
from .regression import eval_basis

__all__ = ["PolicyField", "myopic_demand", "hedging_demand", "equilibrium_policy",
           "complete_policy", "constant_policy", "table_policy", "analytic_policy"]

_KINDS = ("complete", "incomplete", "constant", "table")


def _check_domain(exponent: float, r: np.ndarray):
    if exponent != int(exponent) and np.any(r <= 0.0):
        raise ValueError("factor value must be positive for fractional exponents")


def myopic_demand(model: MarketModel, s, r):
    """(delta rho(s) / gamma) r^{kappa - 1/(2 alpha)} e^{-r0 (T-s)}."""
    r = np.atleast_1d(np.asarray(r, dtype=float))
    exponent = model.myopic_exponent
    _check_domain(exponent, r)
    stock = model.stock
    weight = np.asarray(model.pref.rho_weight.rho(s), dtype=float)
    disc = math.exp(-stock.r0 * (model.horizon - s))
    return (stock.delta * weight / model.pref.gamma) * r ** exponent * disc


def _lam_quad(model: MarketModel, grid) -> tuple:
    """Per-node trapezoid weights lam(t_i, t_n) dt and denominators 1 + sum."""
    lam = model.lambda_ratio()
    nodes = grid.nodes
    n = grid.n_steps
    rows, denoms = [], []
    for t in range(n + 1):
        wq = trapezoid_tail_weights(t, n, grid.dt)
        row = wq * np.asarray(lam.lam(nodes[t], nodes[t:]), dtype=float)
        rows.append(row)
        denoms.append(1.0 + float(np.sum(row)))
    return tuple(rows), tuple(denoms)


def hedging_demand(model: MarketModel, bsde_sol: BsdeSolution, s_idx: int, r):
    """-rho_corr r^{-1/(2 alpha)} (sum_n lam Z^n + Z^N) / (1 + int lam) e^{-r0 (T-s)}.

    The lam sum is the same trapezoid rule the backward solver used, so the
    zero-correlation and terminal identities hold exactly on the grid.
    """
    grid = bsde_sol.grid
    n = grid.n_steps
    if not 0 <= s_idx <= n:
        raise IndexError(f"time index {s_idx} outside grid 0..{n}")
    r = np.atleast_1d(np.asarray(r, dtype=float))
    exponent = -model.vol_exponent
    _check_domain(exponent, r)
    rows, denoms = _lam_quad(model, grid)
    if s_idx == n:
        z_sum = np.zeros_like(r)
    else:
        z_cols = eval_basis(bsde_sol.bases[s_idx], r) @ bsde_sol.coef_z[s_idx].T
        z_sum = z_cols[:, s_idx:] @ rows[s_idx] + z_cols[:, n]
    s = grid.nodes[s_idx]
    disc = math.exp(-model.stock.r0 * (model.horizon - s))
    return -model.stock.rho_corr * r ** exponent * z_sum / denoms[s_idx] * disc


@dataclass(frozen=True)
class PolicyField:
    """Wealth-independent policy (s, r) -> invested fraction.

    kind complete:   weighted myopic demand only
    kind incomplete: myopic plus hedging (backward solution or hedge callable)
    kind constant:   fixed fraction
    kind table:      bilinear interpolation on (t_nodes, r_nodes)
    """

    kind: str
    model: MarketModel = None
    weight: object = None       # callable s -> myopic weight in place of rho(s)
    bsde_sol: BsdeSolution = None
    hedge_fn: object = None     # callable (s, r) -> hedging demand
    lam_rows: tuple = ()
    lam_denoms: tuple = ()
    value: float = 0.0
    t_nodes: np.ndarray = None
    r_nodes: np.ndarray = None
    table: np.ndarray = None
    policy_id: str = ""

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}")

    def _myopic(self, s, r):
        model = self.model
        exponent = model.myopic_exponent
        _check_domain(exponent, r)
        w = float(np.asarray(self.weight(s), dtype=float)) if self.weight is not None \
            else float(np.asarray(model.pref.rho_weight.rho(s), dtype=float))
        disc = math.exp(-model.stock.r0 * (model.horizon - s))
        return (model.stock.delta * w / model.pref.gamma) * r ** exponent * disc

    def _time_index(self, s: float) -> int:
        grid = self.bsde_sol.grid
        idx = int(round(s / grid.dt))
        if not (0 <= idx <= grid.n_steps and abs(grid.nodes[idx] - s) < 1e-9 * max(1.0, grid.horizon)):
            raise ValueError(f"time {s} is not a grid node")
        return idx

    def __call__(self, s, r):
        r = np.atleast_1d(np.asarray(r, dtype=float))
        if self.kind == "constant":
            return np.full_like(r, self.value)
        if self.kind == "table":
            return _bilinear(self.t_nodes, self.r_nodes, self.table, s, r)
        u = self._myopic(s, r)
        if self.kind == "incomplete":
            if self.bsde_sol is not None:
                u = u + hedging_demand(self.model, self.bsde_sol, self._time_index(s), r)
            elif self.hedge_fn is not None:
                u = u + np.asarray(self.hedge_fn(s, r), dtype=float)
        return u

    def components(self, s, r):
        """(myopic, hedging) parts separately, for curve exports."""
        r = np.atleast_1d(np.asarray(r, dtype=float))
        if self.kind in ("constant", "table"):
            return self(s, r), np.zeros_like(r)
        myo = self._myopic(s, r)
        if self.kind == "incomplete" and self.bsde_sol is not None:
            return myo, hedging_demand(self.model, self.bsde_sol, self._time_index(s), r)
        if self.kind == "incomplete" and self.hedge_fn is not None:
            return myo, np.asarray(self.hedge_fn(s, r), dtype=float)
        return myo, np.zeros_like(r)


def _bilinear(t_nodes, r_nodes, table, s, r):
    t_nodes = np.asarray(t_nodes, dtype=float)
    i = int(np.clip(np.searchsorted(t_nodes, s) - 1, 0, len(t_nodes) - 2))
    span = t_nodes[i + 1] - t_nodes[i]
    frac = 0.0 if span == 0.0 else np.clip((s - t_nodes[i]) / span, 0.0, 1.0)
    low = np.interp(r, r_nodes, table[i])
    high = np.interp(r, r_nodes, table[i + 1])
    return (1.0 - frac) * low + frac * high


def equilibrium_policy(model: MarketModel, volterra_or_a, bsde_sol: BsdeSolution,
                       policy_id: str = "equilibrium") -> PolicyField:
    """Myopic part weighted by A(s)/(1 + int lam), hedging from the Z-field.

    volterra_or_a: a VolterraSolution (callable on s), any callable s -> A(s),
    or None for the closed form rho(s)(1 + int lam).
    """
    if bsde_sol is not None and bsde_sol.grid.horizon != model.horizon:
        raise ValueError("backward solution horizon does not match the model")
    lam = model.lambda_ratio()
    if volterra_or_a is None:
        weight = model.pref.rho_weight.rho
    else:
        def weight(s):
            return np.asarray(volterra_or_a(s), dtype=float) / (1.0 + lam.integral(s))
    rows, denoms = _lam_quad(model, bsde_sol.grid) if bsde_sol is not None else ((), ())
    return PolicyField(kind="incomplete", model=model, weight=weight,
                       bsde_sol=bsde_sol, lam_rows=rows, lam_denoms=denoms,
                       policy_id=policy_id)


def complete_policy(model: MarketModel, volterra_or_a=None,
                    policy_id: str = "complete") -> PolicyField:
    """Myopic-only policy; the hedging demand vanishes in complete markets."""
    if volterra_or_a is None:
        weight = model.pref.rho_weight.rho
    else:
        lam = model.lambda_ratio()

        def weight(s):
            return np.asarray(volterra_or_a(s), dtype=float) / (1.0 + lam.integral(s))
    return PolicyField(kind="complete", model=model, weight=weight, policy_id=policy_id)


def constant_policy(value: float, policy_id: str = "constant") -> PolicyField:
    return PolicyField(kind="constant", value=float(value), policy_id=policy_id)


def table_policy(t_nodes, r_nodes, table, policy_id: str = "table") -> PolicyField:
    t_nodes = np.asarray(t_nodes, dtype=float)
    r_nodes = np.asarray(r_nodes, dtype=float)
    table = np.asarray(table, dtype=float)
    if table.shape != (t_nodes.size, r_nodes.size):
        raise ValueError("table shape must be (len(t_nodes), len(r_nodes))")
    return PolicyField(kind="table", t_nodes=t_nodes, r_nodes=r_nodes, table=table,
                       policy_id=policy_id)


def analytic_policy(model: MarketModel, hedge_fn, policy_id: str = "analytic") -> PolicyField:
    """Myopic demand plus a closed-form hedging callable (s, r) -> amount."""
    return PolicyField(kind="incomplete", model=model, hedge_fn=hedge_fn,
                       policy_id=policy_id)
