"""Monte-Carlo estimation of the conditional mean-variance objective,
policy comparison statistics, and the discounting study.

The conditional objective at time s is estimated from the wealth ratios
W_T / W_s across simulated trajectories: sample mean minus gamma/2 times
the sample variance.  Standard errors come from nonoverlapping batch
means.  The ratio statistic requires wealth-independent policies, which
every PolicyField kind satisfies by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bsde import SolverConfig, mv_generator, solve as solve_bsde
from .model import DiscountPreference, EtaKernel, MarketModel, MuKernel
from .policy import PolicyField, equilibrium_policy, hedging_demand
from .simulate import PathEnsemble, TimeGrid, WealthPath, simulate_factor
from .volterra import build_problem, solve as solve_volterra

__all__ = ["ObjectiveEstimate", "DiscountStudy", "evaluation_times",
           "estimate_objective", "mean_policy_at", "discount_study"]

WEALTH_FLOOR = 1e-12
HEDGE_FLOOR = 1e-10


@dataclass(frozen=True)
class ObjectiveEstimate:
    times: np.ndarray
    estimates: np.ndarray
    stderrs: np.ndarray
    n_paths: int
    policy_id: str
    n_excluded: np.ndarray
    warning: str = ""


@dataclass(frozen=True)
class DiscountStudy:
    times: np.ndarray
    lambda_coefs: tuple
    avg_rel_diff: np.ndarray  # (len(lambda_coefs), len(times))
    n_excluded: np.ndarray
    n_paths: int


def evaluation_times(horizon: float) -> np.ndarray:
    """The eleven conditioning times j/10 * T, j = 0..10."""
    return np.linspace(0.0, horizon, 11)


def _grid_index(grid: TimeGrid, s: float) -> int:
    idx = int(round(s / grid.dt))
    if not (0 <= idx <= grid.n_steps
            and abs(grid.nodes[idx] - s) < 1e-9 * max(1.0, grid.horizon)):
        raise ValueError(f"evaluation time {s} is not a grid node")
    return idx


def _batch_se(values: np.ndarray, stat, n_batches: int) -> float:
    if values.size < n_batches:
        n_batches = max(values.size, 1)
    batches = np.array_split(values, n_batches)
    stats = np.array([stat(b) for b in batches if b.size])
    if stats.size < 2:
        return 0.0
    return float(np.std(stats, ddof=1) / np.sqrt(stats.size))


def estimate_objective(model: MarketModel, wealth: WealthPath, gamma: float,
                       policy_id: str = "", times=None, n_batches: int = 20,
                       policy=None) -> ObjectiveEstimate:
    """Conditional objective curve J(s) = E[W_T/W_s] - (gamma/2) Var[W_T/W_s].

    Paths with |W_s| below 1e-12 at a conditioning time are excluded there
    and counted.  When a policy object is supplied and its wealth
    independence cannot be established, the estimate carries a warning.
    """
    grid = wealth.grid
    if times is None:
        times = evaluation_times(grid.horizon)
    times = np.asarray(times, dtype=float)
    w = wealth.wealth
    w_term = w[:, -1]
    estimates = np.empty(times.shape[0])
    stderrs = np.empty(times.shape[0])
    excluded = np.zeros(times.shape[0], dtype=int)

    def mv_stat(ratios):
        return float(np.mean(ratios) - 0.5 * gamma * np.var(ratios))

    for j, s in enumerate(times):
        idx = _grid_index(grid, s)
        w_s = w[:, idx]
        ok = np.abs(w_s) >= WEALTH_FLOOR
        excluded[j] = int(np.sum(~ok))
        ratios = w_term[ok] / w_s[ok]
        estimates[j] = mv_stat(ratios)
        stderrs[j] = _batch_se(ratios, mv_stat, n_batches)

    warning = ""
    if policy is not None and not isinstance(policy, PolicyField):
        warning = ("wealth independence of the supplied policy cannot be "
                   "verified; the ratio estimator assumes it")
    return ObjectiveEstimate(times=times, estimates=estimates, stderrs=stderrs,
                             n_paths=w.shape[0], policy_id=policy_id,
                             n_excluded=excluded, warning=warning)


def mean_policy_at(policy, ensemble: PathEnsemble, s_idx: int,
                   n_batches: int = 20) -> tuple:
    """(mean, batch standard error) of the policy across paths at node s_idx."""
    s = ensemble.grid.nodes[s_idx]
    u = np.asarray(policy(s, ensemble.factor[:, s_idx]), dtype=float)
    return float(np.mean(u)), _batch_se(u, lambda b: float(np.mean(b)), n_batches)


def _with_preference(model: MarketModel, pref: DiscountPreference) -> MarketModel:
    return MarketModel(ckls=model.ckls, stock=model.stock, pref=pref,
                       horizon=model.horizon)


def _pipeline_policy(model: MarketModel, ensemble: PathEnsemble,
                     config: SolverConfig, policy_id: str):
    """Volterra weight + backward hedging field for one preference."""
    vol = solve_volterra(build_problem(
        model.pref, lambda s: model.stock.delta, lambda s: 1.0, model.horizon))
    sol = solve_bsde(mv_generator(model, ensemble.grid), ensemble, config)
    return equilibrium_policy(model, vol, sol, policy_id=policy_id), sol


def discount_study(model_base: MarketModel, lambda_coefs, config: SolverConfig,
                   grid: TimeGrid, n_paths: int, seed: int) -> DiscountStudy:
    """Average relative hedging differences against the undiscounted policy.

    For each lambda_coef the running/terminal kernels share the rate
    (eta = e^{-c (tau - s)}, mu = e^{-c (T - s)}), the backward system is
    re-solved on the same path ensemble, and the pathwise statistic
    (u_base - u_disc) / hedging(u_base) is averaged per grid node.  Nodes
    where the baseline hedging is below 1e-10 in magnitude are excluded
    and counted (the terminal node excludes everything).
    """
    if not len(lambda_coefs):
        raise ValueError("need at least one lambda_coef")
    base_pref = DiscountPreference(gamma=model_base.pref.gamma,
                                   rho_weight=model_base.pref.rho_weight)
    base_model = _with_preference(model_base, base_pref)
    ensemble = simulate_factor(base_model, grid, n_paths, seed)
    policy_base, sol_base = _pipeline_policy(base_model, ensemble, config, "baseline")

    n_nodes = grid.n_steps + 1
    diffs = np.empty((len(lambda_coefs), n_nodes))
    excluded = np.zeros((len(lambda_coefs), n_nodes), dtype=int)
    u_base, hedge_base, masks = [], [], []
    for j in range(n_nodes):
        r_j = ensemble.factor[:, j]
        u_base.append(np.asarray(policy_base(grid.nodes[j], r_j), dtype=float))
        hb = np.asarray(hedging_demand(base_model, sol_base, j, r_j), dtype=float)
        hedge_base.append(hb)
        masks.append(np.abs(hb) >= HEDGE_FLOOR)

    for i, coef in enumerate(lambda_coefs):
        pref_c = DiscountPreference(
            gamma=model_base.pref.gamma, rho_weight=model_base.pref.rho_weight,
            eta=EtaKernel(kind="exponential", rate=float(coef)),
            mu_term=MuKernel(kind="exponential", rate=float(coef)))
        model_c = _with_preference(model_base, pref_c)
        policy_c, _ = _pipeline_policy(model_c, ensemble, config, f"lambda={coef}")
        for j in range(n_nodes):
            ok = masks[j]
            excluded[i, j] = int(np.sum(~ok))
            if not np.any(ok):
                diffs[i, j] = np.nan
                continue
            u_c = np.asarray(policy_c(grid.nodes[j], ensemble.factor[:, j]), dtype=float)
            rel = (u_base[j][ok] - u_c[ok]) / hedge_base[j][ok]
            diffs[i, j] = float(np.mean(rel))

    return DiscountStudy(times=grid.nodes, lambda_coefs=tuple(lambda_coefs),
                         avg_rel_diff=diffs, n_excluded=excluded, n_paths=n_paths)
