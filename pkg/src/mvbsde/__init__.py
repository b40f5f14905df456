"""Equilibrium mean-variance policies under CKLS stochastic volatility.

Pipeline: model -> (volterra: myopic coefficient) + (simulate + regression +
bsde: hedging field) -> policy -> evaluate, with analytic CIR/OU baselines as
oracles and a deterministic state-dependent reduction in statedep.
"""

from mvbsde.baselines import cir_bT, cir_hedging, ou_bT, ou_hedging
from mvbsde.bsde import (
    BsdeSolution,
    Generator,
    SolverConfig,
    eval_Y,
    eval_Z,
    mv_generator,
)
from mvbsde.bsde import solve as solve_backward
from mvbsde.evaluate import (
    DiscountStudy,
    ObjectiveEstimate,
    discount_study,
    estimate_objective,
    evaluation_times,
)
from mvbsde.model import (
    CklsParams,
    DiscountPreference,
    EtaKernel,
    MarketModel,
    MuKernel,
    RhoWeight,
    StockSpec,
    ValidationReport,
    cir_benchmark_model,
    ckls_benchmark_model,
    coefficients_at,
    min_beta,
    ou_benchmark_model,
    validate_model,
)
from mvbsde.policy import (
    PolicyField,
    analytic_policy,
    complete_policy,
    constant_policy,
    equilibrium_policy,
    hedging_demand,
    myopic_demand,
    table_policy,
)
from mvbsde.simulate import PathEnsemble, TimeGrid, simulate_factor, simulate_wealth
from mvbsde.statedep import StateDepProblem, StateDepSolution, solve_phi
from mvbsde.volterra import (
    VolterraProblem,
    VolterraSolution,
    build_problem,
    closed_form_A,
)
from mvbsde.volterra import solve as solve_volterra

__version__ = "0.1.0"

__all__ = [
    "BsdeSolution",
    "CklsParams",
    "DiscountPreference",
    "DiscountStudy",
    "EtaKernel",
    "Generator",
    "MarketModel",
    "MuKernel",
    "ObjectiveEstimate",
    "PathEnsemble",
    "PolicyField",
    "RhoWeight",
    "SolverConfig",
    "StateDepProblem",
    "StateDepSolution",
    "StockSpec",
    "TimeGrid",
    "ValidationReport",
    "VolterraProblem",
    "VolterraSolution",
    "analytic_policy",
    "build_problem",
    "cir_bT",
    "cir_benchmark_model",
    "cir_hedging",
    "ckls_benchmark_model",
    "closed_form_A",
    "coefficients_at",
    "complete_policy",
    "constant_policy",
    "discount_study",
    "equilibrium_policy",
    "estimate_objective",
    "eval_Y",
    "eval_Z",
    "evaluation_times",
    "hedging_demand",
    "min_beta",
    "mv_generator",
    "myopic_demand",
    "ou_bT",
    "ou_benchmark_model",
    "ou_hedging",
    "simulate_factor",
    "simulate_wealth",
    "solve_backward",
    "solve_phi",
    "solve_volterra",
    "table_policy",
    "validate_model",
    "__version__",
]
