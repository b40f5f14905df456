"""Configuration-driven command line for reproducible experiments.

One experiment per invocation:

    mvbsde <kind> --config <path> [--out <dir>] [--seed <u64>] [--threads <n>]

kinds: validate | simulate | solve-bsde | policy | evaluate | compare |
discount-study | statedep.  Configs are TOML or JSON documents with flat
blocks (model / stock / preference / run, plus kind-specific blocks); a
manifest.json from an earlier run is also accepted and unwraps its echoed
config, which reproduces the CSV outputs byte for byte.

Exit codes: 0 success, 1 model validation failure, 2 config/usage errors
or flagged solver non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from . import __version__
from .baselines import cir_hedging, ou_hedging
from .bsde import SolverConfig, mv_generator, solve as solve_bsde
from .evaluate import discount_study, estimate_objective, evaluation_times
from .model import (CklsParams, DiscountPreference, EtaKernel, MarketModel,
                    MuKernel, RhoWeight, StockSpec, validate_model)
from .policy import analytic_policy, equilibrium_policy
from .simulate import TimeGrid, simulate_factor, simulate_wealth
from .statedep import StateDepProblem, solve_phi
from .volterra import build_problem, solve as solve_volterra

KINDS = ("validate", "simulate", "solve-bsde", "policy", "evaluate", "compare",
         "discount-study", "statedep")

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_ERROR = 2


class ConfigError(Exception):
    pass


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.12g}"


def load_config(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        if p.suffix == ".toml":
            data = tomllib.loads(p.read_text())
        elif p.suffix == ".json":
            data = json.loads(p.read_text())
        else:
            raise ConfigError(f"unsupported config extension {p.suffix!r} (use .toml or .json)")
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot parse {p}: {exc}") from exc
    if isinstance(data.get("config"), dict):
        data = data["config"]  # manifest round-trip
    return data


def _block(cfg: dict, name: str) -> dict:
    block = cfg.get(name)
    if not isinstance(block, dict):
        raise ConfigError(f"missing [{name}] block")
    return block


def _get(block: dict, key: str, kind=float, default=None):
    if key not in block:
        if default is None:
            raise ConfigError(f"missing required key {key!r}")
        return default
    try:
        return kind(block[key])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {key!r}: {block[key]!r}") from exc


def build_preference(cfg: dict) -> DiscountPreference:
    b = _block(cfg, "preference")
    try:
        return DiscountPreference(
            gamma=_get(b, "gamma"),
            rho_weight=RhoWeight(kind=b.get("rho", "constant"),
                                 value=_get(b, "rho_value", float, 1.0),
                                 rate=_get(b, "rho_rate", float, 0.0)),
            eta=EtaKernel(kind=b.get("eta", "zero"),
                          value=_get(b, "eta_value", float, 1.0),
                          rate=_get(b, "eta_rate", float, 0.0)),
            mu_term=MuKernel(kind=b.get("mu", "one"),
                             rate=_get(b, "mu_rate", float, 0.0)),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def build_model(cfg: dict) -> MarketModel:
    m = _block(cfg, "model")
    s = _block(cfg, "stock")
    run = _block(cfg, "run")
    a, b = _get(m, "a"), _get(m, "b")
    default_r0 = a / b if b > 0.0 else None
    r0f = _get(m, "r0_factor", float, default_r0)
    try:
        return MarketModel(
            ckls=CklsParams(a=a, b=b, sigma=_get(m, "sigma"), p=_get(m, "p"),
                            r0_factor=r0f),
            stock=StockSpec(r0=_get(s, "r0"), delta=_get(s, "delta"),
                            alpha=_get(s, "alpha", float, -1.0),
                            rho_corr=_get(s, "rho_corr", float, 0.0),
                            ou_limit=bool(s.get("ou_limit", False))),
            pref=build_preference(cfg),
            horizon=_get(run, "horizon"),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def build_run(cfg: dict, seed_override=None, threads_override=None):
    run = _block(cfg, "run")
    grid = TimeGrid(horizon=_get(run, "horizon"), n_steps=_get(run, "n_steps", int))
    n_paths = _get(run, "n_paths", int)
    seed = seed_override if seed_override is not None else _get(run, "seed", int)
    solver = SolverConfig(
        basis_size=_get(run, "basis_size", int, 3),
        picard_iters=_get(run, "picard_iters", int, 3),
        layer_sweeps=_get(run, "layer_sweeps", int, 2),
        tol=_get(run, "tol", float, 1e-6),
        threads=threads_override if threads_override is not None
        else _get(run, "threads", int, 1),
    )
    scheme = run.get("scheme", "auto")
    w0 = _get(run, "w0", float, 1.0)
    return grid, n_paths, seed, solver, scheme, w0


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([c if isinstance(c, str) else _fmt(c) for c in row])


def _pipeline(model, grid, n_paths, seed, solver, scheme):
    """Shared front half: paths, Volterra weight, backward solution, policy."""
    ensemble = simulate_factor(model, grid, n_paths, seed, scheme=scheme)
    vol = solve_volterra(build_problem(
        model.pref, lambda s: model.stock.delta, lambda s: 1.0, model.horizon))
    sol = solve_bsde(mv_generator(model, grid), ensemble, solver)
    pol = equilibrium_policy(model, vol, sol, policy_id="numerical")
    return ensemble, vol, sol, pol


def _analytic_for(model):
    if model.ckls.p == 0.5 and not model.stock.ou_limit and model.stock.alpha == -1.0:
        return analytic_policy(model, lambda s, r: cir_hedging(model, s, r),
                               policy_id="analytic-cir")
    if model.ckls.p == 0.0 and model.stock.ou_limit:
        return analytic_policy(model, lambda s, r: ou_hedging(model, s, r),
                               policy_id="analytic-ou")
    raise ConfigError("no analytic baseline for this model shape "
                      "(need CIR p=0.5/alpha=-1 or the OU limit)")


def _policy_curve_rows(policy, grid, trajectory):
    rows = []
    for i, t in enumerate(grid.nodes):
        r = trajectory[i]
        myo, hed = policy.components(t, np.array([r]))
        rows.append((t, r, float(myo[0]), float(hed[0]),
                     float(myo[0] + hed[0]), policy.policy_id))
    return rows


def _objective_rows(est):
    return [(s, j, se, est.policy_id)
            for s, j, se in zip(est.times, est.estimates, est.stderrs)]


def run(kind: str, cfg: dict, out_dir: Path, seed_override=None,
        threads_override=None) -> int:
    started = datetime.now(timezone.utc).isoformat()
    t0 = time.monotonic()
    out_dir.mkdir(parents=True, exist_ok=True)
    extra = {}
    exit_code = EXIT_OK

    if kind == "statedep":
        pref = build_preference(cfg)
        sd = _block(cfg, "statedep")
        run_block = _block(cfg, "run")
        horizon = _get(run_block, "horizon")
        beta = _get(sd, "beta")
        sigma = _get(sd, "sigma")
        lam = pref.lambda_ratio(horizon)
        problem = StateDepProblem(
            beta=lambda s: beta, sigma=lambda s: sigma, r0=_get(_block(cfg, "stock"), "r0"),
            gamma=pref.gamma, rho=pref.rho_weight.rho, lam=lam.lam,
            horizon=horizon, n_grid=_get(sd, "n_grid", int, 200))
        try:
            sol = solve_phi(problem, tol=_get(sd, "tol", float, 1e-10),
                            max_iter=_get(sd, "max_iter", int, 500))
        except RuntimeError as exc:
            print(f"statedep solver did not converge: {exc}", file=sys.stderr)
            return EXIT_ERROR
        _write_csv(out_dir / "phi.csv", ("s", "phi"), zip(sol.nodes, sol.phi))
        extra = {"residual": sol.residual, "iterations": sol.iterations}
        seed = seed_override if seed_override is not None else _get(run_block, "seed", int)
    else:
        model = build_model(cfg)
        report = validate_model(model)
        if kind == "validate":
            print(report.summary())
            payload = {"passed": report.passed, "checks": [
                {"name": c.name, "passed": c.passed, "lhs": c.lhs, "rhs": c.rhs,
                 "message": c.message} for c in report.checks]}
            (out_dir / "validation.json").write_text(json.dumps(payload, indent=2) + "\n")
            seed = seed_override if seed_override is not None \
                else _get(_block(cfg, "run"), "seed", int)
            exit_code = EXIT_OK if report.passed else EXIT_VALIDATION
        else:
            if not report.passed:
                print(report.summary(), file=sys.stderr)
                return EXIT_VALIDATION
            grid, n_paths, seed, solver, scheme, w0 = build_run(
                cfg, seed_override, threads_override)

            if kind == "simulate":
                ens = simulate_factor(model, grid, n_paths, seed, scheme=scheme)
                rows = []
                for m in range(ens.n_paths):
                    for i, t in enumerate(grid.nodes):
                        db_r = _fmt(ens.db_factor[m, i]) if i < grid.n_steps else ""
                        db_s = _fmt(ens.db_stock[m, i]) if i < grid.n_steps else ""
                        rows.append((m, i, t, ens.factor[m, i], db_r, db_s))
                _write_csv(out_dir / "paths.csv",
                           ("path", "step", "t", "factor", "db_factor", "db_stock"), rows)

            elif kind == "solve-bsde":
                ens = simulate_factor(model, grid, n_paths, seed, scheme=scheme)
                sol = solve_bsde(mv_generator(model, grid), ens, solver)
                n = grid.n_steps
                rows = [(t, tau, k, sol.coef_y[t, tau, k], sol.coef_z[t, tau, k])
                        for t in range(n) for tau in range(t + 1, n + 1)
                        for k in range(solver.basis_size)]
                _write_csv(out_dir / "bsde_coefficients.csv",
                           ("t_idx", "tau_idx", "k", "coefY", "coefZ"), rows)
                conv = bool(np.all(sol.diagnostics["converged"]))
                extra = {"converged": conv,
                         "worst_residual_norm": sol.diagnostics["worst_residual_norm"]}
                if not conv:
                    print("warning: layer sweeps did not converge within tolerance",
                          file=sys.stderr)
                    exit_code = EXIT_ERROR

            elif kind == "policy":
                ens, vol, sol, pol = _pipeline(model, grid, n_paths, seed, solver, scheme)
                _write_csv(out_dir / "policy_curves.csv",
                           ("t", "R", "u_myopic", "u_hedge", "u_total", "policy_id"),
                           _policy_curve_rows(pol, grid, ens.factor[0]))
                if not np.all(sol.diagnostics["converged"]):
                    print("warning: layer sweeps did not converge within tolerance",
                          file=sys.stderr)
                    exit_code = EXIT_ERROR

            elif kind in ("evaluate", "compare"):
                ens, vol, sol, pol = _pipeline(model, grid, n_paths, seed, solver, scheme)
                policies = [pol] + ([_analytic_for(model)] if kind == "compare" else [])
                eval_ens = simulate_factor(model, grid, n_paths, seed + 1, scheme=scheme)
                curve_rows, objective_rows, excl = [], [], {}
                for p in policies:
                    curve_rows.extend(_policy_curve_rows(p, grid, ens.factor[0]))
                    wealth = simulate_wealth(model, p, eval_ens, w0=w0)
                    est = estimate_objective(model, wealth, model.pref.gamma,
                                             policy_id=p.policy_id, policy=p)
                    objective_rows.extend(_objective_rows(est))
                    excl[p.policy_id] = [int(x) for x in est.n_excluded]
                if kind == "compare":
                    _write_csv(out_dir / "policy_curves.csv",
                               ("t", "R", "u_myopic", "u_hedge", "u_total", "policy_id"),
                               curve_rows)
                _write_csv(out_dir / "objective_curves.csv",
                           ("s", "J_hat", "stderr", "policy_id"), objective_rows)
                extra = {"excluded_paths": excl}
                if not np.all(sol.diagnostics["converged"]):
                    print("warning: layer sweeps did not converge within tolerance",
                          file=sys.stderr)
                    exit_code = EXIT_ERROR

            elif kind == "discount-study":
                d = _block(cfg, "discount")
                coefs = d.get("lambda_coefs")
                if not isinstance(coefs, (list, tuple)) or not coefs:
                    raise ConfigError("discount block needs a nonempty lambda_coefs list")
                study = discount_study(model, [float(c) for c in coefs], solver,
                                       grid, n_paths, seed)
                rows = []
                for i, c in enumerate(study.lambda_coefs):
                    for j, s in enumerate(study.times):
                        rows.append((s, c, study.avg_rel_diff[i, j]))
                _write_csv(out_dir / "discount_diffs.csv",
                           ("s", "lambda_coef", "avg_rel_diff"), rows)
                extra = {"excluded_paths": study.n_excluded.tolist()}

    manifest = {
        "config": cfg,
        "seed": int(seed),
        "version": __version__,
        "started_at": started,
        "wall_time_s": round(time.monotonic() - t0, 6),
    }
    manifest.update(extra)
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return exit_code


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="mvbsde",
        description="Equilibrium mean-variance policies under CKLS factor models")
    parser.add_argument("kind", choices=KINDS)
    parser.add_argument("--config", required=True)
    parser.add_argument("--out", default=None)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--threads", type=int, default=None)
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        cfg_kind = cfg.get("kind")
        if cfg_kind is not None and cfg_kind != args.kind:
            raise ConfigError(f"config kind {cfg_kind!r} does not match {args.kind!r}")
        if args.seed is not None:
            cfg.setdefault("run", {})["seed"] = args.seed
        out_dir = Path(args.out) if args.out else Path(f"mvbsde-{args.kind}-{config_hash(cfg)}")
        return run(args.kind, cfg, out_dir, seed_override=args.seed,
                   threads_override=args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
