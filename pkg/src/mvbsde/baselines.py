"""Closed-form auxiliary fields for the CIR and OU benchmark models.

Both benchmarks admit an explicit conditional expectation for the running
squared-Sharpe integral once the factor drift is tilted by the correlation
term: the effective reversion becomes b' = b + rho_corr * delta * sigma.
These formulas back the hedging part of the analytic equilibrium policies
and serve as oracles for the backward solver.

Only valid for an undiscounted unit terminal weight (rho == 1, eta == 0);
the guard raises otherwise rather than silently returning the wrong field.
"""

from __future__ import annotations

import math

import numpy as np

from .model import MarketModel

__all__ = ["effective_reversion", "cir_bT", "cir_hedging", "ou_bT", "ou_hedging"]


def _require_plain_preference(model: MarketModel):
    pref = model.pref
    w = pref.rho_weight
    if not (w.kind == "constant" and w.value == 1.0 and pref.eta.kind == "zero"):
        raise ValueError("closed forms require rho == 1 and a zero running kernel")


def _require_cir(model: MarketModel):
    _require_plain_preference(model)
    if model.ckls.p != 0.5 or model.stock.ou_limit or model.stock.alpha != -1.0:
        raise ValueError("CIR closed form needs p = 1/2, alpha = -1")


def _require_ou(model: MarketModel):
    _require_plain_preference(model)
    if model.ckls.p != 0.0 or not model.stock.ou_limit:
        raise ValueError("OU closed form needs p = 0 in the unit-volatility limit")


def effective_reversion(model: MarketModel) -> float:
    """Reversion speed of the factor under the tilted drift."""
    return model.ckls.b + model.stock.rho_corr * model.stock.delta * model.ckls.sigma


def _f1(bp: float, h):
    """int_0^h exp(-bp u) du, stable at bp = 0."""
    if bp == 0.0:
        return h
    return -np.expm1(-bp * h) / bp


def _f2(bp: float, h):
    """int_0^h exp(-2 bp u) du, stable at bp = 0."""
    if bp == 0.0:
        return h
    return -np.expm1(-2.0 * bp * h) / (2.0 * bp)


def cir_bT(model: MarketModel, s, r):
    """Expected tilted running square-Sharpe integral, CIR benchmark.

    E int_s^T (delta^2/gamma) R_u du under dR = (a - b' R) du + sigma sqrt(R) dB.
    """
    _require_cir(model)
    a = model.ckls.a
    bp = effective_reversion(model)
    scale = model.stock.delta ** 2 / model.pref.gamma
    h = model.horizon - np.asarray(s, dtype=float)
    r = np.asarray(r, dtype=float)
    f1 = _f1(bp, h)
    if bp == 0.0:
        drift_part = 0.5 * a * h * h
    else:
        drift_part = (a / bp) * (h - f1)
    return scale * (r * f1 + drift_part)


def cir_hedging(model: MarketModel, s, r):
    """Hedging demand -rho_corr sigma r (delta^2/gamma) F(T-s) e^{-r0 (T-s)}."""
    _require_cir(model)
    bp = effective_reversion(model)
    scale = model.stock.delta ** 2 / model.pref.gamma
    h = model.horizon - np.asarray(s, dtype=float)
    r = np.asarray(r, dtype=float)
    disc = np.exp(-model.stock.r0 * h)
    return -model.stock.rho_corr * model.ckls.sigma * r * scale * _f1(bp, h) * disc


def ou_bT(model: MarketModel, s, r):
    """Expected tilted running square-Sharpe integral, OU benchmark.

    E int_s^T (delta^2/gamma) R_u^2 du = (delta^2/gamma) int_0^h (m_u^2 + v_u) du
    with m_u, v_u the tilted Gaussian mean and variance started at r.
    """
    _require_ou(model)
    a, sigma = model.ckls.a, model.ckls.sigma
    bp = effective_reversion(model)
    scale = model.stock.delta ** 2 / model.pref.gamma
    h = np.asarray(model.horizon - np.asarray(s, dtype=float), dtype=float)
    r = np.asarray(r, dtype=float)
    if bp == 0.0:
        # m_u = r + a u, v_u = sigma^2 u
        mean_sq = r * r * h + r * a * h * h + a * a * h ** 3 / 3.0
        var_int = 0.5 * sigma * sigma * h * h
        return scale * (mean_sq + var_int)
    theta = a / bp
    f1 = _f1(bp, h)
    f2 = _f2(bp, h)
    mean_sq = theta * theta * h + 2.0 * theta * (r - theta) * f1 + (r - theta) ** 2 * f2
    var_int = sigma * sigma * (h - f2) / (2.0 * bp)
    return scale * (mean_sq + var_int)


def ou_hedging(model: MarketModel, s, r):
    """Hedging demand -rho_corr sigma (d/dr ou_bT) e^{-r0 (T-s)}."""
    _require_ou(model)
    a, sigma = model.ckls.a, model.ckls.sigma
    bp = effective_reversion(model)
    scale = model.stock.delta ** 2 / model.pref.gamma
    h = np.asarray(model.horizon - np.asarray(s, dtype=float), dtype=float)
    r = np.asarray(r, dtype=float)
    disc = np.exp(-model.stock.r0 * h)
    if bp == 0.0:
        ddr = scale * (2.0 * r * h + a * h * h)
    else:
        theta = a / bp
        ddr = scale * 2.0 * (theta * _f1(bp, h) + (r - theta) * _f2(bp, h))
    return -model.stock.rho_corr * sigma * ddr * disc
