import math

import numpy as np
import pytest

from mvbsde.baselines import cir_bT, cir_hedging, effective_reversion, ou_bT, ou_hedging
from mvbsde.model import (
    CklsParams,
    DiscountPreference,
    EtaKernel,
    MarketModel,
    StockSpec,
    cir_benchmark_model,
    ou_benchmark_model,
)
from mvbsde.simulate import TimeGrid, simulate_factor


def _with_delta(model, delta, rho_corr):
    stock = StockSpec(r0=model.stock.r0, delta=delta, alpha=model.stock.alpha,
                      rho_corr=rho_corr, ou_limit=model.stock.ou_limit)
    return MarketModel(model.ckls, stock, model.pref, model.horizon)


def _tilted(model):
    """Same diffusion, drift reversion moved to b' = b + rho delta sigma."""
    bp = effective_reversion(model)
    ckls = CklsParams(a=model.ckls.a, b=bp, sigma=model.ckls.sigma,
                      p=model.ckls.p, r0_factor=model.ckls.r0_factor)
    return MarketModel(ckls, model.stock, model.pref, model.horizon)


def test_effective_reversion_benchmarks():
    assert effective_reversion(cir_benchmark_model()) == pytest.approx(
        0.3374 + (-0.5) * 0.0811 * 0.6503, rel=1e-12)
    assert effective_reversion(ou_benchmark_model()) == pytest.approx(
        0.27 + (-0.935) * 1.0 * 0.065, rel=1e-12)


def test_zero_delta_values_vanish():
    cir = _with_delta(cir_benchmark_model(), 0.0, -0.5)
    ou = _with_delta(ou_benchmark_model(), 0.0, -0.935)
    assert cir_bT(cir, 0.0, 27.9) == 0.0
    assert ou_bT(ou, 0.0, 0.0788) == 0.0


def test_terminal_values_zero():
    assert cir_bT(cir_benchmark_model(), 1.0, 27.9) == 0.0
    assert cir_hedging(cir_benchmark_model(), 1.0, 27.9) == 0.0
    assert ou_bT(ou_benchmark_model(), 1.0, 0.0788) == 0.0
    assert ou_hedging(ou_benchmark_model(), 1.0, 0.0788) == 0.0


def test_zero_correlation_hedging_vanishes():
    cir = _with_delta(cir_benchmark_model(), 0.0811, 0.0)
    assert cir_hedging(cir, 0.4, 27.9) == 0.0
    assert cir_bT(cir, 0.4, 27.9) > 0.0  # the level itself persists


def test_cir_degenerate_reversion_limit():
    # choose delta so b' = b + rho delta sigma = 0 exactly
    base = cir_benchmark_model()
    b, sigma = 0.1, base.ckls.sigma
    delta = b / (0.5 * sigma)
    ckls = CklsParams(a=base.ckls.a, b=b, sigma=sigma, p=0.5,
                      r0_factor=base.ckls.r0_factor)
    model = MarketModel(ckls, StockSpec(r0=0.03, delta=delta, alpha=-1.0,
                                        rho_corr=-0.5), base.pref, 1.0)
    assert effective_reversion(model) == pytest.approx(0.0, abs=1e-15)
    r, s = 20.0, 0.25
    h = 1.0 - s
    gamma = model.pref.gamma
    expected = (delta**2 / gamma) * (r * h + base.ckls.a * h * h / 2.0)
    assert cir_bT(model, s, r) == pytest.approx(expected, rel=1e-10)
    # quadrature cross-check of the tilted-mean integral
    eps = np.linspace(s, 1.0, 2001)
    mean = r + base.ckls.a * (eps - s)  # zero-reversion tilted mean
    quad = (delta**2 / gamma) * np.trapezoid(mean, eps)
    assert cir_bT(model, s, r) == pytest.approx(float(quad), rel=1e-6)


def test_cir_bT_matches_nested_mc():
    model = cir_benchmark_model()
    r, gamma, delta = 27.93, 4.0, model.stock.delta
    tilted = MarketModel(
        CklsParams(a=model.ckls.a, b=effective_reversion(model),
                   sigma=model.ckls.sigma, p=0.5, r0_factor=r),
        model.stock, model.pref, model.horizon)
    grid = TimeGrid(horizon=1.0, n_steps=200)
    ens = simulate_factor(tilted, grid, 20000, seed=77)
    integrand = (delta**2 / gamma) * ens.factor
    values = np.trapezoid(integrand, dx=grid.dt, axis=1)
    mc = float(np.mean(values))
    se = float(np.std(values, ddof=1) / math.sqrt(values.shape[0]))
    assert abs(cir_bT(model, 0.0, r) - mc) < 3.0 * se


def test_ou_bT_matches_nested_mc():
    model = ou_benchmark_model()
    r, gamma, delta = 0.0788, 4.0, model.stock.delta
    tilted = MarketModel(
        CklsParams(a=model.ckls.a, b=effective_reversion(model),
                   sigma=model.ckls.sigma, p=0.0, r0_factor=r),
        model.stock, model.pref, model.horizon)
    grid = TimeGrid(horizon=1.0, n_steps=200)
    ens = simulate_factor(tilted, grid, 20000, seed=78)
    integrand = (delta**2 / gamma) * ens.factor**2
    values = np.trapezoid(integrand, dx=grid.dt, axis=1)
    mc = float(np.mean(values))
    se = float(np.std(values, ddof=1) / math.sqrt(values.shape[0]))
    assert abs(ou_bT(model, 0.0, r) - mc) < 3.0 * se


def test_ou_zero_noise_reduces_to_mean_integral():
    base = ou_benchmark_model()
    ckls = CklsParams(a=base.ckls.a, b=base.ckls.b, sigma=0.0, p=0.0,
                      r0_factor=base.ckls.r0_factor)
    model = MarketModel(ckls, base.stock, base.pref, base.horizon)
    bp = effective_reversion(model)  # = b when sigma = 0
    assert bp == base.ckls.b
    r, s = 0.05, 0.3
    u = np.linspace(0.0, 1.0 - s, 4001)
    mean = r * np.exp(-bp * u) + (base.ckls.a / bp) * (1.0 - np.exp(-bp * u))
    expected = (1.0 / 4.0) * np.trapezoid(mean**2, u)
    assert ou_bT(model, s, r) == pytest.approx(float(expected), rel=1e-8)


def test_hedging_is_scaled_value_derivative():
    # hedging = -rho sigma_n / sigma_S * d(bT)/dr * discount, by central difference
    for model, bT, hedging, n_over_s in (
        (cir_benchmark_model(), cir_bT, cir_hedging,
         lambda r: 0.6503 * r),             # n/sigma_S = sigma sqrt(r) / r^{-1/2}
        (ou_benchmark_model(), ou_bT, ou_hedging,
         lambda r: 0.065),                  # n/sigma_S = sigma / 1
    ):
        s = 0.4
        r = 27.9 if model.ckls.p == 0.5 else 0.0788
        eps = 1e-5 * max(1.0, r)
        d_num = (bT(model, s, r + eps) - bT(model, s, r - eps)) / (2.0 * eps)
        rho = model.stock.rho_corr
        expected = -rho * n_over_s(r) * d_num * math.exp(-model.stock.r0 * (1.0 - s))
        assert hedging(model, s, r) == pytest.approx(float(expected), rel=1e-6)


def test_feynman_kac_residual():
    # ds b + (a - b' r) dr b + 0.5 n^2 drr b + generator level = 0
    d = 1e-3
    cir = cir_benchmark_model()
    ou = ou_benchmark_model()
    for model, bT, level, n_diff in (
        (cir, cir_bT, lambda r: (0.0811**2 / 4.0) * r, lambda r: 0.6503 * math.sqrt(r)),
        (ou, ou_bT, lambda r: (1.0 / 4.0) * r * r, lambda r: 0.065),
    ):
        bp = effective_reversion(model)
        a = model.ckls.a
        for s, r in ((0.2, None), (0.5, None), (0.8, None)):
            r = 27.9 if model.ckls.p == 0.5 else 0.0788
            ds = (bT(model, s + d, r) - bT(model, s - d, r)) / (2.0 * d)
            dr = (bT(model, s, r + d) - bT(model, s, r - d)) / (2.0 * d)
            drr = (bT(model, s, r + d) - 2.0 * bT(model, s, r)
                   + bT(model, s, r - d)) / (d * d)
            resid = ds + (a - bp * r) * dr + 0.5 * n_diff(r) ** 2 * drr + level(r)
            assert abs(float(resid)) < 1e-4


def test_horizon_monotonicity():
    cir = cir_benchmark_model()
    ou = ou_benchmark_model()
    s_grid = np.linspace(0.0, 1.0, 21)
    cir_vals = np.array([float(cir_bT(cir, s, 27.9)) for s in s_grid])
    ou_vals = np.array([float(ou_bT(ou, s, 0.0788)) for s in s_grid])
    assert np.all(np.diff(cir_vals) < 0.0)
    assert np.all(np.diff(ou_vals) < 0.0)


def test_shape_guards():
    cir = cir_benchmark_model()
    ou = ou_benchmark_model()
    with pytest.raises(ValueError):
        cir_bT(ou, 0.0, 0.0788)
    with pytest.raises(ValueError):
        ou_bT(cir, 0.0, 27.9)
    # non-degenerate preference rejected
    pref = DiscountPreference(gamma=4.0, eta=EtaKernel("constant", value=0.5))
    loaded = MarketModel(cir.ckls, cir.stock, pref, cir.horizon)
    with pytest.raises(ValueError):
        cir_bT(loaded, 0.0, 27.9)


def test_vectorized_evaluation():
    model = cir_benchmark_model()
    r = np.array([20.0, 27.9, 35.0])
    vals = cir_bT(model, 0.5, r)
    assert vals.shape == (3,)
    assert np.all(np.diff(vals) > 0.0)  # increasing in r
