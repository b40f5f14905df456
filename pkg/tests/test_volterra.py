import math

import numpy as np
import pytest

from mvbsde.model import DiscountPreference, EtaKernel, MuKernel, RhoWeight
from mvbsde.volterra import (
    VolterraProblem,
    build_problem,
    closed_form_A,
    solve,
    theta_nodes_exact,
    theta_nodes_numeric,
)


def _pref(rho_kind="constant", rho_rate=0.0, lam_kind="zero", lam_value=1.0,
          lam_rate=0.0):
    rho = RhoWeight(kind=rho_kind, value=1.0, rate=rho_rate)
    if lam_kind == "zero":
        eta = EtaKernel(kind="zero")
    elif lam_kind == "constant":
        eta = EtaKernel(kind="constant", value=lam_value)
    else:
        eta = EtaKernel(kind="exponential", value=1.0, rate=lam_rate)
    return DiscountPreference(gamma=4.0, rho_weight=rho, eta=eta)


def corpus_preferences():
    """ten configurations: rho in {1, e^{0.2 s}} x lam in {0, const, exp 0.2/0.5/0.8}"""
    prefs = []
    for rho_kind, rho_rate in (("constant", 0.0), ("exponential", 0.2)):
        prefs.append(_pref(rho_kind, rho_rate, "zero"))
        prefs.append(_pref(rho_kind, rho_rate, "constant", lam_value=0.5))
        for rate in (0.2, 0.5, 0.8):
            prefs.append(_pref(rho_kind, rho_rate, "exponential", lam_rate=rate))
    return prefs


def test_corpus_matches_closed_form():
    T = 1.0
    prefs = corpus_preferences()
    assert len(prefs) == 10
    for pref in prefs:
        sol = solve(build_problem(pref, lambda s: 0.1, lambda s: 1.0, T, n_quad=200))
        exact = closed_form_A(pref, T, sol.nodes)
        assert np.max(np.abs(sol.values - exact)) < 1e-6


def test_zero_kernel_constant_weight():
    sol = solve(build_problem(_pref(), lambda s: 0.1, lambda s: 1.0, 1.0))
    assert np.all(sol.values == 1.0)


def test_exponential_kernel_worked_example():
    # lam(s, tau) = e^{-0.5 (tau - s)} on T = 1
    pref = _pref(lam_kind="exponential", lam_rate=0.5)
    sol = solve(build_problem(pref, lambda s: 0.1, lambda s: 1.0, 1.0, n_quad=200))
    expected = 1.0 + (1.0 - np.exp(-0.5 * (1.0 - sol.nodes))) / 0.5
    assert np.max(np.abs(sol.values - expected)) < 1e-6


def test_closed_form_values():
    assert closed_form_A(_pref(), 1.0, 0.3) == pytest.approx(1.0)
    # constant lam = 1 over a length-2 window
    pref_c = _pref(lam_kind="constant", lam_value=1.0)
    assert closed_form_A(pref_c, 2.0, 0.0) == pytest.approx(3.0)
    # rho = 2, lam = e^{-(tau-s)}, unit window
    pref_e = DiscountPreference(
        gamma=4.0, rho_weight=RhoWeight(kind="constant", value=2.0),
        eta=EtaKernel(kind="exponential", value=1.0, rate=1.0))
    assert closed_form_A(pref_e, 1.0, 0.0) == pytest.approx(
        2.0 * (2.0 - math.exp(-1.0)), rel=1e-12)
    assert closed_form_A(pref_e, 1.0, 0.0) == pytest.approx(3.2642, abs=5e-5)


def test_terminal_value_equals_weight():
    for pref in corpus_preferences():
        sol = solve(build_problem(pref, lambda s: 0.1, lambda s: 1.0, 1.0, n_quad=50))
        assert sol.values[-1] == pytest.approx(float(pref.rho_weight.rho(1.0)), rel=1e-12)


def _manufactured(n, quad_order=4):
    # K(s, tau) = 0.5 e^{s - tau}, Theta(s) = 1 + 0.5 (T - s)  =>  A(s) = 1 + (T - s)
    T = 1.0
    nodes = np.linspace(0.0, T, n + 1)
    theta = 1.0 + 0.5 * (T - nodes)
    kern = 0.5 * np.exp(nodes[:, None] - nodes[None, :])
    sol = solve(VolterraProblem(horizon=T, theta_nodes=theta, kernel_nodes=kern,
                                quad_order=quad_order))
    return np.max(np.abs(sol.values - (1.0 + (T - nodes))))


def test_trapezoid_grid_convergence():
    # the tag corpus solves exactly (zero kernel, analytic Theta), so the
    # quadrature order is only observable on a nonzero manufactured kernel
    errs = [_manufactured(n, quad_order=2) for n in (25, 50, 100)]
    ratios = [errs[i] / errs[i + 1] for i in range(2)]
    for ratio in ratios:
        assert 3.0 < ratio < 5.0  # second order


def test_manufactured_kernel_solution():
    assert _manufactured(200, quad_order=4) < 1e-7


def test_zero_kernel_returns_theta():
    nodes = np.linspace(0.0, 1.0, 41)
    theta = np.cos(nodes)
    sol = solve(VolterraProblem(horizon=1.0, theta_nodes=theta,
                                kernel_nodes=np.zeros((41, 41))))
    assert np.allclose(sol.values, theta, atol=0.0)


def test_solution_interpolation():
    nodes = np.linspace(0.0, 1.0, 11)
    theta = 2.0 * nodes + 1.0
    sol = solve(VolterraProblem(horizon=1.0, theta_nodes=theta,
                                kernel_nodes=np.zeros((11, 11))))
    # piecewise linear through linear data is exact off-node
    assert float(sol(0.123)) == pytest.approx(1.246, rel=1e-12)


def test_theta_quadrature_matches_exact():
    T = 1.0
    for pref in (_pref(lam_kind="exponential", lam_rate=0.5),
                 _pref("exponential", 0.2, "constant", lam_value=0.5)):
        nodes = np.linspace(0.0, T, 201)
        exact = theta_nodes_exact(pref, T, nodes)
        numeric = theta_nodes_numeric(pref, T, nodes)
        assert exact is not None
        assert np.max(np.abs(exact - numeric)) < 1e-8


def test_build_problem_rejects_bad_loadings():
    with pytest.raises(ValueError):
        build_problem(_pref(), lambda s: float("nan"), lambda s: 1.0, 1.0)
    with pytest.raises(ValueError):
        build_problem(_pref(), lambda s: 0.1, lambda s: 0.0, 1.0)
