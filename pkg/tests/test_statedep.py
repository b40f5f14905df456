import numpy as np
import pytest

from mvbsde.statedep import StateDepProblem, StateDepSolution, solve_phi

T = 1.0


def _lam(s, tau):
    # shared-rate running/terminal kernels, ratio e^{0.5 (T - tau)}
    return np.exp(0.5 * (T - np.asarray(tau, dtype=float)))


def _problem(n_grid=400, beta=0.25, rho=1.0, lam=_lam):
    return StateDepProblem(beta=lambda s: beta, sigma=lambda s: 0.4, r0=0.03,
                           gamma=4.0, rho=lambda s: rho, lam=lam,
                           horizon=T, n_grid=n_grid)


def test_terminal_node_closed_form():
    # at s = T all tail integrals vanish: phi(T) = beta rho(T) / (gamma sigma^2)
    sol = solve_phi(_problem())
    assert sol.phi[-1] == pytest.approx(0.25 / (4.0 * 0.16), rel=1e-14)
    doubled = solve_phi(_problem(rho=2.0))
    assert doubled.phi[-1] == pytest.approx(2.0 * 0.25 / (4.0 * 0.16), rel=1e-14)


def test_solution_shape_and_interpolation():
    sol = solve_phi(_problem(n_grid=200))
    assert isinstance(sol, StateDepSolution)
    assert sol.phi.shape == (201,)
    assert sol.residual < 1e-10
    assert sol.iterations >= 1
    assert np.all(np.diff(sol.phi) > 0.0)  # discounting lightens early positions
    mid = 0.5 * (sol.nodes[10] + sol.nodes[11])
    assert sol(mid) == pytest.approx(0.5 * (sol.phi[10] + sol.phi[11]), rel=1e-14)


def test_zero_excess_return_gives_zero_fraction():
    sol = solve_phi(_problem(beta=0.0))
    assert np.all(sol.phi == 0.0)
    assert sol.iterations == 1


def test_grid_refinement_is_second_order():
    sols = {n: solve_phi(_problem(n_grid=n)) for n in (100, 200, 400)}
    gap_coarse = np.max(np.abs(sols[200](sols[100].nodes) - sols[100].phi))
    gap_fine = np.max(np.abs(sols[400](sols[200].nodes) - sols[200].phi))
    assert gap_fine < 1e-7
    assert 3.2 < gap_coarse / gap_fine < 4.8


def test_fixed_point_holds_under_independent_quadrature():
    # re-apply the map with plain trapezoid sums on a 10x finer grid
    sol = solve_phi(_problem())
    fine = np.linspace(0.0, T, 4001)
    phi = sol(fine)
    h = fine[1] - fine[0]
    g1 = 0.03 + 0.25 * phi
    g3 = 2.0 * g1 + 0.16 * phi * phi
    c1 = np.concatenate([[0.0], np.cumsum(0.5 * h * (g1[1:] + g1[:-1]))])
    c3 = np.concatenate([[0.0], np.cumsum(0.5 * h * (g3[1:] + g3[:-1]))])
    beta, sig2, gamma = 0.25, 0.16, 4.0
    for i in (0, 1000, 2000, 3000, 4000):
        e1 = np.exp(c1[i:] - c1[i])
        e2 = e1 * e1
        e3 = np.exp(c3[i:] - c3[i])
        tau = fine[i:]
        lw = _lam(fine[i], tau)
        n1 = np.trapezoid(lw * e1, tau) + e1[-1]
        n2 = np.trapezoid(lw * e2, tau) + e2[-1]
        den = np.trapezoid(lw * e3, tau) + e3[-1]
        val = (beta / (gamma * sig2)) * n1 / den + (beta / sig2) * (n2 / den - 1.0)
        assert abs(float(val) - phi[i]) < 1e-7


def test_small_return_loading_is_first_order_myopic():
    beta = 1e-4
    sol = solve_phi(_problem(beta=beta))
    scaled = sol.phi * 4.0 * 0.16 / beta
    assert scaled[-1] == pytest.approx(1.0, rel=1e-10)
    assert np.all(scaled > 0.0)
    assert np.all(scaled <= 1.0 + 1e-12)


def test_validation_and_convergence_errors():
    with pytest.raises(ValueError):
        _problem(n_grid=1)
    with pytest.raises(ValueError):
        StateDepProblem(beta=lambda s: 0.1, sigma=lambda s: 0.4, r0=0.0,
                        gamma=0.0, rho=lambda s: 1.0, lam=_lam,
                        horizon=T, n_grid=10)
    with pytest.raises(ValueError, match="sigma"):
        solve_phi(StateDepProblem(beta=lambda s: 0.1, sigma=lambda s: 0.0,
                                  r0=0.0, gamma=4.0, rho=lambda s: 1.0,
                                  lam=_lam, horizon=T, n_grid=10))
    with pytest.raises(ValueError):
        solve_phi(_problem(), tol=0.0)
    with pytest.raises(RuntimeError, match="no convergence"):
        solve_phi(_problem(), max_iter=2)
