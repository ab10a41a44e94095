import numpy as np
import pytest
from scipy.integrate import solve_ivp

from covbridge import (
    LinearSystem,
    SingularCovarianceError,
    ValidationError,
    boundary_nonsingular,
    feedback_gain,
    integrate_lyapunov_pair,
    make_marginal,
    solve_bridge,
)
from covbridge.bridge_core import lyapunov_values

from conftest import random_instance

GOLD = (1 + np.sqrt(5)) / 2


@pytest.fixture
def scalar():
    sys = LinearSystem([[0.0]], [[1.0]], 1.0)
    m = make_marginal([[1.0]])
    return sys, m, m


def test_scalar_golden_ratio(scalar):
    sys, m0, mT = scalar
    bp = boundary_nonsingular(sys, m0, mT)
    assert bp.Q0[0, 0] == pytest.approx(GOLD + 1, abs=1e-12)
    assert bp.P0[0, 0] == pytest.approx(GOLD, abs=1e-12)
    assert bp.Q0inv[0, 0] == pytest.approx((3 - np.sqrt(5)) / 2, abs=1e-12)
    # A = 0, B = 1: Q decreases and P increases at unit rate
    assert bp.PT[0, 0] == pytest.approx(GOLD + 1, abs=1e-12)
    assert bp.QT[0, 0] == pytest.approx(GOLD, abs=1e-12)


def test_scalar_trajectories(scalar):
    sys, m0, mT = scalar
    bp = boundary_nonsingular(sys, m0, mT)
    g, P, Q = lyapunov_values(sys, bp)
    assert np.allclose(Q[:, 0, 0], GOLD + 1 - g, atol=1e-12)
    assert np.allclose(P[:, 0, 0], GOLD + g, atol=1e-12)
    sol = solve_bridge(sys, m0, mT)
    assert sol.method == "lyapunov"
    S = sol.Sigma[:, 0, 0]
    ref = (GOLD + sol.grid) * (GOLD + 1 - sol.grid) / (2 * GOLD + 1)
    assert np.allclose(S, ref, atol=1e-12)
    assert feedback_gain(sol, 0.0)[0, 0] == pytest.approx(-(3 - np.sqrt(5)) / 2, abs=1e-12)


def test_boundary_residuals_oscillator(osc):
    sys, m0, mT = osc
    bp = boundary_nonsingular(sys, m0, mT)
    assert max(bp.residuals(m0, mT)) <= 1e-8
    for X in (bp.Q0, bp.P0, bp.QT, bp.PT):
        assert np.allclose(X, X.T)
        assert np.linalg.eigvalsh(X).min() > 0
    assert np.allclose(bp.Q0 @ bp.Q0inv, np.eye(2), atol=1e-10)
    assert np.allclose(bp.PT @ bp.PTinv, np.eye(2), atol=1e-10)


def rel(X, Y):
    return np.linalg.norm(X - Y, 2) / np.linalg.norm(Y, 2)


def _lyap_ivp(sys, X0, t0, t1, sign):
    n = sys.n

    def f(t, y):
        X = y.reshape(n, n)
        AX = sys.A(t) @ X
        return (AX + AX.T + sign * sys.BBt(t)).ravel()

    return solve_ivp(f, (t0, t1), X0.ravel(), rtol=1e-11, atol=1e-13).y[:, -1].reshape(n, n)


@pytest.mark.parametrize("seed", [0, 1])
def test_duality_against_ivp(seed):
    sys, m0, mT = random_instance(np.random.default_rng(seed), 3)
    bp = boundary_nonsingular(sys, m0, mT)
    assert rel(_lyap_ivp(sys, bp.P0, 0, 1, +1), bp.PT) <= 1e-6
    assert rel(_lyap_ivp(sys, bp.Q0, 0, 1, -1), bp.QT) <= 1e-6
    for direction in ("forward", "backward"):
        g, P, Q = lyapunov_values(sys, bp, direction=direction)
        assert rel(P[-1], bp.PT) <= 1e-6 and rel(Q[0], bp.Q0) <= 1e-6
        sol = integrate_lyapunov_pair(sys, bp, direction=direction)
        assert rel(sol.Sigma[0], m0.Sigma) <= 1e-6 and rel(sol.Sigma[-1], mT.Sigma) <= 1e-6


def test_solution_is_consistent(osc):
    sys, m0, mT = osc
    sol = solve_bridge(sys, m0, mT)
    assert np.allclose(sol.Sigma[0], m0.Sigma, atol=1e-8)
    assert np.allclose(sol.Sigma[-1], mT.Sigma, atol=1e-8)
    assert np.allclose(sol.sigma_at(sol.grid[7]), sol.Sigma[7])
    mid = 0.5 * (sol.grid[7] + sol.grid[8])
    assert np.allclose(sol.sigma_at(mid), 0.5 * (sol.Sigma[7] + sol.Sigma[8]), atol=1e-6)
    K = feedback_gain(sol, 0.3)
    assert np.allclose(K, -sys.B(0.3).T @ sol.qinv_at(0.3))
    assert np.allclose(sol.gain[0], -sys.B(0.0).T @ sol.Qinv[0])


def test_rejects_singular_and_mismatch(di):
    sys, m0, mT = di
    with pytest.raises(SingularCovarianceError) as ei:
        boundary_nonsingular(sys, m0, mT)
    assert ei.value.code == "singular-covariance"
    with pytest.raises(ValidationError):
        boundary_nonsingular(sys, make_marginal(np.eye(3)), make_marginal(np.eye(3)))
