import numpy as np
import pytest

from covbridge import (
    BasisMismatchError,
    LinearSystem,
    OutOfRangeError,
    boundary_nonsingular,
    boundary_structure,
    efg_blocks,
    make_marginal,
    pT_inverse_limit,
    q0_inverse_limit,
    singular_boundary,
    solve_bridge,
    solve_singular,
)

from conftest import brownian_bridge, random_instance, rotated_rank1_pair


def test_brownian_bridge_limits_are_identity():
    for n in (1, 3):
        sys, m0, mT = brownian_bridge(n)
        assert np.allclose(q0_inverse_limit(sys, m0, mT), np.eye(n), atol=1e-13)
        assert np.allclose(pT_inverse_limit(sys, m0, mT), np.eye(n), atol=1e-13)
        sb = singular_boundary(sys, m0, mT)
        assert np.allclose(sb.P0, 0.0) and np.allclose(sb.QT, 0.0)


def test_brownian_bridge_closed_forms():
    sys, m0, mT = brownian_bridge(2)
    sol = solve_singular(sys, m0, mT)
    g = sol.grid
    q = (g >= 0) & (g <= 0.99)
    ref_q = 1.0 / (1.0 - g[q])
    assert np.max(np.abs(sol.Qinv[q] - ref_q[:, None, None] * np.eye(2))) <= 1e-6 * 100
    assert np.max(np.abs(sol.Qinv[q] - ref_q[:, None, None] * np.eye(2)) / ref_q[:, None, None]) <= 1e-8
    p = g >= 0.01
    ref_p = 1.0 / g[p]
    assert np.max(np.abs(sol.Pinv[p] - ref_p[:, None, None] * np.eye(2)) / ref_p[:, None, None]) <= 1e-8
    assert np.max(np.abs(sol.Sigma - (g * (1 - g))[:, None, None] * np.eye(2))) <= 1e-8
    # NaN outside the integration windows, finite Sigma everywhere
    assert np.isnan(sol.Qinv[-1]).all() and np.isnan(sol.Pinv[0]).all()
    assert np.isfinite(sol.Sigma).all()
    assert sol.q_window == (0.0, 1.0 - sol.delta) and sol.p_window == (sol.delta, 1.0)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_limit_reduces_to_nonsingular(seed):
    sys, m0, mT = random_instance(np.random.default_rng(seed), 3)
    bp = boundary_nonsingular(sys, m0, mT)
    assert np.allclose(q0_inverse_limit(sys, m0, mT), bp.Q0inv, rtol=1e-8, atol=1e-10)
    assert np.allclose(pT_inverse_limit(sys, m0, mT), bp.PTinv, rtol=1e-8, atol=1e-10)


def test_efg_scalar_oracle():
    # Lambda = 1, hat E = 2: Theta = 3/2 and E = 1/2 - 3/2 = -1
    sys = LinearSystem([[0.0]], [[1.0]], 1.0)
    efg = efg_blocks(sys, make_marginal([[1.0]]), make_marginal([[2.0]]))
    assert efg.Theta[0, 0] == pytest.approx(1.5)
    assert efg.E[0, 0] == pytest.approx(-1.0)
    assert max(efg.fixed_point_residuals()) <= 1e-14


def test_efg_basis_mismatch():
    sys, m0, mT = rotated_rank1_pair()
    with pytest.raises(BasisMismatchError):
        efg_blocks(sys, m0, mT, rotate=False)
    di = LinearSystem([[0.0, 1.0], [0.0, 0.0]], [[0.0], [1.0]], 1.0)
    a = efg_blocks(di, make_marginal(np.diag([1.0, 0.0])), make_marginal(np.diag([0.2, 0.0])), rotate=False)
    b = efg_blocks(di, make_marginal(np.diag([1.0, 0.0])), make_marginal(np.diag([0.2, 0.0])))
    assert np.allclose(np.abs(a.matrix), np.abs(b.matrix))


@pytest.mark.parametrize("seed", range(6))
def test_negative_semidefinite_and_blocks(seed):
    rng = np.random.default_rng(seed)
    n = 2 + seed % 3
    sys, m0, mT = random_instance(rng, n, rank0=1 + seed % (n - 1), rankT=n - 1)
    efg = efg_blocks(sys, m0, mT)
    assert efg.max_eigenvalue <= 1e-10
    assert np.linalg.eigvalsh(efg.E).max() < 0
    sb = singular_boundary(sys, m0, mT)
    failed = [c.name for c in boundary_structure(sb, m0, mT) if not c.passed]
    assert not failed


def test_double_integrator_endpoints(di):
    sys, m0, mT = di
    sol = solve_bridge(sys, m0, mT)
    assert sol.method == "lift"
    assert np.max(np.abs(sol.Sigma[0] - m0.Sigma)) <= 1e-8
    assert np.max(np.abs(sol.Sigma[-1] - mT.Sigma)) <= 1e-8
    assert np.linalg.eigvalsh(sol.Sigma).min() >= -1e-12
    # the interior covariance is nonsingular
    assert np.linalg.eigvalsh(sol.sigma_at(0.5)).min() > 1e-3
    sb = sol.boundary
    assert np.linalg.norm(m0.proj_null @ sb.P0, 2) <= 1e-8
    assert np.linalg.norm(mT.proj_null @ sb.QT, 2) <= 1e-8


def test_grid_has_clearance_nodes(di):
    sys, m0, mT = di
    sol = solve_singular(sys, m0, mT, steps=400, delta=0.01)
    assert 0.01 in sol.grid and 0.99 in sol.grid
    assert np.all(np.diff(sol.grid) > 0)
    # midpoints double the density near both singular ends
    assert len(sol.grid) == 401 + 2 * 40


@pytest.mark.parametrize("make", [lambda: brownian_bridge(2), rotated_rank1_pair])
def test_lift_and_direct_riccati_agree(make):
    sys, m0, mT = make()
    a = solve_singular(sys, m0, mT, method="lift")
    b = solve_singular(sys, m0, mT, method="riccati")
    assert np.array_equal(a.grid, b.grid)
    assert np.max(np.abs(a.Sigma - b.Sigma)) <= 1e-6
    live = np.isfinite(a.Qinv)
    assert np.max(np.abs(a.Qinv[live] - b.Qinv[live]) / (1 + np.abs(a.Qinv[live]))) <= 1e-4


def test_singular_solver_rejects_bad_delta(di):
    sys, m0, mT = di
    with pytest.raises(OutOfRangeError):
        solve_singular(sys, m0, mT, delta=0.6)


def test_mixed_singularity():
    sys = LinearSystem([[0.0, 1.0], [0.0, 0.0]], [[0.0], [1.0]], 1.0)
    m0, mT = make_marginal(np.eye(2)), make_marginal(np.diag([0.5, 0.0]))
    sol = solve_bridge(sys, m0, mT)
    assert sol.singular_flags == (False, True)
    assert sol.p_window[0] == 0.0 and sol.q_window[1] < 1.0
    assert np.max(np.abs(sol.Sigma[0] - m0.Sigma)) <= 1e-6
    assert np.max(np.abs(sol.Sigma[-1] - mT.Sigma)) <= 1e-8
