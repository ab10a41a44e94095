import numpy as np
import pytest
from scipy.integrate import quad_vec
from scipy.linalg import expm

from covbridge import LinearSystem, MatrixFunction, SingularGramianError, ValidationError
from covbridge.dynamics import (
    controllability_gramian,
    controllability_probe,
    reachability_gramian,
    state_transition,
)

from conftest import DI_A, DI_B


def quad_gramian(A, B, t1, t0):
    """Reachability Gramian of a constant pair by adaptive quadrature."""
    A, B = np.asarray(A), np.asarray(B)
    val, _ = quad_vec(lambda s: expm(A * (t1 - s)) @ B @ B.T @ expm(A * (t1 - s)).T, t0, t1, epsabs=1e-14)
    return val


def test_double_integrator_gramians():
    sys = LinearSystem(DI_A, DI_B, 1.0)
    M = np.array([[1 / 3, 1 / 2], [1 / 2, 1.0]])
    N = np.array([[1 / 3, -1 / 2], [-1 / 2, 1.0]])
    assert np.allclose(sys.gram_M, M, atol=1e-12)
    assert np.allclose(sys.gram_N, N, atol=1e-12)
    assert np.allclose(sys.phi_T0, [[1, 1], [0, 1]], atol=1e-13)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_gramian_matches_quadrature(seed):
    rng = np.random.default_rng(seed)
    A, B = rng.normal(size=(3, 3)), rng.normal(size=(3, 2))
    sys = LinearSystem(A, B, 1.3)
    for t1, t0 in [(1.3, 0.0), (0.9, 0.2)]:
        ref = quad_gramian(A, B, t1, t0)
        assert np.linalg.norm(reachability_gramian(sys, t1, t0) - ref) <= 1e-9 * np.linalg.norm(ref)
        Phi = state_transition(sys, t0, t1)
        assert np.allclose(controllability_gramian(sys, t1, t0), Phi @ ref @ Phi.T, rtol=1e-9, atol=1e-12)


def test_sampled_matches_constant():
    rng = np.random.default_rng(3)
    A, B = rng.normal(size=(2, 2)), rng.normal(size=(2, 1))
    ts = np.linspace(0.0, 1.0, 11)
    sampled = LinearSystem(
        MatrixFunction.sampled(ts, np.repeat(A[None], 11, 0)), MatrixFunction.sampled(ts, np.repeat(B[None], 11, 0)), 1.0
    )
    assert np.allclose(state_transition(sampled, 1.0, 0.0), expm(A), atol=1e-8)
    assert np.allclose(sampled.gram_M, quad_gramian(A, B, 1.0, 0.0), atol=1e-8)


def test_time_varying_transition():
    # A(t) = [[0, t], [0, 0]] commutes with itself, so Phi(t,0) = expm(int A)
    ts = np.linspace(0.0, 1.0, 201)
    vals = np.zeros((201, 2, 2))
    vals[:, 0, 1] = ts
    sys = LinearSystem(MatrixFunction.sampled(ts, vals), DI_B, 1.0)
    assert np.allclose(state_transition(sys, 1.0, 0.0), [[1, 0.5], [0, 1]], atol=1e-8)


def test_semigroup_and_inverse():
    rng = np.random.default_rng(4)
    sys = LinearSystem(rng.normal(size=(3, 3)), rng.normal(size=(3, 1)), 2.0)
    a, b, c = 0.3, 1.1, 1.9
    assert np.allclose(
        state_transition(sys, c, a), state_transition(sys, c, b) @ state_transition(sys, b, a), atol=1e-11
    )
    assert np.allclose(state_transition(sys, a, c) @ state_transition(sys, c, a), np.eye(3), atol=1e-11)


def test_uncontrollable_rejected():
    with pytest.raises(SingularGramianError) as ei:
        LinearSystem(DI_A, [[0.0], [0.0]], 1.0)
    assert ei.value.code == "singular-gramian"
    with pytest.raises(SingularGramianError):
        LinearSystem(np.zeros((2, 2)), [[1.0], [0.0]], 1.0)


def test_probe_ratios_and_unchecked():
    sys = LinearSystem(DI_A, DI_B, 1.0)
    ratios = controllability_probe(sys)
    assert len(ratios) == 3 and all(r > 1e-6 for r in ratios.values())
    LinearSystem(DI_A, [[0.0], [0.0]], 1.0, check=False)


@pytest.mark.parametrize(
    "A, B, T",
    [([[0, 1]], [[1]], 1.0), (DI_A, [[1.0]], 1.0), (DI_A, DI_B, 0.0), (DI_A, DI_B, -1.0)],
)
def test_shape_and_horizon_validation(A, B, T):
    with pytest.raises(ValidationError):
        LinearSystem(A, B, T)
