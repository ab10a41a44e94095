import numpy as np
import pytest

from covbridge import LinearSystem, make_marginal

DI_A = [[0.0, 1.0], [0.0, 0.0]]
DI_B = [[0.0], [1.0]]


def brownian_bridge(n=1):
    sys = LinearSystem(np.zeros((n, n)), np.eye(n), 1.0)
    z = make_marginal(np.zeros((n, n)))
    return sys, z, z


def double_integrator():
    sys = LinearSystem(DI_A, DI_B, 1.0)
    return sys, make_marginal(np.diag([1.0, 0.0])), make_marginal(np.diag([0.2, 0.0]))


def damped_oscillator():
    sys = LinearSystem([[0.0, 1.0], [-1.0, -0.5]], DI_B, 2.0)
    return sys, make_marginal([[1.0, 0.2], [0.2, 0.5]]), make_marginal([[0.3, 0.0], [0.0, 0.4]])


def random_instance(rng, n, m=None, rank0=None, rankT=None, max_cond=1e4):
    """Random controllable pair with marginals of the requested ranks.

    Draws are rejected until the reachability Gramian has condition number
    at most ``max_cond``; nearly uncontrollable pairs make the boundary
    values too ill-conditioned for double precision.
    """
    m = m or max(1, n // 2)
    for _ in range(10_000):
        A = rng.normal(size=(n, n)) / np.sqrt(n)
        B = rng.normal(size=(n, m))
        try:
            sys = LinearSystem(A, B, 1.0)
        except Exception:
            continue
        if np.linalg.cond(sys.gram_M) <= max_cond:
            break
    else:
        raise RuntimeError(f"no controllable pair with cond(M) <= {max_cond:g} found")

    def cov(r):
        r = n if r is None else r
        G = rng.normal(size=(n, r))
        return G @ G.T / max(r, 1) + (0.1 * np.eye(n) if r == n else 0.0)

    return sys, make_marginal(cov(rank0)), make_marginal(cov(rankT))


def scaled_singular_instance(seed, n, rank0, rankT, m=None, max_cond=1e3):
    """Well-scaled singular instance: range eigenvalues in [0.5, 2] in a random basis."""
    rng = np.random.default_rng(seed)
    sys, _, _ = random_instance(rng, n, m=m, max_cond=max_cond)

    def cov(r):
        Q, _ = np.linalg.qr(rng.normal(size=(n, n)))
        w = np.zeros(n)
        w[:r] = rng.uniform(0.5, 2.0, size=r)
        return (Q * w) @ Q.T

    return sys, make_marginal(cov(rank0)), make_marginal(cov(rankT))


def rotated_rank1_pair(seed=7):
    """Double integrator with rank-one marginals, all in a seeded random basis."""
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.normal(size=(2, 2)))
    sys = LinearSystem(Q @ np.array(DI_A) @ Q.T, Q @ np.array(DI_B), 1.0)
    S0 = Q @ np.diag([1.0, 0.0]) @ Q.T
    ST = Q @ np.diag([0.5, 0.0]) @ Q.T
    return sys, make_marginal(S0), make_marginal(ST)


@pytest.fixture
def bb():
    return brownian_bridge()


@pytest.fixture
def di():
    return double_integrator()


@pytest.fixture
def osc():
    return damped_oscillator()


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for i in sorted(results):
            terminalreporter.write_line(results[i])
