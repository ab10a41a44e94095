"""Bridges between possibly degenerate Gaussian marginals.

When ``Sigma_0`` or ``Sigma_T`` is singular the pair ``(P, Q)`` still exists,
but ``Q(t)^{-1}`` escapes to infinity as ``t -> T`` (and ``P(t)^{-1}`` as
``t -> 0``).  The solver works with the finite limits of ``Q(0)^{-1}`` and
``P(T)^{-1}`` obtained from the regularized problem ``Sigma + eps * Pi_null``
as ``eps -> 0``, integrates the two Riccati equations up to a clearance
``delta`` from the escape time, and recovers the endpoint covariances
algebraically.

The Riccati equations are integrated through their linear Hamiltonian lift:
with ``X(0) = I``, ``Y(0) = Q(0)^{-1}`` and

    dX/dt = A X - B B' Y,    dY/dt = -A' Y,

``Q(t)^{-1} = Y X^{-1}``.  This stays accurate right up to the clearance,
where a direct explicit scheme on the quadratic equation would need a step
size proportional to ``(T - t)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bridge_core import (
    BridgeSolution,
    assemble_sigma,
    boundary_nonsingular,
    gains,
    hat_initial,
    hat_target,
    integrate_lyapunov_pair,
    most_accurate,
    pushed_correction,
)
from .dynamics import LinearSystem, rk4, sym
from .errors import (
    BasisMismatchError,
    EscapeTimeError,
    IntegrationError,
    NumericalFailure,
    OutOfRangeError,
    ValidationError,
)
from .psd import GaussianMarginal, psd_sqrt
from .report import check, flag

BLOCK_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class HatSigma:
    """Marginals transported across the horizon and weighted by ``M^{-1}``."""

    hatT: np.ndarray
    hat0: np.ndarray


def hat_sigmas(sys: LinearSystem, m0: GaussianMarginal, mT: GaussianMarginal) -> HatSigma:
    return HatSigma(hatT=hat_target(sys, mT.Sigma), hat0=hat_initial(sys, m0.Sigma))


def _limit_formula(lead, marg: GaussianMarginal, hat) -> np.ndarray:
    # lead + S+^(1/2) (I/2 - R) S+^(1/2) - C S+^(1/2) - (C S+^(1/2))' - Pn H Pn + C C'
    # with R = (I/4 + S^(1/2) H S^(1/2))^(1/2), W = (I/2 + R)^(-1), C = Pn H S^(1/2) W.
    n = marg.n
    h, hp, Pn = marg.sqrt, marg.pinv_sqrt, marg.proj_null
    I = np.eye(n)
    R = psd_sqrt(0.25 * I + sym(h @ hat @ h))
    W = sym(np.linalg.inv(0.5 * I + R))
    C = Pn @ hat @ h @ W
    CS = C @ hp
    out = lead + hp @ (0.5 * I - R) @ hp - CS - CS.T - Pn @ hat @ Pn + C @ C.T
    if not np.all(np.isfinite(out)):
        raise NumericalFailure("numerical-failure: limit formula produced non-finite values")
    return sym(out)


def _limit(lead, marg: GaussianMarginal, hat, form: str) -> np.ndarray:
    if form == "six-term":
        return _limit_formula(lead, marg, hat)
    if form == "pushed":
        return sym(lead - pushed_correction(marg, hat))
    if form != "auto":
        raise ValueError(f"form must be 'auto', 'six-term' or 'pushed', got {form!r}")
    D = most_accurate((pushed_correction(marg, hat), sym(lead - _limit_formula(lead, marg, hat))), marg, hat)
    return sym(lead - D)


def q0_inverse_limit(sys: LinearSystem, m0: GaussianMarginal, mT: GaussianMarginal, form: str = "auto") -> np.ndarray:
    """Limit of ``Q(0)^{-1}`` as the null-space regularization vanishes.

    For nonsingular marginals this equals the inverse of the closed-form
    ``Q(0)`` of `covbridge.bridge_core.boundary_nonsingular`.

    Parameters
    ----------
    form : {"auto", "six-term", "pushed"}
        ``"six-term"`` evaluates the explicit limit through the range/null
        split of ``Sigma_0``; ``"pushed"`` uses the equivalent continuous
        expression of `covbridge.bridge_core.pushed_correction`.  ``"auto"``
        computes both and keeps the one with the smaller quadratic residual.
    """
    Phi, Minv = sys.phi_T0, sys.gram_M_inv
    return _limit(sym(Phi.T @ Minv @ Phi), m0, hat_target(sys, mT.Sigma), form)


def pT_inverse_limit(sys: LinearSystem, m0: GaussianMarginal, mT: GaussianMarginal, form: str = "auto") -> np.ndarray:
    """Limit of ``P(T)^{-1}``; mirror of `q0_inverse_limit`."""
    return _limit(sys.gram_M_inv, mT, hat_initial(sys, m0.Sigma), form)


@dataclass(frozen=True, eq=False)
class EFGBlocks:
    """Blocks of ``Q(0)^{-1} - Phi' M^{-1} Phi`` in the eigenbasis of ``Sigma_0``.

    ``basis`` has the ``k`` range directions of ``Sigma_0`` first;
    ``Lambda0`` is the (diagonal) range block.
    """

    E: np.ndarray
    F: np.ndarray
    G: np.ndarray
    Theta: np.ndarray
    Lambda0: np.ndarray
    hatE: np.ndarray
    hatF: np.ndarray
    hatG: np.ndarray
    basis: np.ndarray

    @property
    def k(self) -> int:
        return self.E.shape[0]

    @property
    def matrix(self) -> np.ndarray:
        return np.block([[self.E, self.F], [self.F.T, self.G]])

    @property
    def max_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(sym(self.matrix))[-1])

    def fixed_point_residuals(self) -> tuple[float, float, float]:
        """Residuals of ``E L E - E = H_E``, ``E L F - F = H_F``, ``F' L F - G = H_G``."""
        E, F, G, L = self.E, self.F, self.G, self.Lambda0
        r = (
            E @ L @ E - E - self.hatE,
            E @ L @ F - F - self.hatF,
            F.T @ L @ F - G - self.hatG,
        )
        return tuple(float(np.max(np.abs(x), initial=0.0)) for x in r)


def efg_blocks(
    sys: LinearSystem,
    m0: GaussianMarginal,
    mT: GaussianMarginal,
    rotate: bool = True,
    tol: float = 1e-9,
    form: str = "pushed",
) -> EFGBlocks:
    """E/F/G blocks with the negative root for ``E``.

    With ``rotate=True`` the computation runs in the eigenbasis of
    ``Sigma_0``.  With ``rotate=False`` the caller asserts that ``Sigma_0``
    is already ``diag(Lambda0, 0)`` with the range block first;
    `BasisMismatchError` is raised otherwise.

    ``form="appendix"`` evaluates ``E = L^{-1/2} (I/2 - Theta) L^{-1/2}``,
    ``F = -L^{-1/2} W L^{1/2} hatF`` and ``G = -hatG + hatF' L^{1/2} W^2 L^{1/2} hatF``
    literally; ``G`` then cancels terms of the size of ``hatG``.  The
    default ``form="pushed"`` writes ``hat = C' C`` and uses the equivalent
    ``[[E, F], [F', G]] = -C' (I/2 + (I/4 + C1 L C1')^{1/2})^{-1} C`` with
    ``C1`` the first ``k`` columns of ``C``, which has no cancellation.
    """
    if form not in ("pushed", "appendix"):
        raise ValueError(f"form must be 'pushed' or 'appendix', got {form!r}")
    n, k = m0.n, m0.rank
    if rotate:
        V = m0.basis
        Lam = m0.Lambda
    else:
        S = m0.Sigma
        scale = max(1.0, float(np.max(np.abs(S))))
        off = max(
            np.max(np.abs(S[:k, k:]), initial=0.0),
            np.max(np.abs(S[k:, :]), initial=0.0),
        )
        if off > tol * scale:
            raise BasisMismatchError(
                f"basis-mismatch: Sigma_0 is not diag(Lambda0, 0) in the given basis (off-block {off:.3e})"
            )
        V = np.eye(n)
        Lam = sym(S[:k, :k])
    H = sym(V.T @ hat_target(sys, mT.Sigma) @ V)
    hE, hF, hG = H[:k, :k], H[:k, k:], H[k:, k:]
    Lh = psd_sqrt(Lam) if k else np.zeros((0, 0))
    Ik = np.eye(k)
    Theta = psd_sqrt(0.25 * Ik + sym(Lh @ hE @ Lh)) if k else np.zeros((0, 0))
    if form == "pushed":
        C = psd_sqrt(H)
        C1 = C[:, :k]
        I = np.eye(n)
        Mx = -sym(C @ np.linalg.solve(0.5 * I + psd_sqrt(0.25 * I + sym(C1 @ Lam @ C1.T)), C))
        E, F, G = Mx[:k, :k], Mx[:k, k:], Mx[k:, k:]
    else:
        Lhi = np.linalg.inv(Lh) if k else np.zeros((0, 0))
        Winv = np.linalg.inv(Theta + 0.5 * Ik) if k else np.zeros((0, 0))
        E = sym(Lhi @ (0.5 * Ik - Theta) @ Lhi)
        F = -Lhi @ Winv @ Lh @ hF
        G = sym(-hG + hF.T @ Lh @ Winv @ Winv @ Lh @ hF)
    return EFGBlocks(E=E, F=F, G=G, Theta=Theta, Lambda0=Lam, hatE=hE, hatF=hF, hatG=hG, basis=V)


@dataclass(frozen=True, eq=False)
class SingularBoundary:
    """Boundary data of a possibly singular bridge.

    ``P0`` is obtained by transporting ``P(T) = PTinv^{-1}`` back to ``t=0``
    and ``QT`` by transporting ``Q(0)`` forward, so the block structure of
    both is a genuine consequence rather than a construction.  Either may be
    ``None`` when the corresponding inverse limit is singular, which can
    only happen at a nonsingular endpoint.
    """

    Q0inv: np.ndarray
    PTinv: np.ndarray
    P0: np.ndarray | None
    QT: np.ndarray | None
    Sigma0: np.ndarray
    SigmaT: np.ndarray


def _maybe_inverse(S, rank_tol):
    s = np.linalg.svd(S, compute_uv=False)
    if s[0] == 0 or s[-1] <= rank_tol * s[0]:
        return None
    return sym(np.linalg.inv(S))


def singular_boundary(sys: LinearSystem, m0: GaussianMarginal, mT: GaussianMarginal) -> SingularBoundary:
    Q0inv = q0_inverse_limit(sys, m0, mT)
    PTinv = pT_inverse_limit(sys, m0, mT)
    n = sys.n
    I = np.eye(n)

    PT = _maybe_inverse(PTinv, sys.rank_tol)
    P0 = None
    if PT is not None:
        P0 = sym(sys.phi_0T @ (PT - sys.gram_M) @ sys.phi_0T.T)
    elif m0.singular:
        raise NumericalFailure("numerical-failure: P(T)^{-1} limit is singular although Sigma_0 is singular")
    Q0 = _maybe_inverse(Q0inv, sys.rank_tol)
    QT = None
    if Q0 is not None:
        QT = sym(sys.phi_T0 @ (Q0 - sys.gram_N) @ sys.phi_T0.T)
    elif mT.singular:
        raise NumericalFailure("numerical-failure: Q(0)^{-1} limit is singular although Sigma_T is singular")

    # Sigma(0) = P0 (I + Q0inv P0)^{-1} = (I + P0 Q0inv)^{-1} P0; mirror at T.
    Sigma0 = sym(np.linalg.solve(I + P0 @ Q0inv, P0)) if P0 is not None else sym(m0.Sigma)
    SigmaT = sym(np.linalg.solve(I + QT @ PTinv, QT)) if QT is not None else sym(mT.Sigma)
    return SingularBoundary(Q0inv=Q0inv, PTinv=PTinv, P0=P0, QT=QT, Sigma0=Sigma0, SigmaT=SigmaT)


def _solution_grid(T, steps, d0, dT):
    base = np.linspace(0.0, T, steps + 1)
    extra = []
    mids = 0.5 * (base[1:] + base[:-1])
    if dT > 0:
        extra.append(mids[mids >= 0.9 * T])
    if d0 > 0:
        extra.append(mids[mids <= 0.1 * T])
    g = np.sort(np.concatenate([base] + extra))
    tiny = 1e-9 * T / steps
    for special in (d0, T - dT):
        if 0 < special < T:
            j = int(np.argmin(np.abs(g - special)))
            if abs(g[j] - special) < tiny:
                g[j] = special
            else:
                g = np.sort(np.append(g, special))
    return g


def _riccati_lift(sys: LinearSystem, K0, nodes, sign):
    """``K = Y X^{-1}`` along ``nodes`` (either direction), ``X(start) = I``.

    ``sign=-1`` gives ``dK/dt = -K A - A'K + K BB' K`` (the ``Q^{-1}`` equation),
    ``sign=+1`` gives ``dK/dt = -K A - A'K - K BB' K`` (the ``P^{-1}`` equation).
    """
    n = sys.n

    def rhs(t, Z):
        A = sys.A(t)
        BB = sys.BBt(t)
        return np.stack([A @ Z[0] + sign * (BB @ Z[1]), -A.T @ Z[1]])

    try:
        Z = rk4(rhs, np.stack([np.eye(n), K0]), nodes)
    except IntegrationError as exc:
        raise EscapeTimeError(f"premature-escape: {exc}") from exc
    X, Y = Z[:, 0], Z[:, 1]
    s = np.linalg.svd(X, compute_uv=False)
    bad = ~(s[:, -1] > sys.rank_tol * s[:, 0])
    if np.any(bad):
        j = int(np.argmax(bad))
        raise EscapeTimeError(
            f"premature-escape: Riccati solution blows up near t={nodes[j]:.6g}", time=float(nodes[j])
        )
    Xt = np.swapaxes(X, 1, 2)
    K = np.swapaxes(np.linalg.solve(Xt, np.swapaxes(Y, 1, 2)), 1, 2)
    return sym(K)


def _riccati_direct(sys: LinearSystem, K0, nodes, sign):
    """Plain RK4 on the quadratic equation; a cross-check for `_riccati_lift`."""

    def rhs(t, K):
        A = sys.A(t)
        KA = K @ A
        return -KA - KA.T - sign * (K @ sys.BBt(t) @ K)

    try:
        K = rk4(rhs, K0, nodes)
    except IntegrationError as exc:
        raise EscapeTimeError(f"premature-escape: {exc}") from exc
    return sym(K)


def _lyapunov_leg(sys: LinearSystem, X0, nodes, sign):
    def rhs(t, X):
        AX = sys.A(t) @ X
        return AX + AX.T + sign * sys.BBt(t)

    return sym(rk4(rhs, X0, nodes))


def solve_singular(
    sys: LinearSystem,
    m0: GaussianMarginal,
    mT: GaussianMarginal,
    steps: int | None = None,
    delta: float | None = None,
    method: str = "lift",
) -> BridgeSolution:
    """Bridge for arbitrary (possibly singular) marginals.

    ``Q(t)^{-1}`` is integrated forward on ``[0, T - delta_T]`` and
    ``P(t)^{-1}`` backward on ``[delta_0, T]``, where each clearance equals
    ``delta`` at a singular endpoint and 0 otherwise.  The grid is uniform
    with doubled node density on the first/last 10 % next to a singular
    endpoint and exact nodes at the clearances.

    Inside a clearance gap ``Sigma`` is assembled from the finite Lyapunov
    factor (``Q`` near ``T``, ``P`` near 0) through a linear solve, so the
    endpoint rows reproduce the algebraic limits exactly.

    Parameters
    ----------
    method : {"lift", "riccati"}
        ``"lift"`` (default) uses the linear Hamiltonian lift, ``"riccati"``
        plain RK4 on the quadratic equations.
    """
    T = sys.T
    steps = sys.steps if steps is None else int(steps)
    if steps < 2:
        raise ValidationError("steps must be >= 2")
    delta = 1e-3 * T if delta is None else float(delta)
    if not 0 < delta < 0.5 * T:
        raise OutOfRangeError(f"delta must lie in (0, T/2), got {delta}")
    if method not in ("lift", "riccati"):
        raise ValidationError(f"unknown method {method!r}")
    for name, m in (("Sigma_0", m0), ("Sigma_T", mT)):
        if m.n != sys.n:
            raise ValidationError(f"{name} has dimension {m.n}, system has {sys.n}")

    sb = singular_boundary(sys, m0, mT)
    d0 = delta if m0.singular else 0.0
    dT = delta if mT.singular else 0.0
    grid = _solution_grid(T, steps, d0, dT)
    N, n = len(grid), sys.n
    integrate = _riccati_lift if method == "lift" else _riccati_direct

    q_mask = grid <= T - dT
    p_mask = grid >= d0
    Qinv = np.full((N, n, n), np.nan)
    Pinv = np.full((N, n, n), np.nan)
    Qinv[q_mask] = integrate(sys, sb.Q0inv, grid[q_mask], -1)
    p_nodes = grid[p_mask][::-1]
    Pinv[p_mask] = integrate(sys, sb.PTinv, p_nodes, +1)[::-1]

    Sigma = np.empty((N, n, n))
    both = q_mask & p_mask
    Sigma[both] = assemble_sigma(Pinv[both], Qinv[both])
    I = np.eye(n)
    if dT > 0:
        tail = grid >= T - dT
        Q = _lyapunov_leg(sys, sb.QT, grid[tail][::-1], -1)[::-1]
        gap = ~q_mask
        Qg = Q[-int(gap.sum()):] if gap.any() else Q[:0]
        Sigma[gap] = sym(np.linalg.solve(I + Qg @ Pinv[gap], Qg))
    if d0 > 0:
        head = grid <= d0
        P = _lyapunov_leg(sys, sb.P0, grid[head], +1)
        gap = ~p_mask
        Pg = P[: int(gap.sum())]
        Sigma[gap] = sym(np.linalg.solve(I + Pg @ Qinv[gap], Pg))
    Sigma[0], Sigma[-1] = sb.Sigma0, sb.SigmaT

    return BridgeSolution(
        system=sys,
        grid=grid,
        Qinv=Qinv,
        Pinv=Pinv,
        Sigma=Sigma,
        gain=gains(sys, grid, Qinv),
        singular_flags=(m0.singular, mT.singular),
        delta=delta,
        q_window=(0.0, T - dT),
        p_window=(d0, T),
        boundary=sb,
        method=method,
    )


def solve_bridge(sys, m0, mT, steps=None, delta=None, method="lift") -> BridgeSolution:
    """Dispatch to the nonsingular Lyapunov solver or `solve_singular`."""
    if not (m0.singular or mT.singular):
        return integrate_lyapunov_pair(sys, boundary_nonsingular(sys, m0, mT), steps=steps)
    return solve_singular(sys, m0, mT, steps=steps, delta=delta, method=method)


def _block_checks(prefix, X, Einv_block, marg: GaussianMarginal, tol):
    """Projection and fixed-point residuals of one boundary factor.

    ``X`` is ``P(0)`` (or ``Q(T)``), ``Einv_block`` the matching inverse limit
    ``Q(0)^{-1}`` (or ``P(T)^{-1}``).
    """
    names = [f"{prefix}.null", f"{prefix}.projection", f"{prefix}.fixed_point", f"{prefix}.plus_nonsingular"]
    if not marg.singular:
        return [check(nm, 0.0, tol, vacuous=True) for nm in names]
    if X is None:
        return [flag(nm, False, float("nan"), tol, reason="factor unavailable") for nm in names]
    Pn, Pr, V = marg.proj_null, marg.proj_range, marg.range_basis
    plus = V.T @ X @ V
    E = V.T @ Einv_block @ V
    Lam = marg.Lambda
    out = [
        check(names[0], np.linalg.norm(Pn @ X, 2), tol),
        check(names[1], np.linalg.norm(X - Pr @ X @ Pr, 2), tol),
        check(names[2], np.max(np.abs(Lam + Lam @ E @ plus - plus), initial=0.0), tol),
    ]
    if plus.size:
        s = np.linalg.svd(plus, compute_uv=False)
        ratio = float(s[-1] / s[0]) if s[0] > 0 else 0.0
        out.append(flag(names[3], ratio > marg.rank_tol, ratio, marg.rank_tol, rank=marg.rank))
    else:
        out.append(check(names[3], 0.0, tol, vacuous=True))
    return out


def boundary_structure(sb: SingularBoundary, m0: GaussianMarginal, mT: GaussianMarginal, tol=BLOCK_TOL):
    """Block-structure residuals of ``P(0)`` and ``Q(T)`` as a list of checks.

    ``P(0)`` must live on the range of ``Sigma_0`` and its range block must
    solve ``Lambda0 + Lambda0 E R = R`` with ``E`` the range block of
    ``Q(0)^{-1}``; the mirror statement holds for ``Q(T)``.
    """
    return _block_checks("block.P0", sb.P0, sb.Q0inv, m0, tol) + _block_checks(
        "block.QT", sb.QT, sb.PTinv, mT, tol
    )
