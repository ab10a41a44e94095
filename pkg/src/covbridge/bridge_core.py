"""Covariance bridge between two nonsingular Gaussian marginals.

The bridge is described by two Lyapunov differential equations

    dP/dt = A P + P A' + B B'
    dQ/dt = A Q + Q A' - B B'

whose boundary values are coupled through

    Sigma_0^{-1} = P(0)^{-1} + Q(0)^{-1},   Sigma_T^{-1} = P(T)^{-1} + Q(T)^{-1}.

`boundary_nonsingular` evaluates the closed forms for ``Q(0)`` and its dual
``P(T)``; `integrate_lyapunov_pair` propagates ``(P, Q)`` and assembles the
state covariance ``Sigma = (P^{-1} + Q^{-1})^{-1}`` and the feedback gain
``K = -B' Q^{-1}``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import LinearSystem, rk4, sym
from .errors import (
    EscapeTimeError,
    IntegrationError,
    OutOfRangeError,
    SingularCovarianceError,
    ValidationError,
)
from .psd import GaussianMarginal, check_invertible, psd_sqrt


@dataclass(frozen=True, eq=False)
class BoundaryPair:
    """Boundary values ``P(0), Q(0), P(T), Q(T)`` of the coupled Lyapunov pair.

    ``Q0inv`` and ``PTinv`` are evaluated directly from the closed forms
    rather than by inverting ``Q0``/``PT``.
    """

    Q0: np.ndarray
    P0: np.ndarray
    QT: np.ndarray
    PT: np.ndarray
    Q0inv: np.ndarray
    PTinv: np.ndarray

    def residuals(self, m0: GaussianMarginal, mT: GaussianMarginal) -> tuple[float, float]:
        """Relative residuals of the two coupling identities (2-norm)."""
        r = []
        for S_inv, P, Q in ((m0.inv, self.P0, self.Q0), (mT.inv, self.PT, self.QT)):
            lhs = np.linalg.inv(P) + np.linalg.inv(Q)
            r.append(np.linalg.norm(S_inv - lhs, 2) / np.linalg.norm(S_inv, 2))
        return r[0], r[1]


def hat_target(sys: LinearSystem, Sigma_T) -> np.ndarray:
    """``Phi(T,0)' M^{-1} Sigma_T M^{-1} Phi(T,0)`` (target pulled back to t=0)."""
    L = sys.gram_M_inv @ sys.phi_T0
    return sym(L.T @ Sigma_T @ L)


def hat_initial(sys: LinearSystem, Sigma_0) -> np.ndarray:
    """``M^{-1} Phi(T,0) Sigma_0 Phi(T,0)' M^{-1}`` (initial pushed to t=T)."""
    L = sys.gram_M_inv @ sys.phi_T0
    return sym(L @ Sigma_0 @ L.T)


def pushed_correction(marg: GaussianMarginal, hat) -> np.ndarray:
    """``g (I/2 + (I/4 + g S g)^{1/2})^{-1} g`` with ``g = hat^{1/2}``.

    ``lead`` minus this matrix is the boundary inverse.  The expression is
    continuous in ``S`` and needs no inverse of ``S^{1/2}``, so it also
    evaluates the singular limit.
    """
    I = np.eye(marg.n)
    g = psd_sqrt(hat)
    return sym(g @ np.linalg.solve(0.5 * I + psd_sqrt(0.25 * I + sym(g @ marg.Sigma @ g)), g))


def quadratic_residual(D, marg: GaussianMarginal, hat) -> float:
    """``||D + D S D - hat||``: every exact evaluation of the correction solves this."""
    return float(np.linalg.norm(D + D @ marg.Sigma @ D - hat, 2))


def most_accurate(candidates, marg: GaussianMarginal, hat) -> np.ndarray:
    return min(candidates, key=lambda D: quadratic_residual(D, marg, hat))


def _closed_form(marg: GaussianMarginal, lead, hat):
    """``S^{1/2} (I/2 + S^{1/2} lead S^{1/2} - (I/4 + S^{1/2} hat S^{1/2})^{1/2})^{-1} S^{1/2}``.

    Returns the matrix and its inverse.  The inverse has two exact
    evaluations, ``S^{-1/2} inner S^{-1/2}`` (inaccurate for nearly singular
    ``S``) and `pushed_correction` (inaccurate when ``hat`` dwarfs ``lead``);
    the one that better solves the quadratic is kept.
    """
    I = np.eye(marg.n)
    h = marg.sqrt
    root = psd_sqrt(0.25 * I + sym(h @ hat @ h))
    inner = sym(0.5 * I + sym(h @ lead @ h) - root)
    check_invertible(inner, "inner boundary matrix")
    F = sym(h @ np.linalg.solve(inner, h))
    direct = sym(lead - marg.pinv_sqrt @ inner @ marg.pinv_sqrt)
    D = most_accurate((pushed_correction(marg, hat), direct), marg, hat)
    return F, sym(lead - D)


def boundary_nonsingular(sys: LinearSystem, m0: GaussianMarginal, mT: GaussianMarginal) -> BoundaryPair:
    """Closed-form boundary values for nonsingular ``Sigma_0``, ``Sigma_T``.

    Raises `SingularCovarianceError` when either marginal is rank deficient
    (use `covbridge.bridge_singular.solve_singular` instead).
    """
    for name, m in (("Sigma_0", m0), ("Sigma_T", mT)):
        if m.n != sys.n:
            raise ValidationError(f"{name} has dimension {m.n}, system has {sys.n}")
        if m.singular:
            raise SingularCovarianceError(
                f"singular-covariance: {name} has rank {m.rank} < {m.n}; use the singular solver"
            )
    Phi, Minv = sys.phi_T0, sys.gram_M_inv
    Q0, Q0inv = _closed_form(m0, sym(Phi.T @ Minv @ Phi), hat_target(sys, mT.Sigma))
    PT, PTinv = _closed_form(mT, Minv, hat_initial(sys, m0.Sigma))

    D0 = sym(m0.inv - Q0inv)
    check_invertible(D0, "Sigma_0^{-1} - Q(0)^{-1}")
    DT = sym(mT.inv - PTinv)
    check_invertible(DT, "Sigma_T^{-1} - P(T)^{-1}")
    return BoundaryPair(
        Q0=Q0,
        P0=sym(np.linalg.inv(D0)),
        QT=sym(np.linalg.inv(DT)),
        PT=PT,
        Q0inv=Q0inv,
        PTinv=PTinv,
    )


@dataclass(frozen=True, eq=False)
class BridgeSolution:
    """Bridge quantities sampled on a time grid.

    ``Qinv`` is meaningful on ``q_window`` and ``Pinv`` on ``p_window``;
    entries outside their window are NaN (the inverse blows up at a singular
    endpoint).  ``Sigma`` and ``gain`` cover every node except that ``gain``
    shares the NaN gap of ``Qinv``.  Values between nodes are linear
    interpolations, so invariants are asserted at nodes only.
    """

    system: LinearSystem
    grid: np.ndarray
    Qinv: np.ndarray
    Pinv: np.ndarray
    Sigma: np.ndarray
    gain: np.ndarray
    singular_flags: tuple[bool, bool]
    delta: float
    q_window: tuple[float, float]
    p_window: tuple[float, float]
    boundary: object
    method: str = "lyapunov"

    @property
    def T(self) -> float:
        return self.system.T

    def index(self, t: float) -> int:
        """Index of the grid node nearest to ``t``."""
        return int(np.argmin(np.abs(self.grid - t)))

    def _interp(self, values, t, window, what):
        lo, hi = window
        slack = 1e-12 * self.T
        if not (lo - slack <= t <= hi + slack):
            raise OutOfRangeError(f"{what} requested at t={t:g}, valid on [{lo:g}, {hi:g}]")
        g = self.grid
        j = int(np.clip(np.searchsorted(g, t, side="right") - 1, 0, len(g) - 2))
        if abs(t - g[j]) <= slack:
            return values[j]
        if abs(t - g[j + 1]) <= slack:
            return values[j + 1]
        w = (t - g[j]) / (g[j + 1] - g[j])
        return (1.0 - w) * values[j] + w * values[j + 1]

    def on_grid(self, name: str, ts) -> np.ndarray:
        """Vectorized linear interpolation of ``Qinv``, ``Pinv``, ``Sigma`` or ``gain``."""
        values = getattr(self, name)
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        g = self.grid
        j = np.clip(np.searchsorted(g, ts, side="right") - 1, 0, len(g) - 2)
        w = ((ts - g[j]) / (g[j + 1] - g[j]))[:, None, None]
        exact = np.abs(ts - g[j + 1]) <= 1e-12 * self.T
        out = (1.0 - w) * values[j] + w * values[j + 1]
        out[exact] = values[j + 1][exact]
        exact0 = np.abs(ts - g[j]) <= 1e-12 * self.T
        out[exact0] = values[j][exact0]
        return out

    def qinv_at(self, t: float) -> np.ndarray:
        return self._interp(self.Qinv, t, self.q_window, "Q^{-1}")

    def pinv_at(self, t: float) -> np.ndarray:
        return self._interp(self.Pinv, t, self.p_window, "P^{-1}")

    def sigma_at(self, t: float) -> np.ndarray:
        return self._interp(self.Sigma, t, (0.0, self.T), "Sigma")

    @property
    def sigma0(self) -> np.ndarray:
        return self.Sigma[0]

    @property
    def sigmaT(self) -> np.ndarray:
        return self.Sigma[-1]


def feedback_gain(sol: BridgeSolution, t: float) -> np.ndarray:
    """``K(t) = -B(t)' Q(t)^{-1}``, with ``Q^{-1}`` interpolated between nodes."""
    return -sol.system.B(t).T @ sol.qinv_at(t)


def _lyapunov_rhs(sys: LinearSystem):
    def rhs(t, Y):
        A = sys.A(t)
        BB = sys.BBt(t)
        AP = A @ Y[0]
        AQ = A @ Y[1]
        return np.stack([AP + AP.T + BB, AQ + AQ.T - BB])

    return rhs


def _inverses(stack, grid, what, rank_tol, interior_only=True):
    s = np.linalg.svd(stack, compute_uv=False)
    bad = s[:, -1] <= rank_tol * s[:, 0]
    if interior_only:
        bad[0] = bad[-1] = False
    if np.any(bad):
        k = int(np.argmax(bad))
        raise EscapeTimeError(
            f"escape-time: {what} loses invertibility at t={grid[k]:.6g}", time=float(grid[k])
        )
    return sym(np.linalg.inv(stack))


def assemble_sigma(Pinv, Qinv):
    return sym(np.linalg.inv(Pinv + Qinv))


def gains(sys: LinearSystem, grid, Qinv):
    Bt = np.swapaxes(sys.B.at(grid), 1, 2)
    return -Bt @ Qinv


def integrate_lyapunov_pair(
    sys: LinearSystem, bp: BoundaryPair, steps: int | None = None, direction: str = "forward"
) -> BridgeSolution:
    """Integrate ``(P, Q)`` with fixed-step RK4 on a uniform grid over ``[0, T]``.

    ``direction="forward"`` starts from ``(P(0), Q(0))``; ``"backward"``
    starts from the dual final values ``(P(T), Q(T))``.
    """
    steps = sys.steps if steps is None else int(steps)
    if steps < 2:
        raise ValueError("steps must be >= 2")
    grid = np.linspace(0.0, sys.T, steps + 1)
    rhs = _lyapunov_rhs(sys)
    try:
        if direction == "forward":
            PQ = rk4(rhs, np.stack([bp.P0, bp.Q0]), grid)
        elif direction == "backward":
            PQ = rk4(rhs, np.stack([bp.PT, bp.QT]), grid[::-1])[::-1]
        else:
            raise ValueError(f"direction must be 'forward' or 'backward', got {direction!r}")
    except IntegrationError as exc:
        raise EscapeTimeError(f"escape-time: {exc}") from exc
    P, Q = sym(PQ[:, 0]), sym(PQ[:, 1])
    Pinv = _inverses(P, grid, "P(t)", sys.rank_tol, interior_only=False)
    Qinv = _inverses(Q, grid, "Q(t)", sys.rank_tol, interior_only=False)
    return BridgeSolution(
        system=sys,
        grid=grid,
        Qinv=Qinv,
        Pinv=Pinv,
        Sigma=assemble_sigma(Pinv, Qinv),
        gain=gains(sys, grid, Qinv),
        singular_flags=(False, False),
        delta=0.0,
        q_window=(0.0, sys.T),
        p_window=(0.0, sys.T),
        boundary=bp,
        method="lyapunov",
    )


def lyapunov_values(sys: LinearSystem, bp: BoundaryPair, steps=None, direction="forward"):
    """Raw ``P(t)``, ``Q(t)`` stacks (no inversion); used by the duality checks."""
    steps = sys.steps if steps is None else int(steps)
    grid = np.linspace(0.0, sys.T, steps + 1)
    rhs = _lyapunov_rhs(sys)
    if direction == "forward":
        PQ = rk4(rhs, np.stack([bp.P0, bp.Q0]), grid)
    else:
        PQ = rk4(rhs, np.stack([bp.PT, bp.QT]), grid[::-1])[::-1]
    return grid, sym(PQ[:, 0]), sym(PQ[:, 1])
