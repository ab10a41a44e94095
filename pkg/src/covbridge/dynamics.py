"""Linear time-varying systems, state-transition matrices and Gramians.

A system is ``dx = A(t) x dt + B(t) dW`` on ``[0, T]``.  ``A`` and ``B`` are
either constant matrices or samples on a time grid spanning ``[0, T]`` with
linear interpolation between nodes.

Constant ``A`` uses the scaling-and-squaring matrix exponential from scipy;
sampled ``A`` uses fixed-step classical RK4.  Gramians are composite Simpson
quadratures on a uniform grid whose density matches ``LinearSystem.steps``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.integrate import simpson
from scipy.linalg import expm

from .errors import IntegrationError, OutOfRangeError, SingularGramianError, ValidationError

DEFAULT_STEPS = 2000
RANK_TOL = 1e-10
_TIME_SLACK = 1e-12


def sym(X):
    """Return the symmetric part ``(X + X')/2`` (works on stacks)."""
    X = np.asarray(X, dtype=float)
    return 0.5 * (X + np.swapaxes(X, -1, -2))


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class MatrixFunction:
    """A matrix-valued function of time, constant or linearly interpolated.

    ``values`` is either one ``(r, c)`` matrix, or a ``(K, r, c)`` stack of
    samples at the strictly increasing ``times``.
    """

    values: np.ndarray
    times: np.ndarray | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if self.times is None:
            if values.ndim != 2:
                raise ValidationError(f"constant matrix must be 2-D, got shape {values.shape}")
        else:
            times = np.asarray(self.times, dtype=float)
            if times.ndim != 1 or len(times) < 2:
                raise ValidationError("sampled matrix function needs at least two time nodes")
            if values.ndim != 3 or values.shape[0] != len(times):
                raise ValidationError(
                    f"sampled values must have shape (len(times), r, c); got {values.shape} "
                    f"for {len(times)} nodes"
                )
            if not np.all(np.diff(times) > 0):
                raise ValidationError("sample times must be strictly increasing")
            object.__setattr__(self, "times", _frozen(times))
        if not np.all(np.isfinite(values)):
            raise ValidationError("matrix entries must be finite")
        object.__setattr__(self, "values", _frozen(values))

    @classmethod
    def constant(cls, matrix):
        return cls(np.atleast_2d(np.asarray(matrix, dtype=float)))

    @classmethod
    def sampled(cls, times, values):
        return cls(values, times)

    @property
    def is_constant(self) -> bool:
        return self.times is None

    @property
    def shape(self) -> tuple[int, int]:
        return tuple(self.values.shape[-2:])

    def __call__(self, t: float) -> np.ndarray:
        if self.times is None:
            return self.values
        return self.at(np.array([t]))[0]

    def at(self, ts) -> np.ndarray:
        """Evaluate on an array of times; returns shape ``(len(ts), r, c)``."""
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        if self.times is None:
            return np.broadcast_to(self.values, (len(ts),) + self.values.shape)
        grid = self.times
        ts = np.clip(ts, grid[0], grid[-1])
        idx = np.clip(np.searchsorted(grid, ts, side="right") - 1, 0, len(grid) - 2)
        w = (ts - grid[idx]) / (grid[idx + 1] - grid[idx])
        w = w[:, None, None]
        return (1.0 - w) * self.values[idx] + w * self.values[idx + 1]


def _as_matrix_function(obj) -> MatrixFunction:
    if isinstance(obj, MatrixFunction):
        return obj
    return MatrixFunction.constant(obj)


@dataclass(frozen=True, eq=False)
class LinearSystem:
    """``dx = A(t) x dt + B(t) (u dt + dW)`` on the horizon ``[0, T]``.

    Construction validates shapes and, unless ``check=False``, probes
    controllability by testing that ``M(T,0)``, ``M(T/2,0)`` and ``M(T,T/2)``
    are nonsingular.  This is a probe on three intervals, not a proof that
    the Gramian is nonsingular on every subinterval.
    """

    A: MatrixFunction
    B: MatrixFunction
    T: float
    steps: int = DEFAULT_STEPS
    rank_tol: float = RANK_TOL
    check: bool = field(default=True, repr=False)

    def __post_init__(self):
        A = _as_matrix_function(self.A)
        B = _as_matrix_function(self.B)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        T = float(self.T)
        object.__setattr__(self, "T", T)
        if not (T > 0 and math.isfinite(T)):
            raise ValidationError(f"horizon T must be positive, got {self.T}")
        n, n2 = A.shape
        if n != n2 or n < 1:
            raise ValidationError(f"A must be square, got shape {A.shape}")
        if B.shape[0] != n or B.shape[1] < 1:
            raise ValidationError(f"B must be {n}xm with m >= 1, got shape {B.shape}")
        for name, f in (("A", A), ("B", B)):
            if not f.is_constant:
                t = f.times
                if abs(t[0]) > 1e-9 * T or abs(t[-1] - T) > 1e-9 * T:
                    raise ValidationError(f"sample grid of {name} must span [0, T] exactly")
        if int(self.steps) < 2:
            raise ValidationError("steps must be at least 2")
        object.__setattr__(self, "steps", int(self.steps))
        if self.check:
            controllability_probe(self)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def time_invariant(self) -> bool:
        return self.A.is_constant and self.B.is_constant

    def BBt(self, t: float) -> np.ndarray:
        B = self.B(t)
        return B @ B.T

    # Horizon quantities used by every boundary formula; computed once.
    @cached_property
    def phi_T0(self) -> np.ndarray:
        return state_transition(self, self.T, 0.0)

    @cached_property
    def phi_0T(self) -> np.ndarray:
        return state_transition(self, 0.0, self.T)

    @cached_property
    def gram_M(self) -> np.ndarray:
        return reachability_gramian(self, self.T, 0.0)

    @cached_property
    def gram_N(self) -> np.ndarray:
        return controllability_gramian(self, self.T, 0.0)

    @cached_property
    def gram_M_inv(self) -> np.ndarray:
        return sym(np.linalg.inv(self.gram_M))


def _check_time(sys: LinearSystem, *ts):
    for t in ts:
        if not (-_TIME_SLACK * sys.T <= t <= sys.T * (1 + _TIME_SLACK)):
            raise OutOfRangeError(f"time {t} outside [0, {sys.T}]")


def rk4(rhs, y0, ts):
    """Classical fixed-step RK4 through the nodes ``ts`` (either direction).

    Returns the solution at every node, shape ``(len(ts),) + y0.shape``.
    """
    ts = np.asarray(ts, dtype=float)
    y = np.array(y0, dtype=float)
    out = np.empty((len(ts),) + y.shape)
    out[0] = y
    for k in range(len(ts) - 1):
        t, h = ts[k], ts[k + 1] - ts[k]
        k1 = rhs(t, y)
        k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1)
        k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2)
        k4 = rhs(t + h, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(y)):
            raise IntegrationError(f"non-finite state at t={ts[k + 1]:.6g}")
        out[k + 1] = y
    return out


def _n_steps(sys: LinearSystem, span: float) -> int:
    return max(1, math.ceil(sys.steps * abs(span) / sys.T - 1e-9))


def state_transition(sys: LinearSystem, t: float, s: float) -> np.ndarray:
    """State-transition matrix ``Phi(t, s)`` of ``A(.)``.

    Solves ``dPhi/dt = A(t) Phi`` with ``Phi(s, s) = I``.  Constant ``A``
    reduces to ``expm(A (t - s))``.
    """
    _check_time(sys, t, s)
    n = sys.n
    if t == s:
        return np.eye(n)
    if sys.A.is_constant:
        return expm(sys.A.values * (t - s))
    ts = np.linspace(s, t, _n_steps(sys, t - s) + 1)
    A = sys.A
    return rk4(lambda tau, X: A(tau) @ X, np.eye(n), ts)[-1]


def transition_family(sys: LinearSystem, anchor: float, taus) -> np.ndarray:
    """``Phi(anchor, tau_j)`` for every node of the increasing grid ``taus``.

    ``anchor`` must be the first or last node.  For sampled ``A`` this
    integrates ``d/dtau Phi(anchor, tau) = -Phi(anchor, tau) A(tau)`` outward
    from the anchor along the grid.
    """
    taus = np.asarray(taus, dtype=float)
    n = sys.n
    if sys.A.is_constant:
        return expm(sys.A.values[None] * (anchor - taus)[:, None, None])
    if anchor == taus[0]:
        order = taus
    elif anchor == taus[-1]:
        order = taus[::-1]
    else:
        raise ValueError("anchor must be an endpoint of the grid")
    A = sys.A
    X = rk4(lambda tau, X: -X @ A(tau), np.eye(n), order)
    return X if anchor == taus[0] else X[::-1]


def _gramian(sys: LinearSystem, t1: float, t0: float, anchor: float, label: str) -> np.ndarray:
    _check_time(sys, t0, t1)
    if not t1 > t0:
        raise OutOfRangeError(f"{label}({t1}, {t0}): need t0 < t1")
    k = max(2, math.ceil(sys.steps * (t1 - t0) / sys.T - 1e-9))
    k += k % 2
    taus = np.linspace(t0, t1, k + 1)
    F = transition_family(sys, anchor, taus) @ sys.B.at(taus)
    G = sym(simpson(F @ np.swapaxes(F, 1, 2), x=taus, axis=0))
    w = np.linalg.eigvalsh(G)
    if w[-1] <= 0 or w[0] <= sys.rank_tol * w[-1]:
        raise SingularGramianError(
            f"singular-gramian: {label}({t1:g}, {t0:g}) has eigenvalue ratio "
            f"{(w[0] / w[-1]) if w[-1] > 0 else 0.0:.3e} <= {sys.rank_tol:g}"
        )
    return G


def reachability_gramian(sys: LinearSystem, t1: float, t0: float) -> np.ndarray:
    """``M(t1, t0) = int_{t0}^{t1} Phi(t1,tau) B B' Phi(t1,tau)' dtau``."""
    return _gramian(sys, t1, t0, t1, "M")


def controllability_gramian(sys: LinearSystem, t1: float, t0: float) -> np.ndarray:
    """``N(t1, t0) = int_{t0}^{t1} Phi(t0,tau) B B' Phi(t0,tau)' dtau``."""
    return _gramian(sys, t1, t0, t0, "N")


def controllability_probe(sys: LinearSystem) -> dict:
    """Smallest/largest eigenvalue ratio of ``M`` on the three probe intervals.

    Raises `SingularGramianError` on the first singular interval.
    """
    T = sys.T
    ratios = {}
    for t1, t0 in ((T, 0.0), (0.5 * T, 0.0), (T, 0.5 * T)):
        G = reachability_gramian(sys, t1, t0)
        w = np.linalg.eigvalsh(G)
        ratios[(t1, t0)] = float(w[0] / w[-1])
    return ratios
