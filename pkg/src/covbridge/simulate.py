"""Euler-Maruyama ensembles for the uncontrolled, controlled and reversed dynamics.

Every path owns a Philox stream keyed by ``(seed, path_index)``.  A path
draws its initial standard-normal vector first and then all of its Brownian
increments, so results do not depend on how paths are batched.  Paths are
processed in fixed blocks of `BLOCK` and per-node sums are reduced in path
order, which makes ensembles bit-reproducible for a given seed and config.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .bridge_core import BridgeSolution
from .dynamics import LinearSystem
from .errors import ClipRequiredError, ConfigError
from .psd import GaussianMarginal, psd_sqrt

BLOCK = 512
_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class SimulationConfig:
    """Monte-Carlo settings.

    ``horizon_clip=None`` picks ``0.05 T`` when the run heads into a singular
    endpoint and 0 otherwise.  ``noise_scale`` multiplies the diffusion term
    only (0 gives the deterministic closed-loop ODE).  ``record_paths``
    sample paths are stored at every ``thin``-th node.  ``memory_budget``
    caps ``paths * n * steps``.
    """

    paths: int = 10_000
    step: float = 1e-3
    seed: int = 0
    horizon_clip: float | None = None
    direction: str = "forward"
    record_paths: int = 0
    thin: int = 1
    noise_scale: float = 1.0
    memory_budget: float = 2e9

    def __post_init__(self):
        if int(self.paths) != self.paths or self.paths < 1:
            raise ConfigError(f"paths must be a positive integer, got {self.paths}")
        if not (self.step > 0 and math.isfinite(self.step)):
            raise ConfigError(f"step must be positive, got {self.step}")
        if self.horizon_clip is not None and not self.horizon_clip >= 0:
            raise ConfigError(f"horizon_clip must be >= 0, got {self.horizon_clip}")
        if self.direction not in ("forward", "reverse"):
            raise ConfigError(f"direction must be 'forward' or 'reverse', got {self.direction!r}")
        if self.record_paths < 0 or self.thin < 1:
            raise ConfigError("record_paths must be >= 0 and thin >= 1")
        if self.noise_scale < 0:
            raise ConfigError("noise_scale must be >= 0")

    def resolve(self, T: float, n: int, singular_end: bool) -> tuple[float, np.ndarray]:
        """Clip and uniform time grid (from the run's start) for a horizon ``T``."""
        clip = (0.05 * T if singular_end else 0.0) if self.horizon_clip is None else float(self.horizon_clip)
        if singular_end and clip == 0:
            raise ClipRequiredError(
                "clip-required: the feedback diverges at a singular endpoint; set horizon_clip > 0"
            )
        span = T - clip
        if not span > 0:
            raise ConfigError(f"horizon_clip {clip} leaves no time to simulate")
        if self.step > span / 10 * (1 + 1e-12):
            raise ConfigError(f"step {self.step} exceeds (T - clip)/10 = {span / 10}")
        k = max(1, math.ceil(span / self.step - 1e-9))
        if self.paths * n * k > self.memory_budget:
            raise ConfigError(f"paths*n*steps = {self.paths * n * k:.3g} exceeds memory budget")
        return clip, np.linspace(0.0, span, k + 1)


@dataclass(frozen=True, eq=False)
class SimulationEnsemble:
    """Per-node empirical moments of a simulated ensemble (increasing ``times``).

    ``cov_se`` is the entrywise standard error of ``emp_cov``; ``energy`` is
    each path's accumulated control energy at the last node and
    ``energy_mean``/``energy_se`` its ensemble mean and standard error at
    every node.  ``samples`` holds the recorded paths at ``sample_times``.
    """

    times: np.ndarray
    emp_mean: np.ndarray
    emp_cov: np.ndarray
    mean_se: np.ndarray
    cov_se: np.ndarray
    energy: np.ndarray
    energy_mean: np.ndarray
    energy_se: np.ndarray
    sample_times: np.ndarray
    samples: np.ndarray
    paths: int
    direction: str
    clip: float

    def index(self, t: float) -> int:
        return int(np.argmin(np.abs(self.times - t)))

    def cov_at(self, t: float):
        """``(emp_cov, cov_se)`` at the node nearest ``t``."""
        j = self.index(t)
        return self.emp_cov[j], self.cov_se[j]


class EnergyPoint(NamedTuple):
    clip_time: float
    mean_energy: float
    std_error: float


def path_rng(seed: int, index: int) -> np.random.Generator:
    """Independent Philox stream for one path."""
    return np.random.Generator(np.random.Philox(key=((int(seed) & _MASK64) << 64) | int(index)))


def _draws(seed, start, stop, n, m, k):
    z0 = np.empty((stop - start, n))
    dW = np.empty((stop - start, k, m))
    for r, i in enumerate(range(start, stop)):
        g = path_rng(seed, i)
        z0[r] = g.standard_normal(n)
        dW[r] = g.standard_normal((k, m))
    return z0, dW


def _run(drift, diff, times, S0_sqrt, cfg: SimulationConfig, gain=None, sign=1.0):
    """Shared Euler-Maruyama driver along ``times`` (possibly decreasing).

    ``drift[k]``/``diff[k]`` are the matrices at ``times[k]``; the update is
    ``x + sign * drift[k] x |h| + diff[k] sqrt|h| z``.  ``gain[k]`` (if given)
    defines the control ``u = gain[k] x`` for the energy integral.
    """
    N = len(times)
    n, m = diff.shape[1], diff.shape[2]
    k = N - 1
    p = cfg.paths
    h = np.abs(np.diff(times))
    sq = np.sqrt(h) * cfg.noise_scale
    s1 = np.zeros((N, n))
    s2 = np.zeros((N, n, n))
    s4 = np.zeros((N, n, n))
    e1 = np.zeros(N)
    e2 = np.zeros(N)
    keep = np.arange(0, N, cfg.thin)
    if keep[-1] != N - 1:
        keep = np.append(keep, N - 1)
    rec = min(cfg.record_paths, p)
    samples = np.empty((len(keep), rec, n))
    energy_final = np.zeros(p)
    slot = {int(j): r for r, j in enumerate(keep)}

    def accumulate(j, x, e):
        s1[j] += x.sum(axis=0)
        xx = x[:, :, None] * x[:, None, :]
        s2[j] += xx.sum(axis=0)
        s4[j] += (xx * xx).sum(axis=0)
        e1[j] += e.sum()
        e2[j] += (e * e).sum()

    for start in range(0, p, BLOCK):
        stop = min(start + BLOCK, p)
        z0, dW = _draws(cfg.seed, start, stop, n, m, k)
        x = z0 @ S0_sqrt.T
        e = np.zeros(stop - start)
        for j in range(N):
            accumulate(j, x, e)
            if j in slot and start < rec:
                r = min(rec, stop) - start
                samples[slot[j], start : start + r] = x[:r]
            if j == k:
                break
            if gain is not None:
                u = x @ gain[j].T
                e = e + (u * u).sum(axis=1) * h[j]
            x = x + sign * h[j] * (x @ drift[j].T) + sq[j] * (dW[:, j] @ diff[j].T)
        energy_final[start:stop] = e

    mean = s1 / p
    ddof = p - 1 if p > 1 else p
    cov = (s2 - p * mean[:, :, None] * mean[:, None, :]) / ddof
    cov = 0.5 * (cov + np.swapaxes(cov, 1, 2))
    var_x = np.einsum("kii->ki", cov)
    mean_se = np.sqrt(np.maximum(var_x, 0.0) / p)
    m2 = s2 / p
    cov_se = np.sqrt(np.maximum(s4 / p - m2 * m2, 0.0) / ddof)
    em = e1 / p
    ese = np.sqrt(np.maximum(e2 / p - em * em, 0.0) / ddof)
    return mean, cov, mean_se, cov_se, energy_final, em, ese, keep, samples


def _ensemble(times, res, cfg, clip, reverse=False):
    mean, cov, mean_se, cov_se, energy, em, ese, keep, samples = res
    st = times[keep]
    if reverse:
        times = times[::-1]
        mean, cov, mean_se, cov_se = mean[::-1], cov[::-1], mean_se[::-1], cov_se[::-1]
        em, ese = em[::-1], ese[::-1]
        st, samples = st[::-1], samples[::-1]
    return SimulationEnsemble(
        times=times,
        emp_mean=mean,
        emp_cov=cov,
        mean_se=mean_se,
        cov_se=cov_se,
        energy=energy,
        energy_mean=em,
        energy_se=ese,
        sample_times=st,
        samples=samples,
        paths=cfg.paths,
        direction=cfg.direction,
        clip=clip,
    )


def simulate_controlled(sys: LinearSystem, sol: BridgeSolution, cfg: SimulationConfig) -> SimulationEnsemble:
    """Closed-loop paths ``d zeta = (A - B B' Q^{-1}) zeta dt + B dW`` from ``Sigma_0``.

    The initial state is ``Sigma_0^{1/2} z``, which is valid for singular
    ``Sigma_0``.  The run stops at ``T - clip``.
    """
    if cfg.direction != "forward":
        raise ConfigError("simulate_controlled needs direction='forward'")
    clip, times = cfg.resolve(sys.T, sys.n, sol.singular_flags[1])
    if times[-1] > sol.q_window[1] + 1e-12 * sys.T:
        raise ClipRequiredError(
            f"clip-required: the solution's feedback is valid up to t={sol.q_window[1]:g}, "
            f"simulation needs t={times[-1]:g}"
        )
    A, B = sys.A.at(times), sys.B.at(times)
    K = sol.on_grid("gain", times)
    drift = A + B @ K
    return _ensemble(times, _run(drift, B, times, psd_sqrt(sol.Sigma[0]), cfg, gain=K), cfg, clip)


def simulate_uncontrolled(sys: LinearSystem, m0: GaussianMarginal, cfg: SimulationConfig) -> SimulationEnsemble:
    """Open-loop paths ``d zeta = A zeta dt + B dW`` from ``Sigma_0``; energy is 0."""
    clip, times = cfg.resolve(sys.T, sys.n, False)
    A, B = sys.A.at(times), sys.B.at(times)
    return _ensemble(times, _run(A, B, times, m0.sqrt, cfg), cfg, clip)


def simulate_reverse(
    sys: LinearSystem, sol: BridgeSolution, mT: GaussianMarginal, cfg: SimulationConfig
) -> SimulationEnsemble:
    """Reverse-time paths from ``Sigma_T`` down to ``clip``.

    The step from ``t`` to ``t - h`` is
    ``zeta - (A + B B' P^{-1}) zeta h + B sqrt(h) z``.  The returned
    ensemble is ordered by increasing time; ``energy`` is not defined and is
    reported as zero.
    """
    if cfg.direction != "reverse":
        raise ConfigError("simulate_reverse needs direction='reverse'")
    clip, rel = cfg.resolve(sys.T, sys.n, sol.singular_flags[0])
    times = sys.T - rel
    if times[-1] < sol.p_window[0] - 1e-12 * sys.T:
        raise ClipRequiredError(
            f"clip-required: P^{{-1}} is valid from t={sol.p_window[0]:g}, simulation needs t={times[-1]:g}"
        )
    A, B = sys.A.at(times), sys.B.at(times)
    drift = A + B @ np.swapaxes(B, 1, 2) @ sol.on_grid("Pinv", times)
    res = _run(drift, B, times, mT.sqrt, cfg, sign=-1.0)
    return _ensemble(times, res, cfg, clip, reverse=True)


def energy_profile(ens: SimulationEnsemble, clip_times=None) -> list[EnergyPoint]:
    """Mean accumulated control energy up to each clip time.

    Defaults to every node.  Values between nodes are linearly interpolated.
    """
    t = ens.times
    ts = t if clip_times is None else np.asarray(clip_times, dtype=float)
    if np.any(ts < t[0] - 1e-12) or np.any(ts > t[-1] + 1e-12):
        raise ConfigError(f"clip times must lie in [{t[0]:g}, {t[-1]:g}]")
    mean = np.interp(ts, t, ens.energy_mean)
    se = np.interp(ts, t, ens.energy_se)
    return [EnergyPoint(float(a), float(b), float(c)) for a, b, c in zip(ts, mean, se)]
