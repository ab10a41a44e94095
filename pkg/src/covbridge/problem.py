"""Problem files: a JSON object describing one steering instance.

Layout (every section except ``system`` and ``marginals`` is optional)::

    {
      "system": {"A": [[0, 1], [0, 0]], "B": [[0], [1]], "T": 1.0},
      "marginals": {"Sigma0": [[1, 0], [0, 0]], "SigmaT": [[0.2, 0], [0, 0]]},
      "solver": {"steps": 2000, "delta": null, "rank_tol": 1e-10, "method": "lift"},
      "simulation": {"paths": 2000, "step": 0.001, "seed": 0, "clip": null,
                     "direction": "forward", "uncontrolled": false,
                     "record_paths": 0, "thin": 10},
      "verification": {"eps_list": [0.01, ..., 1e-8], "probe_times": [0.25, 0.5, 0.75],
                       "paths": 4000, "step": 0.001, "seed": 0, "simulate": true}
    }

``A`` and ``B`` are row-major nested lists, or ``{"times": [...], "values":
[...]}`` for samples on a grid spanning ``[0, T]``.  Probe times are
absolute times in ``(0, T)``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dynamics import DEFAULT_STEPS, RANK_TOL, LinearSystem, MatrixFunction
from .errors import ParseError, ValidationError
from .psd import GaussianMarginal, make_marginal
from .simulate import SimulationConfig
from .verify import EPS_LIST, VerifyConfig


_SECTIONS = {
    "system": {"A", "B", "T"},
    "marginals": {"Sigma0", "SigmaT"},
    "solver": {"steps", "delta", "rank_tol", "method"},
    "simulation": {"paths", "step", "seed", "clip", "direction", "uncontrolled", "reverse", "record_paths", "thin"},
    "verification": {"eps_list", "probe_times", "paths", "step", "seed", "simulate", "clip"},
}


@dataclass
class SolverOptions:
    steps: int = DEFAULT_STEPS
    delta: float | None = None
    rank_tol: float = RANK_TOL
    method: str = "lift"


@dataclass
class SimulationOptions:
    paths: int = 2000
    step: float = 1e-3
    seed: int = 0
    clip: float | None = None
    direction: str = "forward"
    uncontrolled: bool = False
    reverse: bool = False
    record_paths: int = 0
    thin: int = 10


@dataclass
class VerificationOptions:
    eps_list: tuple = EPS_LIST
    probe_times: tuple | None = None
    paths: int = 4000
    step: float = 1e-3
    seed: int = 0
    clip: float = 0.05
    simulate: bool = True


@dataclass
class ProblemSpec:
    """Parsed problem file with all defaults filled in."""

    A: MatrixFunction
    B: MatrixFunction
    T: float
    Sigma0: np.ndarray
    SigmaT: np.ndarray
    solver: SolverOptions = field(default_factory=SolverOptions)
    simulation: SimulationOptions = field(default_factory=SimulationOptions)
    verification: VerificationOptions = field(default_factory=VerificationOptions)

    def system(self, check: bool = True) -> LinearSystem:
        return LinearSystem(self.A, self.B, self.T, steps=self.solver.steps, rank_tol=self.solver.rank_tol,
                            check=check)

    def marginals(self) -> tuple[GaussianMarginal, GaussianMarginal]:
        n = self.A.shape[0]
        for name, S in (("Sigma0", self.Sigma0), ("SigmaT", self.SigmaT)):
            if S.shape != (n, n):
                raise ValidationError(f"{name} must be {n}x{n}, got {S.shape[0]}x{S.shape[1]}")
        tol = self.solver.rank_tol
        return make_marginal(self.Sigma0, tol), make_marginal(self.SigmaT, tol)

    def simulation_config(self, seed: int | None = None, direction: str | None = None) -> SimulationConfig:
        s = self.simulation
        return SimulationConfig(
            paths=s.paths,
            step=s.step,
            seed=s.seed if seed is None else seed,
            horizon_clip=s.clip,
            direction=direction or s.direction,
            record_paths=s.record_paths,
            thin=s.thin,
        )

    def verify_config(self, seed: int | None = None) -> VerifyConfig:
        v = self.verification
        kw = dict(
            eps_list=tuple(v.eps_list),
            mc_paths=v.paths,
            mc_step=v.step / self.T,
            mc_seed=v.seed if seed is None else seed,
            mc_clip=v.clip,
            simulate=v.simulate,
        )
        if v.probe_times is not None:
            kw["probe_fracs"] = tuple(t / self.T for t in v.probe_times)
        return VerifyConfig(**kw)


def _matrix(obj, what) -> np.ndarray:
    try:
        M = np.array(obj, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{what}: not a numeric matrix ({exc})") from exc
    if M.ndim == 1 and M.size:
        M = M[:, None] if what.endswith("B") else M[None, :]
    if M.ndim != 2:
        raise ParseError(f"{what}: expected a 2-D nested list, got {M.ndim}-D")
    return M


def _matrix_function(obj, what) -> MatrixFunction:
    if isinstance(obj, dict):
        extra = set(obj) - {"times", "values"}
        if extra or not {"times", "values"} <= set(obj):
            raise ParseError(f"{what}: sampled form needs exactly 'times' and 'values'")
        try:
            values = np.array(obj["values"], dtype=float)
            times = np.array(obj["times"], dtype=float)
        except (TypeError, ValueError) as exc:
            raise ParseError(f"{what}: not numeric ({exc})") from exc
        return MatrixFunction.sampled(times, values)
    return MatrixFunction.constant(_matrix(obj, what))


def _section(doc, name, required=False) -> dict:
    sec = doc.get(name)
    if sec is None:
        if required:
            raise ParseError(f"missing section {name!r}")
        return {}
    if not isinstance(sec, dict):
        raise ParseError(f"section {name!r} must be an object")
    unknown = set(sec) - _SECTIONS[name]
    if unknown:
        raise ParseError(f"unknown keys in {name!r}: {sorted(unknown)}")
    return sec


def _typed(sec, key, kind, default, what):
    if key not in sec or sec[key] is None:
        return default
    v = sec[key]
    if kind is int:
        if isinstance(v, bool) or not isinstance(v, (int, float)) or int(v) != v:
            raise ParseError(f"{what}.{key} must be an integer")
        return int(v)
    if kind is float:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ParseError(f"{what}.{key} must be a number")
        return float(v)
    if kind is bool:
        if not isinstance(v, bool):
            raise ParseError(f"{what}.{key} must be true or false")
        return v
    if kind is str:
        if not isinstance(v, str):
            raise ParseError(f"{what}.{key} must be a string")
        return v
    if kind is tuple:
        if not isinstance(v, list) or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
            raise ParseError(f"{what}.{key} must be a list of numbers")
        return tuple(float(x) for x in v)
    raise TypeError(kind)


def parse_problem(doc: dict) -> ProblemSpec:
    """Build a `ProblemSpec` from a decoded JSON object.

    Raises `ParseError` for structural problems (missing or unknown keys,
    wrong types) and `ValidationError` for inconsistent values.
    """
    if not isinstance(doc, dict):
        raise ParseError("problem file must contain a JSON object")
    unknown = set(doc) - set(_SECTIONS)
    if unknown:
        raise ParseError(f"unknown top-level keys: {sorted(unknown)}")
    sy = _section(doc, "system", required=True)
    ma = _section(doc, "marginals", required=True)
    for key, sec, what in (("A", sy, "system"), ("B", sy, "system"), ("T", sy, "system"),
                           ("Sigma0", ma, "marginals"), ("SigmaT", ma, "marginals")):
        if key not in sec:
            raise ParseError(f"missing {what}.{key}")
    A = _matrix_function(sy["A"], "system.A")
    B = _matrix_function(sy["B"], "system.B")
    T = _typed(sy, "T", float, None, "system")
    if T is None:
        raise ParseError("system.T must be a number")

    so, si, ve = (_section(doc, k) for k in ("solver", "simulation", "verification"))
    solver = SolverOptions(
        steps=_typed(so, "steps", int, DEFAULT_STEPS, "solver"),
        delta=_typed(so, "delta", float, None, "solver"),
        rank_tol=_typed(so, "rank_tol", float, RANK_TOL, "solver"),
        method=_typed(so, "method", str, "lift", "solver"),
    )
    sim = SimulationOptions(
        paths=_typed(si, "paths", int, 2000, "simulation"),
        step=_typed(si, "step", float, 1e-3 * T, "simulation"),
        seed=_typed(si, "seed", int, 0, "simulation"),
        clip=_typed(si, "clip", float, None, "simulation"),
        direction=_typed(si, "direction", str, "forward", "simulation"),
        uncontrolled=_typed(si, "uncontrolled", bool, False, "simulation"),
        reverse=_typed(si, "reverse", bool, False, "simulation"),
        record_paths=_typed(si, "record_paths", int, 0, "simulation"),
        thin=_typed(si, "thin", int, 10, "simulation"),
    )
    ver = VerificationOptions(
        eps_list=_typed(ve, "eps_list", tuple, EPS_LIST, "verification"),
        probe_times=_typed(ve, "probe_times", tuple, None, "verification"),
        paths=_typed(ve, "paths", int, 4000, "verification"),
        step=_typed(ve, "step", float, 1e-3 * T, "verification"),
        seed=_typed(ve, "seed", int, 0, "verification"),
        clip=_typed(ve, "clip", float, 0.05, "verification"),
        simulate=_typed(ve, "simulate", bool, True, "verification"),
    )
    if solver.method not in ("lift", "riccati"):
        raise ValidationError(f"solver.method must be 'lift' or 'riccati', got {solver.method!r}")
    if sim.paths < 1 or ver.paths < 1:
        raise ValidationError("paths must be >= 1")
    if sim.direction not in ("forward", "reverse"):
        raise ValidationError(f"simulation.direction must be 'forward' or 'reverse', got {sim.direction!r}")
    if ver.probe_times is not None and not all(0 < t < T for t in ver.probe_times):
        raise ValidationError("verification.probe_times must lie in (0, T)")
    return ProblemSpec(
        A=A,
        B=B,
        T=T,
        Sigma0=_matrix(ma["Sigma0"], "marginals.Sigma0"),
        SigmaT=_matrix(ma["SigmaT"], "marginals.SigmaT"),
        solver=solver,
        simulation=sim,
        verification=ver,
    )


def load_problem(path) -> ProblemSpec:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc})") from exc
    return parse_problem(doc)
