"""Named residual checks and the report that collects them."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

PASS, FAIL, SKIP = "pass", "fail", "skip"


@dataclass
class Check:
    name: str
    residual: float
    tolerance: float
    status: str
    metadata: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.status == PASS

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "residual": _json_float(self.residual),
            "tolerance": _json_float(self.tolerance),
            "status": self.status,
            "metadata": jsonable(self.metadata),
        }


def check(name, residual, tolerance, **metadata) -> Check:
    """Pass iff ``residual <= tolerance`` (NaN residuals fail)."""
    residual = float(residual)
    ok = math.isfinite(residual) and residual <= tolerance
    return Check(name, residual, float(tolerance), PASS if ok else FAIL, metadata)


def flag(name, ok: bool, residual=0.0, tolerance=0.0, **metadata) -> Check:
    return Check(name, float(residual), float(tolerance), PASS if ok else FAIL, metadata)


def skipped(name, reason: str) -> Check:
    return Check(name, math.nan, math.nan, SKIP, {"reason": reason})


@dataclass
class VerificationReport:
    checks: list[Check] = field(default_factory=list)

    def add(self, *items: Check) -> None:
        names = {c.name for c in self.checks}
        for c in items:
            if c.name in names:
                raise ValueError(f"duplicate check name {c.name!r}")
            names.add(c.name)
            self.checks.append(c)

    def extend(self, other: "VerificationReport | list[Check]") -> None:
        self.add(*(other.checks if isinstance(other, VerificationReport) else other))

    def __getitem__(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def __contains__(self, name: str) -> bool:
        return any(c.name == name for c in self.checks)

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.checks]

    @property
    def ok(self) -> bool:
        return all(c.status != FAIL for c in self.checks)

    @property
    def failures(self) -> list[Check]:
        return [c for c in self.checks if c.status == FAIL]

    def sorted(self) -> "VerificationReport":
        return VerificationReport(sorted(self.checks, key=lambda c: c.name))

    def to_dict(self) -> dict:
        return {"ok": self.ok, "checks": [c.to_dict() for c in self.checks]}

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), indent=2, allow_nan=False, **kw)

    def summary_lines(self) -> list[str]:
        return [
            f"[{c.status.upper():4}] {c.name}: residual={c.residual:.3e} tol={c.tolerance:.1e}"
            for c in self.checks
        ]


def _json_float(x):
    x = float(x)
    return x if math.isfinite(x) else None


def jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return _json_float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj
