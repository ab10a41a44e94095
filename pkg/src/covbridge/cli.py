"""Command-line front end: ``covbridge {solve,simulate,verify,sweep}``.

Exit status: 0 success, 2 parse error, 3 validation error (including an
uncontrollable system), 4 solver error, 5 verification failed.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

from .bridge_singular import solve_bridge
from .errors import BridgeError, ParseError, SingularGramianError, ValidationError
from .problem import ProblemSpec, load_problem
from .report import VerificationReport, jsonable
from .simulate import simulate_controlled, simulate_reverse, simulate_uncontrolled
from .verify import epsilon_errors, run_full_verification, sweep_epsilon

EXIT_OK, EXIT_PARSE, EXIT_VALIDATION, EXIT_SOLVER, EXIT_VERIFY = 0, 2, 3, 4, 5


def fmt(x) -> str:
    """17 significant digits: enough for an exact float round trip."""
    return format(float(x), ".17g")


def _labels(prefix, r, c):
    return [f"{prefix}_{i}_{j}" for i in range(r) for j in range(c)]


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else fmt(v) for v in row])


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(jsonable(obj), indent=2, allow_nan=False) + "\n")


def _say(args, *lines):
    if not args.quiet:
        for line in lines:
            print(line)


# ------------------------------------------------------------------ commands


def _solve(spec: ProblemSpec):
    sys_ = spec.system()
    m0, mT = spec.marginals()
    sol = solve_bridge(sys_, m0, mT, steps=spec.solver.steps, delta=spec.solver.delta, method=spec.solver.method)
    return sys_, m0, mT, sol


def write_solution(out: Path, sol, spec: ProblemSpec) -> None:
    n, m = sol.Sigma.shape[1], sol.gain.shape[1]
    header = ["t"] + _labels("Sigma", n, n) + _labels("Qinv", n, n) + _labels("Pinv", n, n) + _labels("K", m, n)
    rows = (
        [t, *S.ravel(), *Qi.ravel(), *Pi.ravel(), *K.ravel()]
        for t, S, Qi, Pi, K in zip(sol.grid, sol.Sigma, sol.Qinv, sol.Pinv, sol.gain)
    )
    write_csv(out / "solution.csv", header, rows)
    b = sol.boundary
    meta = {
        "n": n,
        "m": m,
        "T": sol.T,
        "steps": spec.solver.steps,
        "nodes": len(sol.grid),
        "delta": sol.delta,
        "method": sol.method,
        "singular": {"Sigma0": sol.singular_flags[0], "SigmaT": sol.singular_flags[1]},
        "q_window": list(sol.q_window),
        "p_window": list(sol.p_window),
        "Sigma0_limit": sol.Sigma[0],
        "SigmaT_limit": sol.Sigma[-1],
        "Q0inv": b.Q0inv,
        "PTinv": b.PTinv,
        "P0": getattr(b, "P0", None),
        "QT": getattr(b, "QT", None),
    }
    write_json(out / "metadata.json", meta)


def cmd_solve(args, spec: ProblemSpec) -> int:
    _, _, _, sol = _solve(spec)
    write_solution(args.out, sol, spec)
    _say(args, f"solution: {len(sol.grid)} nodes -> {args.out / 'solution.csv'}")
    return EXIT_OK


def _moment_rows(label, ens):
    for j, t in enumerate(ens.times):
        yield [label, t, *ens.emp_mean[j], *ens.emp_cov[j].ravel(), *ens.cov_se[j].ravel(),
               ens.energy_mean[j], ens.energy_se[j]]


def cmd_simulate(args, spec: ProblemSpec) -> int:
    sys_, m0, mT, sol = _solve(spec)
    write_solution(args.out, sol, spec)
    seed = args.seed
    ensembles = {}
    if spec.simulation.direction == "forward":
        ensembles["controlled"] = simulate_controlled(sys_, sol, spec.simulation_config(seed, "forward"))
    if spec.simulation.direction == "reverse" or spec.simulation.reverse:
        ensembles["reverse"] = simulate_reverse(sys_, sol, mT, spec.simulation_config(seed, "reverse"))
    if spec.simulation.uncontrolled:
        cfg = replace(spec.simulation_config(seed, "forward"), horizon_clip=0.0)
        ensembles["uncontrolled"] = simulate_uncontrolled(sys_, m0, cfg)
    n = sys_.n
    header = ["ensemble", "t"] + [f"mean_{i}" for i in range(n)] + _labels("cov", n, n) + _labels("cov_se", n, n)
    header += ["energy_mean", "energy_se"]
    rows = (r for label, e in ensembles.items() for r in _moment_rows(label, e))
    write_csv(args.out / "moments.csv", header, rows)
    if spec.simulation.record_paths > 0:
        ph = ["ensemble", "t", "path_id"] + [f"x_{i}" for i in range(n)]
        prow = (
            [label, t, str(p), *e.samples[k, p]]
            for label, e in ensembles.items()
            for k, t in enumerate(e.sample_times)
            for p in range(e.samples.shape[1])
        )
        write_csv(args.out / "paths.csv", ph, prow)
    _say(args, *(f"{k}: {e.paths} paths, {len(e.times)} nodes" for k, e in ensembles.items()))
    return EXIT_OK


def _finish_report(args, rep: VerificationReport, name="report.json") -> int:
    (args.out / name).write_text(rep.to_json() + "\n")
    _say(args, *rep.summary_lines())
    if rep.ok:
        return EXIT_OK
    first = rep.failures[0]
    detail = first.metadata.get("error", "")
    print(f"verification failed: {first.name}" + (f" ({detail})" if detail else ""), file=sys.stderr)
    return EXIT_VERIFY


def cmd_verify(args, spec: ProblemSpec) -> int:
    m0, mT = spec.marginals()
    cfg = spec.verify_config(args.seed)
    rep = run_full_verification(spec.system, m0, mT, cfg=cfg)
    return _finish_report(args, rep)


def cmd_sweep(args, spec: ProblemSpec) -> int:
    sys_ = spec.system()
    m0, mT = spec.marginals()
    eps = tuple(spec.verification.eps_list)
    res = epsilon_errors(sys_, m0, mT, eps)
    write_csv(
        args.out / "sweep.csv",
        ["eps", "q0inv_error", "pTinv_error", "message"],
        ([e, q, p, msg or ""] for e, q, p, msg in zip(res["eps"], res["q_err"], res["p_err"], res["errors"])),
    )
    rep = sweep_epsilon(sys_, m0, mT, eps, spec.verify_config(args.seed))
    return _finish_report(args, rep, "sweep_report.json")


COMMANDS = {"solve": cmd_solve, "simulate": cmd_simulate, "verify": cmd_verify, "sweep": cmd_sweep}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="covbridge", description="Covariance bridges for linear stochastic systems.")
    sub = p.add_subparsers(dest="command", required=True)
    helps = {
        "solve": "solve the bridge and write solution.csv + metadata.json",
        "simulate": "solve, simulate and write moments.csv (and paths.csv)",
        "verify": "run every cross-check and write report.json",
        "sweep": "regularization sweep of the boundary limits; writes sweep.csv",
    }
    for name, text in helps.items():
        s = sub.add_parser(name, help=text)
        s.add_argument("--spec", required=True, type=Path, help="problem file (JSON)")
        s.add_argument("--out", required=True, type=Path, help="output directory")
        s.add_argument("--seed", type=int, default=None, help="override the random seed")
        s.add_argument("--quiet", action="store_true", help="suppress progress output")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = load_problem(args.spec)
        args.out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](args, spec)
    except ParseError as exc:
        code, msg = EXIT_PARSE, str(exc)
    except (ValidationError, SingularGramianError) as exc:
        code, msg = EXIT_VALIDATION, str(exc)
    except BridgeError as exc:
        code, msg = EXIT_SOLVER, str(exc)
    print(f"error [{code}]: {msg}", file=sys.stderr)
    return code


if __name__ == "__main__":
    raise SystemExit(main())
