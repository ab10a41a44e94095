"""Cross-checks of a bridge solution collected into a `VerificationReport`.

`run_full_verification` always emits the same set of check names
(`CHECK_NAMES`); checks that cannot run for a given instance are reported
as skipped rather than omitted.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bridge_core import BridgeSolution, boundary_nonsingular, lyapunov_values
from .bridge_singular import (
    boundary_structure,
    efg_blocks,
    pT_inverse_limit,
    q0_inverse_limit,
    singular_boundary,
    solve_bridge,
)
from .dynamics import (
    LinearSystem,
    controllability_gramian,
    controllability_probe,
    reachability_gramian,
    rk4,
    state_transition,
    sym,
)
from .errors import BridgeError, SingularGramianError
from .psd import GaussianMarginal, make_marginal, perturb
from .report import Check, VerificationReport, check, flag, skipped
from .simulate import (
    SimulationConfig,
    SimulationEnsemble,
    energy_profile,
    simulate_controlled,
    simulate_reverse,
    simulate_uncontrolled,
)

EPS_LIST = (1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8)


@dataclass(frozen=True)
class VerifyConfig:
    """Every tolerance used by the verification suite."""

    structural_tol: float = 1e-8
    boundary_rel_tol: float = 1e-8
    boundary_limit_tol: float = 1e-6
    duality_tol: float = 1e-6
    reduction_tol: float = 1e-8
    block_tol: float = 1e-8
    neg_sd_tol: float = 1e-10
    fixed_point_tol: float = 1e-8
    sigma_assembly_tol: float = 1e-8
    fd_floor: float = 1e-9
    fd_min_order: float = 1.5
    anchor_eps: float = 1e-4
    eps_list: tuple = EPS_LIST
    sweep_final_tol: float = 1e-6
    sweep_floor: float = 1e-10
    reciprocal_offsets: tuple = (0.1, 0.05, 0.02, 0.01)
    reciprocal_ratio: float = 1e-4
    reciprocal_abs: float = 1e-8
    mc_paths: int = 4000
    mc_step: float = 1e-3
    mc_seed: int = 0
    mc_clip: float = 0.05
    mc_bands: float = 4.0
    probe_fracs: tuple = (0.25, 0.5, 0.75)
    energy_eps: tuple = (0.1, 0.03, 0.01, 0.003)
    energy_rel_tol: float = 0.05
    simulate: bool = True


CHECK_NAMES = (
    "precondition.controllability",
    "dynamics.semigroup",
    "dynamics.gramian_additivity",
    "dynamics.gramian_duality",
    "marginal.sigma0",
    "marginal.sigmaT",
    "solver.run",
    "core.eq8_initial",
    "core.eq8_final",
    "core.duality_forward",
    "core.duality_backward",
    "core.limit_reduction",
    "core.sigma_assembly",
    "core.sigma_psd",
    "boundary.sigma0",
    "boundary.sigmaT",
    "singular.limit_forms",
    "singular.neg_sd",
    "singular.e_negative",
    "singular.efg_fixed_point",
    "singular.efg_consistency",
    "block.P0.null",
    "block.P0.projection",
    "block.P0.fixed_point",
    "block.P0.plus_nonsingular",
    "block.QT.null",
    "block.QT.projection",
    "block.QT.fixed_point",
    "block.QT.plus_nonsingular",
    "riccati.q_inverse",
    "riccati.p_inverse",
    "lyapunov.sigma",
    "sweep.q0inv",
    "sweep.pTinv",
    "reciprocal.monotone",
    "reciprocal.limit",
    "simulate.mean_zero",
    "simulate.cov_agreement",
    "simulate.uncontrolled_cov",
    "simulate.energy_divergence",
    "simulate.reverse_cov",
)


def _rel(X, Y):
    den = np.linalg.norm(Y, 2)
    return float(np.linalg.norm(X - Y, 2) / (den if den > 0 else 1.0))


# ---------------------------------------------------------------- reciprocal


@dataclass(frozen=True, eq=False)
class ReciprocalPair:
    """``R1``, ``R2`` and ``||R1 Q^{-1} R2||`` at probe times approaching ``T``."""

    times: np.ndarray
    R1: np.ndarray
    R2: np.ndarray
    product_norm: np.ndarray

    @property
    def monotone(self) -> bool:
        return bool(np.all(np.diff(self.product_norm) < 0))

    @property
    def ratio(self) -> float:
        first = self.product_norm[0]
        return float(self.product_norm[-1] / first) if first > 0 else 0.0


def check_reciprocal(sys: LinearSystem, sol: BridgeSolution, offsets=(0.1, 0.05, 0.02, 0.01)) -> ReciprocalPair:
    """Evaluate ``R1(t) Q(t)^{-1} R2(t)`` at ``t = T - s T`` for each offset ``s``.

    ``R1`` solves ``dR/dt = A R + R A' - B B'`` and ``R2`` the same equation
    with ``A`` replaced by the closed-loop ``A - B B' Q^{-1}``, both with
    ``R(T) = 0``.  ``R1`` is integrated backward with RK4.  When ``Sigma_T``
    is singular the closed-loop generator blows up at ``T``; ``-Q`` is a
    particular solution of the ``R2`` equation and the closed-loop transition
    is ``Q(t) Phi(s,t)' Q(s)^{-1}``, so ``R2`` is written in closed form from
    the clearance ``t_c = T - delta`` with ``R2(t_c) = Q(T) - Q(t_c)``.
    """
    T = sys.T
    g = sol.grid
    want = T - np.asarray(offsets, dtype=float) * T
    idx = np.array([int(np.argmin(np.abs(g - t))) for t in want])
    if np.any(g[idx] > sol.q_window[1] + 1e-12 * T):
        raise ValueError("probe times must lie inside the feedback window")
    lo = int(idx.min())
    nodes = g[lo:]

    def r1_rhs(t, R):
        AR = sys.A(t) @ R
        return AR + AR.T - sys.BBt(t)

    R1 = sym(rk4(r1_rhs, np.zeros((sys.n, sys.n)), nodes[::-1])[::-1])
    R1p = R1[idx - lo]

    tc = sol.q_window[1]
    if tc < T:
        jc = sol.index(tc)
        Qc_inv = sol.Qinv[jc]
        QT = sol.boundary.QT
        core = Qc_inv @ QT @ Qc_inv
        R2p = []
        for j in idx:
            Qt = np.linalg.inv(sol.Qinv[j])
            Phi = state_transition(sys, tc, g[j])
            R2p.append(sym(-Qt + Qt @ Phi.T @ core @ Phi @ Qt))
        R2p = np.array(R2p)
    else:

        def r2_rhs(t, R):
            Ahat = sys.A(t) - sys.BBt(t) @ sol.on_grid("Qinv", [t])[0]
            AR = Ahat @ R
            return AR + AR.T - sys.BBt(t)

        R2 = sym(rk4(r2_rhs, np.zeros((sys.n, sys.n)), nodes[::-1])[::-1])
        R2p = R2[idx - lo]
    prod = np.array([np.linalg.norm(a @ sol.Qinv[j] @ b, 2) for a, j, b in zip(R1p, idx, R2p)])
    return ReciprocalPair(times=g[idx], R1=R1p, R2=R2p, product_norm=prod)


# ------------------------------------------------------------------ ε-sweep


def epsilon_errors(sys: LinearSystem, m0: GaussianMarginal, mT: GaussianMarginal, eps_list=EPS_LIST) -> dict:
    """``||Q_eps(0)^{-1} - limit||`` and ``||P_eps(T)^{-1} - limit||`` per ``eps``.

    Entries whose regularized solve fails hold NaN and the error message.
    """
    q_lim = q0_inverse_limit(sys, m0, mT)
    p_lim = pT_inverse_limit(sys, m0, mT)
    q_err, p_err, msgs = [], [], []
    for eps in eps_list:
        try:
            bp = boundary_nonsingular(
                sys, make_marginal(perturb(m0, eps), m0.rank_tol), make_marginal(perturb(mT, eps), mT.rank_tol)
            )
            q_err.append(float(np.linalg.norm(bp.Q0inv - q_lim, 2)))
            p_err.append(float(np.linalg.norm(bp.PTinv - p_lim, 2)))
            msgs.append(None)
        except BridgeError as exc:
            q_err.append(float("nan"))
            p_err.append(float("nan"))
            msgs.append(str(exc))
    return {"eps": list(eps_list), "q_err": q_err, "p_err": p_err, "errors": msgs}


def _sweep_check(name, eps, errs, msgs, cfg: VerifyConfig) -> Check:
    e = np.asarray(errs)
    finite = bool(np.all(np.isfinite(e)))
    floor = cfg.sweep_floor
    steps_ok = [b < a or (a <= floor and b <= floor) for a, b in zip(e[:-1], e[1:])]
    monotone = finite and all(steps_ok)
    final = float(e[-1]) if e.size else float("nan")
    ok = monotone and final <= cfg.sweep_final_tol
    return flag(name, ok, final, cfg.sweep_final_tol, eps=list(eps), errors=list(e), monotone=monotone,
                failures=[m for m in msgs if m])


def sweep_epsilon(sys, m0, mT, eps_list=EPS_LIST, cfg: VerifyConfig | None = None) -> VerificationReport:
    """Convergence of the regularized boundary inverses to the singular limits.

    Passes when each error curve decreases strictly (pairs below the roundoff
    floor ``cfg.sweep_floor`` count as non-increasing) and ends at or below
    ``cfg.sweep_final_tol``.
    """
    cfg = cfg or VerifyConfig()
    eps_list = tuple(eps_list)
    if not eps_list or any(e <= 0 for e in eps_list) or any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_list must be positive and strictly decreasing")
    res = epsilon_errors(sys, m0, mT, eps_list)
    rep = VerificationReport()
    rep.add(
        _sweep_check("sweep.q0inv", res["eps"], res["q_err"], res["errors"], cfg),
        _sweep_check("sweep.pTinv", res["eps"], res["p_err"], res["errors"], cfg),
    )
    return rep


# ----------------------------------------------------------- finite differences


def _fd(grid, values, j, w):
    """Three-point derivative at node ``j`` from nodes ``j - w`` and ``j + w``."""
    h1, h2 = grid[j] - grid[j - w], grid[j + w] - grid[j]
    return (
        -h2 / (h1 * (h1 + h2)) * values[j - w]
        + (h2 - h1) / (h1 * h2) * values[j]
        + h1 / (h2 * (h1 + h2)) * values[j + w]
    )


@dataclass(frozen=True)
class FDResidual:
    """Scaled residuals with stencil widths 1 and 2 and the implied order."""

    fine: float
    coarse: float

    @property
    def order(self) -> float:
        if self.fine <= 0 or self.coarse <= 0:
            return float("inf")
        return float(np.log2(self.coarse / self.fine))


def fd_residual(grid, X, rhs, T) -> FDResidual:
    """Largest ``||dX/dt - rhs|| / (||rhs|| + ||X||/T)`` over interior nodes.

    ``X`` and ``rhs`` are stacks on ``grid``; nodes whose 5-point
    neighbourhood holds a NaN are skipped.
    """
    ok = np.all(np.isfinite(X), axis=(1, 2))
    fine = coarse = 0.0
    for j in range(2, len(grid) - 2):
        if not ok[j - 2 : j + 3].all():
            continue
        scale = np.linalg.norm(rhs[j], 2) + np.linalg.norm(X[j], 2) / T
        if scale == 0:
            continue
        fine = max(fine, float(np.linalg.norm(_fd(grid, X, j, 1) - rhs[j], 2) / scale))
        coarse = max(coarse, float(np.linalg.norm(_fd(grid, X, j, 2) - rhs[j], 2) / scale))
    return FDResidual(fine, coarse)


def _riccati_rhs(sys, grid, K, sign):
    A, BB = sys.A.at(grid), sys.B.at(grid) @ np.swapaxes(sys.B.at(grid), 1, 2)
    KA = K @ A
    return -KA - np.swapaxes(KA, 1, 2) - sign * (K @ BB @ K)


def _sigma_rhs(sys, sol):
    g = sol.grid
    B = sys.B.at(g)
    BB = B @ np.swapaxes(B, 1, 2)
    AS = (sys.A.at(g) - BB @ sol.Qinv) @ sol.Sigma
    return AS + np.swapaxes(AS, 1, 2) + BB


def _fd_check(name, res: FDResidual, cfg):
    """Pass when the residual is at roundoff level or shrinks at order >= ``cfg.fd_min_order``."""
    ok = res.fine <= cfg.fd_floor or res.order >= cfg.fd_min_order
    return flag(name, ok, res.fine, cfg.fd_floor, coarse=res.coarse, order=res.order)


# ------------------------------------------------------------- check groups


def _dynamics_checks(sys: LinearSystem, cfg):
    T = sys.T
    tol = cfg.structural_tol
    semi = _rel(state_transition(sys, T, 0.0), state_transition(sys, T, 0.5 * T) @ state_transition(sys, 0.5 * T, 0.0))
    Ph = state_transition(sys, T, 0.5 * T)
    add = _rel(
        sys.gram_M,
        reachability_gramian(sys, T, 0.5 * T) + Ph @ reachability_gramian(sys, 0.5 * T, 0.0) @ Ph.T,
    )
    dual = _rel(sys.gram_M_inv, sys.phi_0T.T @ np.linalg.inv(controllability_gramian(sys, T, 0.0)) @ sys.phi_0T)
    return [
        check("dynamics.semigroup", semi, tol),
        check("dynamics.gramian_additivity", add, tol),
        check("dynamics.gramian_duality", dual, tol),
    ]


def _marginal_check(name, m: GaussianMarginal, tol):
    r = max(
        float(np.max(np.abs(m.proj_null @ m.Sigma), initial=0.0)),
        float(np.max(np.abs(m.sqrt @ m.pinv_sqrt - m.proj_range), initial=0.0)),
    )
    return check(name, r, tol, rank=m.rank)


def _core_checks(sys, m0, mT, cfg):
    """Nonsingular-solver identities; singular marginals use the eps-anchor."""
    anchor = None
    if m0.singular or mT.singular:
        anchor = cfg.anchor_eps
        m0 = make_marginal(perturb(m0, anchor), m0.rank_tol) if m0.singular else m0
        mT = make_marginal(perturb(mT, anchor), mT.rank_tol) if mT.singular else mT
    bp = boundary_nonsingular(sys, m0, mT)
    r0, rT = bp.residuals(m0, mT)
    _, Pf, Qf = lyapunov_values(sys, bp, direction="forward")
    _, Pb, Qb = lyapunov_values(sys, bp, direction="backward")
    fwd = max(_rel(Pf[-1], bp.PT), _rel(Qf[-1], bp.QT))
    bwd = max(_rel(Pb[0], bp.P0), _rel(Qb[0], bp.Q0))
    red = max(
        _rel(q0_inverse_limit(sys, m0, mT, form="six-term"), bp.Q0inv),
        _rel(pT_inverse_limit(sys, m0, mT, form="six-term"), bp.PTinv),
    )
    meta = {"anchor_eps": anchor}
    return [
        check("core.eq8_initial", r0, cfg.boundary_rel_tol, **meta),
        check("core.eq8_final", rT, cfg.boundary_rel_tol, **meta),
        check("core.duality_forward", fwd, cfg.duality_tol, **meta),
        check("core.duality_backward", bwd, cfg.duality_tol, **meta),
        check("core.limit_reduction", red, cfg.reduction_tol, **meta),
    ]


def _solution_checks(sys, m0, mT, sol: BridgeSolution, cfg):
    out = []
    n = sys.n
    both = np.all(np.isfinite(sol.Qinv), axis=(1, 2)) & np.all(np.isfinite(sol.Pinv), axis=(1, 2))
    I = np.eye(n)
    asm = 0.0
    for j in np.flatnonzero(both):
        asm = max(asm, float(np.max(np.abs(sol.Sigma[j] @ (sol.Pinv[j] + sol.Qinv[j]) - I))))
    out.append(check("core.sigma_assembly", asm, cfg.sigma_assembly_tol))
    w = np.linalg.eigvalsh(sol.Sigma)
    scale = max(1.0, float(np.max(np.abs(w))))
    asym = float(np.max(np.abs(sol.Sigma - np.swapaxes(sol.Sigma, 1, 2))))
    out.append(
        check("core.sigma_psd", max(0.0, -float(w.min())) / scale + asym, 1e-10, min_eigenvalue=float(w.min()))
    )
    out.append(check("boundary.sigma0", np.max(np.abs(sol.Sigma[0] - m0.Sigma)), cfg.boundary_limit_tol))
    out.append(check("boundary.sigmaT", np.max(np.abs(sol.Sigma[-1] - mT.Sigma)), cfg.boundary_limit_tol))

    T = sys.T
    g = sol.grid
    sigma = sol.Sigma.copy()
    sigma[~np.all(np.isfinite(sol.Qinv), axis=(1, 2))] = np.nan
    out.append(_fd_check("riccati.q_inverse", fd_residual(g, sol.Qinv, _riccati_rhs(sys, g, sol.Qinv, -1), T), cfg))
    out.append(_fd_check("riccati.p_inverse", fd_residual(g, sol.Pinv, _riccati_rhs(sys, g, sol.Pinv, +1), T), cfg))
    out.append(_fd_check("lyapunov.sigma", fd_residual(g, sigma, _sigma_rhs(sys, sol), T), cfg))
    return out


def _singular_checks(sys, m0, mT, sol, cfg):
    forms = max(
        _rel(fn(sys, m0, mT, form="six-term"), fn(sys, m0, mT, form="pushed"))
        for fn in (q0_inverse_limit, pT_inverse_limit)
    )
    efg = efg_blocks(sys, m0, mT)
    out = [check("singular.limit_forms", forms, cfg.boundary_limit_tol)]
    out += [check("singular.neg_sd", max(0.0, efg.max_eigenvalue), cfg.neg_sd_tol, max_eigenvalue=efg.max_eigenvalue)]
    if efg.k:
        eE = float(np.linalg.eigvalsh(efg.E)[-1])
        hE_pd = bool(np.linalg.eigvalsh(efg.hatE)[0] > m0.rank_tol * max(1.0, np.abs(efg.hatE).max()))
        ok = eE <= cfg.neg_sd_tol and (eE < 0 or not hE_pd)
        out.append(flag("singular.e_negative", ok, eE, 0.0, hatE_positive_definite=hE_pd))
    else:
        out.append(check("singular.e_negative", 0.0, 0.0, vacuous=True))
    scale = max(1.0, float(np.abs(efg.hatE).max(initial=0.0)), float(np.abs(efg.hatG).max(initial=0.0)))
    out.append(check("singular.efg_fixed_point", max(efg.fixed_point_residuals()) / scale, cfg.fixed_point_tol))
    V = efg.basis
    target = V.T @ (sol.boundary.Q0inv - sys.phi_T0.T @ sys.gram_M_inv @ sys.phi_T0) @ V
    scale = max(1.0, float(np.abs(target).max()))
    literal = efg_blocks(sys, m0, mT, form="appendix").matrix
    out.append(
        check(
            "singular.efg_consistency",
            max(np.max(np.abs(efg.matrix - target)), np.max(np.abs(literal - target))) / scale,
            cfg.fixed_point_tol,
        )
    )
    sb = sol.boundary if hasattr(sol.boundary, "Sigma0") else singular_boundary(sys, m0, mT)
    out.extend(boundary_structure(sb, m0, mT, cfg.block_tol))
    return out


def _reciprocal_checks(sys, sol, cfg):
    rp = check_reciprocal(sys, sol, cfg.reciprocal_offsets)
    meta = {"times": rp.times, "product_norm": rp.product_norm}
    last = float(rp.product_norm[-1])
    ok = rp.ratio <= cfg.reciprocal_ratio or last <= cfg.reciprocal_abs
    return [
        flag("reciprocal.monotone", rp.monotone, 0.0, 0.0, **meta),
        flag("reciprocal.limit", ok, rp.ratio, cfg.reciprocal_ratio, last=last, **meta),
    ]


# --------------------------------------------------------------- Monte Carlo


@dataclass
class Ensembles:
    controlled: SimulationEnsemble | None = None
    uncontrolled: SimulationEnsemble | None = None
    reverse: SimulationEnsemble | None = None
    extras: dict = field(default_factory=dict)


def default_ensembles(sys, m0, mT, sol, cfg: VerifyConfig) -> Ensembles:
    """The three ensembles the Monte-Carlo checks need.

    The controlled run stops at ``T - min(energy_eps) T`` so the energy
    profile covers every clip time; the reverse run stops at ``mc_clip T``.
    """
    T = sys.T
    base = dict(paths=cfg.mc_paths, step=cfg.mc_step * T, seed=cfg.mc_seed)
    ctrl = simulate_controlled(sys, sol, SimulationConfig(horizon_clip=min(cfg.energy_eps) * T, **base))
    unc = simulate_uncontrolled(sys, m0, SimulationConfig(horizon_clip=0.0, **base))
    rev = simulate_reverse(sys, sol, mT, SimulationConfig(horizon_clip=cfg.mc_clip * T, direction="reverse", **base))
    return Ensembles(ctrl, unc, rev)


def _z_max(emp, se, ref):
    diff = np.abs(emp - ref)
    live = se > 0
    z = np.where(live, diff / np.where(live, se, 1.0), np.where(diff <= 1e-12, 0.0, np.inf))
    return float(np.max(z))


def _lyapunov_forward(sys, Sigma0, times):
    def rhs(t, S):
        AS = sys.A(t) @ S
        return AS + AS.T + sys.BBt(t)

    return sym(rk4(rhs, Sigma0, times))


def _mc_checks(sys, m0, sol, ens: Ensembles, cfg):
    T = sys.T
    out = []
    bands = cfg.mc_bands
    c = ens.controlled
    if c is None:
        out += [skipped(n, "no controlled ensemble") for n in
                ("simulate.mean_zero", "simulate.cov_agreement", "simulate.energy_divergence")]
    else:
        zs = [_z_max(c.emp_mean, c.mean_se, 0.0)]
        for e in (ens.uncontrolled, ens.reverse):
            if e is not None:
                zs.append(_z_max(e.emp_mean, e.mean_se, 0.0))
        out.append(check("simulate.mean_zero", max(zs), bands))
        probes = [f * T for f in cfg.probe_fracs] + [T - cfg.mc_clip * T]
        zc = {}
        for t in probes:
            j = c.index(t)
            emp, se = c.emp_cov[j], c.cov_se[j]
            zc[float(c.times[j])] = _z_max(emp, se, sol.sigma_at(float(c.times[j])))
        out.append(check("simulate.cov_agreement", max(zc.values()), bands, z_by_time=zc))

        eps = sorted(cfg.energy_eps, reverse=True)
        prof = energy_profile(c, [T - e * T for e in eps])
        means = [p.mean_energy for p in prof]
        meta = {"eps": eps, "mean_energy": means, "std_error": [p.std_error for p in prof]}
        if sol.singular_flags[1]:
            incr = np.diff(means)
            ok = bool(np.all(incr > 0)) and bool(np.all(incr > cfg.energy_rel_tol * np.asarray(means[:-1])))
            out.append(flag("simulate.energy_divergence", ok, float(incr.min()), 0.0, singular_target=True, **meta))
        else:
            i01, i003 = eps.index(0.01), eps.index(0.003)
            a, b = means[i01], means[i003]
            rel = abs(b - a) / a if a > 1e-12 else 0.0
            out.append(check("simulate.energy_divergence", rel, cfg.energy_rel_tol, singular_target=False, **meta))

    u = ens.uncontrolled
    if u is None:
        out.append(skipped("simulate.uncontrolled_cov", "no uncontrolled ensemble"))
    else:
        ref = _lyapunov_forward(sys, m0.Sigma, u.times)
        zu = max(_z_max(u.emp_cov[u.index(f * T)], u.cov_se[u.index(f * T)], ref[u.index(f * T)])
                 for f in cfg.probe_fracs + (1.0,))
        out.append(check("simulate.uncontrolled_cov", zu, bands))

    r = ens.reverse
    if r is None:
        out.append(skipped("simulate.reverse_cov", "no reverse ensemble"))
    else:
        j = r.index(0.5 * T)
        z = _z_max(r.emp_cov[j], r.cov_se[j], sol.sigma_at(float(r.times[j])))
        out.append(check("simulate.reverse_cov", z, bands, time=float(r.times[j])))
    return out


# ------------------------------------------------------------------- driver


def _guard(rep, names, fn):
    """Run ``fn`` and add its checks; on a library error mark ``names`` failed."""
    try:
        rep.add(*fn())
    except BridgeError as exc:
        for nm in names:
            if nm not in rep:
                rep.add(flag(nm, False, float("nan"), 0.0, error=str(exc), code=exc.code))


def run_full_verification(
    sys,
    m0,
    mT,
    sol: BridgeSolution | None = None,
    ensembles: Ensembles | None = None,
    cfg: VerifyConfig | None = None,
) -> VerificationReport:
    """Every check of `CHECK_NAMES` for one instance, sorted by name.

    ``sys`` may be a `LinearSystem` or a zero-argument callable building one,
    so construction failures (an uncontrollable pair raises
    `SingularGramianError`) surface as a failed
    ``precondition.controllability`` check instead of an exception.
    ``m0``/``mT`` may be marginals or covariance matrices.
    """
    cfg = cfg or VerifyConfig()
    rep = VerificationReport()
    try:
        if callable(sys) and not isinstance(sys, LinearSystem):
            sys = sys()
        ratios = controllability_probe(sys)
        rep.add(check("precondition.controllability", 0.0, 0.0,
                      ratios={f"M({a:g},{b:g})": r for (a, b), r in ratios.items()}))
    except SingularGramianError as exc:
        rep.add(flag("precondition.controllability", False, float("nan"), 0.0, error=str(exc), code=exc.code))
        return _complete(rep, "precondition failed")
    if not isinstance(m0, GaussianMarginal):
        m0 = make_marginal(m0, sys.rank_tol)
    if not isinstance(mT, GaussianMarginal):
        mT = make_marginal(mT, sys.rank_tol)

    _guard(rep, ("dynamics.semigroup", "dynamics.gramian_additivity", "dynamics.gramian_duality"),
           lambda: _dynamics_checks(sys, cfg))
    rep.add(_marginal_check("marginal.sigma0", m0, cfg.structural_tol),
            _marginal_check("marginal.sigmaT", mT, cfg.structural_tol))
    try:
        if sol is None:
            sol = solve_bridge(sys, m0, mT)
        rep.add(check("solver.run", 0.0, 0.0, method=sol.method, nodes=len(sol.grid)))
    except BridgeError as exc:
        rep.add(flag("solver.run", False, float("nan"), 0.0, error=str(exc), code=exc.code))
        return _complete(rep, "solver failed")

    _guard(rep, [n for n in CHECK_NAMES if n.startswith("core.") and n not in ("core.sigma_assembly", "core.sigma_psd")],
           lambda: _core_checks(sys, m0, mT, cfg))
    _guard(rep, [n for n in CHECK_NAMES if n.startswith(("boundary.", "riccati.", "lyapunov.", "core.sigma"))],
           lambda: _solution_checks(sys, m0, mT, sol, cfg))
    _guard(rep, [n for n in CHECK_NAMES if n.startswith(("singular.", "block."))],
           lambda: _singular_checks(sys, m0, mT, sol, cfg))
    _guard(rep, ["sweep.q0inv", "sweep.pTinv"], lambda: sweep_epsilon(sys, m0, mT, cfg.eps_list, cfg).checks)
    _guard(rep, ["reciprocal.monotone", "reciprocal.limit"], lambda: _reciprocal_checks(sys, sol, cfg))
    if ensembles is None and cfg.simulate:
        try:
            ensembles = default_ensembles(sys, m0, mT, sol, cfg)
        except BridgeError as exc:
            for nm in CHECK_NAMES:
                if nm.startswith("simulate."):
                    rep.add(flag(nm, False, float("nan"), 0.0, error=str(exc), code=exc.code))
    if ensembles is not None:
        _guard(rep, [n for n in CHECK_NAMES if n.startswith("simulate.")],
               lambda: _mc_checks(sys, m0, sol, ensembles, cfg))
    return _complete(rep, "not run")


def _complete(rep: VerificationReport, reason: str) -> VerificationReport:
    for nm in CHECK_NAMES:
        if nm not in rep:
            rep.add(skipped(nm, reason))
    extra = set(rep.names) - set(CHECK_NAMES)
    if extra:
        raise AssertionError(f"unregistered check names: {sorted(extra)}")
    return rep.sorted()


__all__ = [
    "CHECK_NAMES",
    "Ensembles",
    "ReciprocalPair",
    "VerifyConfig",
    "check_reciprocal",
    "default_ensembles",
    "epsilon_errors",
    "run_full_verification",
    "sweep_epsilon",
]
