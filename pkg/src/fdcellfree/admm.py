"""Consensus ADMM over one worker per UE for the convexified WSEE problem.

Each worker holds a local copy of all power variables (normalized
amplitudes cbar and uplink fractions theta) plus its own four slacks, and
solves its share of the convex program with a proximal penalty towards the
global copy. The aggregator averages the local copies and duals.
"""
from __future__ import annotations

import logging
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .sca import (DegenerateLinearization, OptimizerOptions, SCAIterate, SCAReport, SHRINKS,
                  WSEEModel, _check_expansion, _shared_constraints, _ue_constraints,
                  init_iterate, interior_start, tight_iterate)
from .solver import ConvexProgram, SolverOptions, Status, solve

log = logging.getLogger(__name__)

QOS_EXTRA = 1e-2      # extra residual reduction allowed to reach the QoS floors
BACKTRACK = 30
WARM_T0 = 1e3
WARM_MU = 50.0


@dataclass
class LocalState:
    direction: str       # "d" or "u"
    ue: int              # index within its direction
    C: np.ndarray        # local copy of cbar (nc,)
    theta: np.ndarray    # local copy of theta (Ku,)
    slacks: np.ndarray   # (f, Psi, zeta, lam) of this UE
    chi: np.ndarray      # dual for the cbar consensus constraint
    xi: np.ndarray       # dual for the theta consensus constraint
    failed: int = 0

    @property
    def x(self) -> np.ndarray:
        return np.concatenate([self.C, self.theta, self.slacks])


@dataclass
class GlobalState:
    C: np.ndarray
    theta: np.ndarray
    rho_C: float
    rho_theta: float
    primal_res: float = float("inf")
    dual_res: float = float("inf")

    def __post_init__(self):
        if not (self.rho_C > 0 and self.rho_theta > 0):
            raise ValueError("penalty parameters must be > 0")


class LocalProgram:
    """Feasible set of one UE at the current linearization point."""

    def __init__(self, model: WSEEModel, it: SCAIterate, direction: str, ue: int):
        self.model, self.direction, self.ue = model, direction, ue
        nc, Ku = model.nc, model.Ku
        self.nc, self.Ku = nc, Ku
        self.n = nc + Ku + 4
        self.ic = np.arange(nc)
        self.ith = nc + np.arange(Ku)
        self.i_f, self.i_psi, self.i_z, self.i_lam = nc + Ku + np.arange(4)
        w = model.w_d[ue] if direction == "d" else model.w_u[ue]
        self.w = float(w)
        prog = ConvexProgram(self.n)
        _ue_constraints(prog, model, it, direction, ue, self.ic, self.ith,
                        self.i_f, self.i_psi, self.i_z, self.i_lam)
        _shared_constraints(prog, model, self.ic, self.ith)
        self.prog = prog

    def set_objective(self, local: LocalState, glob: GlobalState):
        lin = np.zeros(self.n)
        lin[self.i_f] = self.w
        lin[self.ic] -= local.chi
        lin[self.ith] -= local.xi
        r = np.zeros(self.n)
        r[self.ic] = glob.rho_C
        r[self.ith] = glob.rho_theta
        anchor = np.zeros(self.n)
        anchor[self.ic] = glob.C
        anchor[self.ith] = glob.theta
        self.prog.set_objective(lin, r, anchor)

    def slack_slice(self, it: SCAIterate):
        j = self.ue
        if self.direction == "d":
            return np.array([it.f_d[j], it.Psi_d[j], it.zeta_d[j], it.lam_d[j]])
        return np.array([it.f_u[j], it.Psi_u[j], it.zeta_u[j], it.lam_u[j]])


def local_update(local: LocalState, glob: GlobalState, lp: LocalProgram,
                 solver: SolverOptions = None) -> LocalState:
    """Proximal local solve; on failure the previous state is kept and flagged."""
    lp.set_objective(local, glob)
    x0 = local.x
    rep = solve(lp.prog, x0, options=solver)
    if rep.status != Status.OPTIMAL:
        base = solver or SolverOptions()
        tighter = replace(base, t0=1.0, max_newton=2 * base.max_newton, mu=max(2.0, base.mu / 2.0))
        rep = solve(lp.prog, x0, options=tighter)
    if rep.status != Status.OPTIMAL:
        log.warning("local solve failed for %s-UE %d (%s); keeping previous state",
                    local.direction, local.ue, rep.status.value)
        return LocalState(local.direction, local.ue, local.C, local.theta, local.slacks,
                          local.chi, local.xi, local.failed + 1)
    x = rep.x_star
    return LocalState(local.direction, local.ue, x[lp.ic].copy(), x[lp.ith].copy(),
                      x[lp.nc + lp.Ku:].copy(), local.chi, local.xi, local.failed)


def dual_update(local: LocalState, glob: GlobalState) -> LocalState:
    chi = local.chi + glob.rho_C * (local.C - glob.C)
    xi = local.xi + glob.rho_theta * (local.theta - glob.theta)
    return LocalState(local.direction, local.ue, local.C, local.theta, local.slacks, chi, xi, local.failed)


def global_update(locals_: list, glob: GlobalState) -> GlobalState:
    """Closed-form maximizer of the augmented Lagrangian over the global copy."""
    K = len(locals_)
    C = sum(l.C + l.chi / glob.rho_C for l in locals_) / K
    th = sum(l.theta + l.xi / glob.rho_theta for l in locals_) / K
    return GlobalState(C, th, glob.rho_C, glob.rho_theta, glob.primal_res, glob.dual_res)


def residuals(locals_: list, glob: GlobalState, glob_prev: GlobalState):
    """Primal and dual residual norms (r, s)."""
    r2 = sum(np.sum((l.C - glob.C) ** 2) + np.sum((l.theta - glob.theta) ** 2) for l in locals_)
    s2 = len(locals_) * (np.sum((glob.C - glob_prev.C) ** 2) + np.sum((glob.theta - glob_prev.theta) ** 2))
    return float(np.sqrt(r2)), float(np.sqrt(s2))


def penalty_update(rho: float, r: float, s: float, mu: float = 10.0, vartheta: float = 1.2) -> float:
    if not (mu > 1 and vartheta > 1):
        raise ValueError("mu and vartheta must be > 1")
    if r > mu * s:
        return rho * vartheta
    if s > mu * r:
        return rho / vartheta
    return rho


def _ue_list(model: WSEEModel):
    return [("d", k) for k in range(model.Kd)] + [("u", l) for l in range(model.Ku)]


def _strict_start(model: WSEEModel, tight: SCAIterate, programs: list) -> Optional[SCAIterate]:
    for s in SHRINKS:
        it = interior_start(model, tight, s)
        if it is None:
            continue
        if all(lp.prog.is_strictly_feasible(np.concatenate([it.cbar, it.theta, lp.slack_slice(it)]))
               for lp in programs):
            return it
    return None


@dataclass
class ADMMResult:
    C: np.ndarray
    theta: np.ndarray
    iterations: int
    converged: bool
    log: list = field(default_factory=list)
    locals_: list = field(default_factory=list)


def run_admm(model: WSEEModel, tight: SCAIterate, opts: OptimizerOptions, sca_iter: int = 0,
             workers: int = 1, bandwidth: float = 1.0) -> ADMMResult:
    """Inner ADMM loop for the program linearized at ``tight``."""
    _check_expansion(tight)
    programs = [LocalProgram(model, tight, d, j) for d, j in _ue_list(model)]
    start = _strict_start(model, tight, programs)
    if start is None:
        raise DegenerateLinearization("no strictly feasible start for the local programs")
    zeros_c, zeros_t = np.zeros(model.nc), np.zeros(model.Ku)
    locals_ = [LocalState(lp.direction, lp.ue, start.cbar.copy(), start.theta.copy(),
                          lp.slack_slice(start), zeros_c.copy(), zeros_t.copy()) for lp in programs]
    # globals start at the current SCA point
    glob = GlobalState(tight.cbar.copy(), tight.theta.copy(), opts.rho0, opts.rho0)
    rows = []
    best = None
    # later solves start next to the previous optimum, so the barrier path starts late
    warm = replace(opts.solver, t0=max(opts.solver.t0, WARM_T0), mu=max(opts.solver.mu, WARM_MU))
    pool = ThreadPoolExecutor(workers) if workers > 1 else None
    try:
        for p in range(1, opts.max_admm + 1):
            sopt = opts.solver if p == 1 else warm
            if pool is None:
                locals_ = [local_update(l, glob, lp, sopt) for l, lp in zip(locals_, programs)]
            else:
                locals_ = list(pool.map(lambda a: local_update(a[0], glob, a[1], sopt),
                                        zip(locals_, programs)))
            locals_ = [dual_update(l, glob) for l in locals_]
            prev = glob
            glob = global_update(locals_, glob)
            r, s = residuals(locals_, glob, prev)
            glob.primal_res, glob.dual_res = r, s
            cb, th = model.project(glob.C.copy(), glob.theta.copy())
            est = model.wsee(cb, th) * bandwidth
            rows.append({"sca_iter": sca_iter, "admm_iter": p, "primal_res": r, "dual_res": s,
                         "rho_C": glob.rho_C, "rho_theta": glob.rho_theta, "wsee_estimate": est})
            if best is None or r < best[0]:
                best = (r, glob.C.copy(), glob.theta.copy(), p)
            # past the tolerance, keep going while the consensus point misses a QoS floor
            if r <= opts.eps_admm and (r <= opts.eps_admm * QOS_EXTRA or model.qos_ok(cb, th)):
                return ADMMResult(glob.C.copy(), glob.theta.copy(), p, True, rows, locals_)
            rho = penalty_update(glob.rho_C, r, s, opts.mu_admm, opts.vartheta)
            glob.rho_C = glob.rho_theta = rho
    finally:
        if pool is not None:
            pool.shutdown()
    msg = (f"ADMM hit {opts.max_admm} iterations at SCA iteration {sca_iter}; "
           f"using the best consensus point (primal residual {best[0]:.3g})")
    warnings.warn(msg, RuntimeWarning)
    return ADMMResult(best[1], best[2], opts.max_admm, False, rows, locals_)


def _backtrack(model: WSEEModel, c0, t0, c1, t1):
    """Largest step along (c0, t0) -> (c1, t1) that keeps every QoS floor."""
    step = 1.0
    for _ in range(BACKTRACK):
        step *= 0.5
        c, t = model.project(c0 + step * (c1 - c0), t0 + step * (t1 - t0))
        if model.qos_ok(c, t):
            return c, t, step
    return c0, t0, 0.0


def run_decentralized(model: WSEEModel, opts: OptimizerOptions = None, init: SCAIterate = None,
                      workers: int = 1, bandwidth: float = 1.0):
    """SCA outer loop with each convexified program solved by consensus ADMM.

    Returns (SCAReport, PowerControl); ``report.admm_log`` holds one row per
    ADMM iteration.
    """
    opts = opts or OptimizerOptions()
    it = init or init_iterate(model)
    cbar, theta = it.cbar.copy(), it.theta.copy()
    out = SCAReport()
    cur = model.wsee(cbar, theta)
    out.wsee.append(cur)
    out.residual.append(float("nan"))
    out.status.append("INIT")
    out.iterates.append((cbar.copy(), theta.copy()))
    for n in range(1, opts.max_sca + 1):
        t0 = time.perf_counter()
        tight = tight_iterate(model, cbar, theta)
        res_admm = run_admm(model, tight, opts, sca_iter=n, workers=workers, bandwidth=bandwidth)
        out.admm_log.extend(res_admm.log)
        status = "OPTIMAL" if res_admm.converged else "MAX_ITER"
        if not res_admm.converged:
            out.warnings.append(f"ADMM iteration cap reached at SCA iteration {n}")
        new_c, new_t = model.project(res_admm.C.copy(), res_admm.theta.copy())
        if not model.qos_ok(new_c, new_t):
            new_c, new_t, step = _backtrack(model, cbar, theta, new_c, new_t)
            msg = f"consensus point misses QoS floors at SCA iteration {n}; step cut to {step:.3g}"
            out.warnings.append(msg)
            log.info(msg)
            status = "QOS_BACKTRACK"
        res = float(np.sqrt(np.sum((new_c - cbar) ** 2) + np.sum((new_t - theta) ** 2)))
        cbar, theta = new_c, new_t
        val = model.wsee(cbar, theta)
        if val < cur - opts.monotone_tol:
            msg = f"WSEE decreased at iteration {n}: {cur:.9g} -> {val:.9g}"
            out.warnings.append(msg)
            warnings.warn(msg, RuntimeWarning)
        cur = val
        out.wsee.append(val)
        out.residual.append(res)
        out.status.append(status)
        out.iterates.append((cbar.copy(), theta.copy()))
        out.seconds.append(time.perf_counter() - t0)
        out.iterations = n
        if res <= opts.eps_sca:
            out.converged = True
            break
    return out, model.to_pc(cbar, theta)
