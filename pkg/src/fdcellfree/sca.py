"""Successive convex approximation for weighted-sum energy efficiency.

Downlink amplitudes are optimized in normalized form
cbar_mk = c_mk * sqrt(b_tilde * Nt * gamma_mk), so that the per-AP power
constraint reads sum_k cbar_mk**2 <= 1 and every variable is O(1). All
residual norms and thresholds refer to (cbar, theta).
"""
from __future__ import annotations

import logging
import time
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .config import SystemConfig
from .fronthaul import ServingSets
from .quantizer import QuantizerParams
from .se import (PowerControl, SEBoundCoefficients, baseline_allocation, fixed_power,
                 max_amplitude, se_coefficients)
from .solver import ConvexProgram, SolverOptions, Status, solve, strict_interior
from .topology import LargeScaleState

log = logging.getLogger(__name__)

LN2 = np.log(2.0)
SHRINKS = (1e-4, 1e-6, 1e-8, 1e-10)


class InfeasibleQoS(RuntimeError):
    def __init__(self, dl, ul):
        self.dl = list(map(int, dl))
        self.ul = list(map(int, ul))
        super().__init__(f"QoS floors unreachable at initialization: downlink UEs {self.dl}, uplink UEs {self.ul}")


class SolverFailure(RuntimeError):
    def __init__(self, iteration: int, status):
        self.iteration = iteration
        self.status = status
        super().__init__(f"subproblem solve failed at SCA iteration {iteration}: {status}")


class DegenerateLinearization(ValueError):
    pass


@dataclass
class OptimizerOptions:
    eps_sca: float = 1e-3
    max_sca: int = 100
    eps_admm: float = 0.01
    max_admm: int = 500
    rho0: float = 0.1
    mu_admm: float = 10.0
    vartheta: float = 1.2
    monotone_tol: float = 1e-6
    solver: SolverOptions = field(default_factory=lambda: SolverOptions(tol=1e-8, max_newton=3000))


def taylor_under(f1, f2, f1_n, f2_n):
    """Affine under-estimator of f1**2 / f2 around (f1_n, f2_n), f2_n > 0."""
    r = np.asarray(f1_n, dtype=float) / np.asarray(f2_n, dtype=float)
    return 2.0 * r * np.asarray(f1) - r * r * np.asarray(f2)


class WSEEModel:
    """Scaled problem data for one instance."""

    def __init__(self, coeffs: SEBoundCoefficients, state: LargeScaleState, sets: ServingSets,
                 q: QuantizerParams, config: SystemConfig):
        self.coeffs, self.state, self.sets, self.q, self.config = coeffs, state, sets, q, config
        self.M, self.Kd, self.Ku = config.M, config.Kd, config.Ku
        pm, pk = np.nonzero(sets.mask_d)
        self.pm, self.pk = pm, pk
        self.nc = pm.size
        smax = max_amplitude(state, sets, q, config)
        self.scale = smax[pm, pk]
        s2 = self.scale ** 2
        self.Abar = coeffs.A_d[pm, pk] * self.scale
        self.Bbar = coeffs.B_d[:, pm, pk] * s2[None, :]
        self.D_d = coeffs.D_d
        self.A_u, self.B_u, self.E_u, self.F_u = coeffs.A_u, coeffs.B_u, coeffs.E_u, coeffs.F_u
        self.Dbar_u = coeffs.D_u[:, pm, pk] * s2[None, :]
        self.tau_f = coeffs.tau_f
        P_fix = fixed_power(sets, config)
        self.pw_d = config.p_d / (q.b_tilde * config.alpha_m) * np.ones(self.nc)
        self.const_d = P_fix + config.Ptc_dk
        self.pw_u = config.p_u / config.alpha_l
        self.const_u = P_fix + config.Ptc_ul
        self.w_d, self.w_u = config.weights_d, config.weights_u
        self.zmin_d = 2.0 ** (config.qos_d / self.tau_f) - 1.0
        self.zmin_u = 2.0 ** (config.qos_u / self.tau_f) - 1.0
        self.own = [np.flatnonzero(pk == k) for k in range(self.Kd)]
        self.ap_pairs = [np.flatnonzero(pm == m) for m in range(self.M)]

    @classmethod
    def build(cls, state, sets, q, config):
        return cls(se_coefficients(state, sets, q, config), state, sets, q, config)

    # conversions
    def to_pc(self, cbar, theta) -> PowerControl:
        c = np.zeros((self.M, self.Kd))
        c[self.pm, self.pk] = np.asarray(cbar) * self.scale
        return PowerControl.from_amplitudes(c, np.asarray(theta, dtype=float).copy())

    def from_pc(self, pc: PowerControl):
        return pc.c[self.pm, self.pk] / self.scale, np.asarray(pc.theta, dtype=float).copy()

    # exact quantities
    def num_d(self, cbar):
        return np.array([self.Abar[i] @ cbar[i] for i in self.own])

    def den_d(self, cbar, theta):
        return self.Bbar @ (cbar ** 2) + self.D_d @ theta + 1.0

    def den_u(self, cbar, theta):
        return self.B_u @ theta + self.Dbar_u @ (cbar ** 2) + self.E_u * theta + self.F_u

    def power_d(self, cbar):
        return self.const_d + np.array([self.pw_d[i] @ cbar[i] ** 2 for i in self.own])

    def power_u(self, theta):
        return self.const_u + self.pw_u * theta

    def sinr(self, cbar, theta):
        return self.num_d(cbar) ** 2 / self.den_d(cbar, theta), self.A_u * theta / self.den_u(cbar, theta)

    def se(self, cbar, theta):
        sd, su = self.sinr(cbar, theta)
        return self.tau_f * np.log2(1.0 + sd), self.tau_f * np.log2(1.0 + su)

    def wsee(self, cbar, theta) -> float:
        """Weighted sum EE with the bandwidth omitted (bit/Joule/Hz)."""
        se_d, se_u = self.se(cbar, theta)
        return float(self.w_d @ (se_d / self.power_d(cbar)) + self.w_u @ (se_u / self.power_u(theta)))

    def ap_load(self, cbar):
        return np.array([np.sum(cbar[i] ** 2) for i in self.ap_pairs])

    def qos_ok(self, cbar, theta, slack=0.0) -> bool:
        se_d, se_u = self.se(cbar, theta)
        cfg = self.config
        return bool(np.all(se_d >= cfg.qos_d - slack) and np.all(se_u >= cfg.qos_u - slack))

    def project(self, cbar, theta):
        """Nearest point (by scaling) obeying the per-AP and uplink power limits."""
        cbar = np.maximum(np.asarray(cbar, dtype=float), 0.0)
        theta = np.clip(np.asarray(theta, dtype=float), 0.0, 1.0)
        for i in self.ap_pairs:
            load = np.sum(cbar[i] ** 2)
            if load > 1.0:
                cbar[i] /= np.sqrt(load)
        return cbar, theta


@dataclass
class SCAIterate:
    cbar: np.ndarray
    theta: np.ndarray
    f_d: np.ndarray
    f_u: np.ndarray
    Psi_d: np.ndarray
    Psi_u: np.ndarray
    zeta_d: np.ndarray
    zeta_u: np.ndarray
    lam_d: np.ndarray
    lam_u: np.ndarray


class Layout:
    """Index map of the P6 variable vector [cbar, theta, f, Psi, zeta, lam]."""

    def __init__(self, nc, Kd, Ku):
        self.nc, self.Kd, self.Ku = nc, Kd, Ku
        K = Kd + Ku
        self.c = np.arange(nc)
        self.theta = nc + np.arange(Ku)
        base = nc + Ku
        self.f = base + np.arange(K)
        self.Psi = base + K + np.arange(K)
        self.zeta = base + 2 * K + np.arange(K)
        self.lam = base + 3 * K + np.arange(K)
        self.n = base + 4 * K

    def pack(self, it: SCAIterate) -> np.ndarray:
        x = np.empty(self.n)
        x[self.c] = it.cbar
        x[self.theta] = it.theta
        x[self.f] = np.concatenate([it.f_d, it.f_u])
        x[self.Psi] = np.concatenate([it.Psi_d, it.Psi_u])
        x[self.zeta] = np.concatenate([it.zeta_d, it.zeta_u])
        x[self.lam] = np.concatenate([it.lam_d, it.lam_u])
        return x

    def unpack(self, x) -> SCAIterate:
        Kd = self.Kd
        sl = lambda idx: (x[idx][:Kd].copy(), x[idx][Kd:].copy())
        f_d, f_u = sl(self.f)
        P_d, P_u = sl(self.Psi)
        z_d, z_u = sl(self.zeta)
        l_d, l_u = sl(self.lam)
        return SCAIterate(x[self.c].copy(), x[self.theta].copy(), f_d, f_u, P_d, P_u, z_d, z_u, l_d, l_u)


def tight_iterate(model: WSEEModel, cbar, theta) -> SCAIterate:
    """Slacks fixed by equality in every slack constraint (bottom-up)."""
    cbar = np.asarray(cbar, dtype=float)
    theta = np.asarray(theta, dtype=float)
    lam_d = model.num_d(cbar)
    lam_u = np.sqrt(model.A_u * theta)
    zeta_d = lam_d ** 2 / model.den_d(cbar, theta)
    zeta_u = lam_u ** 2 / model.den_u(cbar, theta)
    Psi_d = np.sqrt(model.tau_f * np.log2(1.0 + zeta_d))
    Psi_u = np.sqrt(model.tau_f * np.log2(1.0 + zeta_u))
    f_d = Psi_d ** 2 / model.power_d(cbar)
    f_u = Psi_u ** 2 / model.power_u(theta)
    return SCAIterate(cbar.copy(), theta.copy(), f_d, f_u, Psi_d, Psi_u, zeta_d, zeta_u, lam_d, lam_u)


def _check_expansion(it: SCAIterate):
    for name in ("zeta_d", "zeta_u", "f_d", "f_u"):
        v = getattr(it, name)
        if np.any(~(v > 0)):
            raise DegenerateLinearization(f"slack {name} must be > 0 at the expansion point (index {int(np.argmin(v))})")


def _sinr_constraints(prog: ConvexProgram, model: WSEEModel, it, direction: str, j: int,
                      ic, ith, i_z, i_lam):
    """lam <= amplitude gain and the Taylor-bounded zeta <= lam**2 / den."""
    n = prog.n
    if direction == "d":
        a = it.lam_d[j] / it.zeta_d[j]
        own = model.own[j]
        v = np.zeros(n)
        v[ic[own]] = -model.Abar[own]
        v[i_lam] = 1.0
        prog.add_affine(v, 0.0, name=f"num_d{j}")
        qv = np.zeros(n)
        qv[ic] = model.Bbar[j]
        v = np.zeros(n)
        v[ith] = model.D_d[j]
        v[i_lam] = -2.0 * a
        v[i_z] = a * a
        prog.add_quad(qv, v, -1.0, name=f"den_d{j}")
    else:
        a = it.lam_u[j] / it.zeta_u[j]
        qv = np.zeros(n)
        qv[i_lam] = 1.0
        v = np.zeros(n)
        v[ith[j]] = -model.A_u[j]
        prog.add_quad(qv, v, 0.0, name=f"num_u{j}")
        qv = np.zeros(n)
        qv[ic] = model.Dbar_u[j]
        v = np.zeros(n)
        v[ith] = model.B_u[j]
        v[ith[j]] += model.E_u[j]
        v[i_lam] = -2.0 * a
        v[i_z] = a * a
        prog.add_quad(qv, v, -model.F_u[j], name=f"den_u{j}")


def _ue_constraints(prog: ConvexProgram, model: WSEEModel, it: SCAIterate, direction: str, j: int,
                    ic, ith, i_f, i_psi, i_z, i_lam):
    """Constraint family of one UE; ``ic``/``ith`` index cbar/theta in ``prog``."""
    n = prog.n
    _sinr_constraints(prog, model, it, direction, j, ic, ith, i_z, i_lam)
    if direction == "d":
        e = it.Psi_d[j] / it.f_d[j]
        own = model.own[j]
        prog.add_square_le_log(i_psi, i_z, model.tau_f / LN2, name=f"se_d{j}")
        qv = np.zeros(n)
        qv[ic[own]] = model.pw_d[own]
        v = np.zeros(n)
        v[i_psi] = -2.0 * e
        v[i_f] = e * e
        prog.add_quad(qv, v, -model.const_d, name=f"pow_d{j}")
        zmin = model.zmin_d[j]
    else:
        e = it.Psi_u[j] / it.f_u[j]
        prog.add_square_le_log(i_psi, i_z, model.tau_f / LN2, name=f"se_u{j}")
        v = np.zeros(n)
        v[ith[j]] = model.pw_u
        v[i_psi] = -2.0 * e
        v[i_f] = e * e
        prog.add_affine(v, -model.const_u, name=f"pow_u{j}")
        zmin = model.zmin_u[j]
    prog.set_box(i_f, 0.0)
    prog.set_box(i_psi, 0.0)
    prog.set_box(i_z, zmin)
    prog.set_box(i_lam, 0.0)


def _shared_constraints(prog: ConvexProgram, model: WSEEModel, ic, ith):
    for m, idx in enumerate(model.ap_pairs):
        if idx.size:
            qv = np.zeros(prog.n)
            qv[ic[idx]] = 1.0
            prog.add_quad(qv, np.zeros(prog.n), 1.0, name=f"ap{m}")
    for i in ic:
        prog.set_box(i, 0.0)
    for i in ith:
        prog.set_box(i, 0.0, 1.0)


def build_gcp(model: WSEEModel, it: SCAIterate):
    """Convex inner approximation linearized at ``it``; returns (program, layout)."""
    _check_expansion(it)
    lay = Layout(model.nc, model.Kd, model.Ku)
    prog = ConvexProgram(lay.n)
    w = np.concatenate([model.w_d, model.w_u])
    lin = np.zeros(lay.n)
    lin[lay.f] = w
    prog.set_objective(lin)
    for j in range(model.Kd + model.Ku):
        d = "d" if j < model.Kd else "u"
        jj = j if d == "d" else j - model.Kd
        _ue_constraints(prog, model, it, d, jj, lay.c, lay.theta,
                        lay.f[j], lay.Psi[j], lay.zeta[j], lay.lam[j])
    _shared_constraints(prog, model, lay.c, lay.theta)
    return prog, lay


def constraint_template_count(model: WSEEModel) -> int:
    """Number of constraints P6 should have, counted family by family."""
    K = model.Kd + model.Ku
    per_ue = 4 * K                      # numerator, denominator, SE-log, power
    per_ap = sum(1 for i in model.ap_pairs if i.size)
    boxes = model.nc + 2 * model.Ku + 4 * K
    return per_ue + per_ap + boxes


def interior_start(model: WSEEModel, tight: SCAIterate, shrink: float,
                   qos: bool = True) -> Optional[SCAIterate]:
    """A point strictly inside the program linearized at ``tight``.

    Decision variables are pulled inward, then each slack is placed a
    relative ``shrink`` inside its own constraint, in dependency order.
    Returns None if the margin to the QoS floors is too small.
    """
    s = shrink
    cbar = np.maximum(tight.cbar * (1.0 - s), 1e-3 * s)
    theta = np.clip(tight.theta * (1.0 - s), 1e-3 * s, 1.0 - s)
    a_d = tight.lam_d / tight.zeta_d
    a_u = tight.lam_u / tight.zeta_u
    e_d = tight.Psi_d / tight.f_d
    e_u = tight.Psi_u / tight.f_u
    lam_d = (1.0 - s) * model.num_d(cbar)
    lam_u = (1.0 - s) * np.sqrt(model.A_u * theta)
    zeta_d = (1.0 - s) * (2.0 * a_d * lam_d - model.den_d(cbar, theta)) / a_d ** 2
    zeta_u = (1.0 - s) * (2.0 * a_u * lam_u - model.den_u(cbar, theta)) / a_u ** 2
    if qos and (np.any(zeta_d <= model.zmin_d) or np.any(zeta_u <= model.zmin_u)):
        return None
    if not qos and (np.any(zeta_d <= 0) or np.any(zeta_u <= 0)):
        return None
    Psi_d = (1.0 - s) * np.sqrt(model.tau_f * np.log2(1.0 + zeta_d))
    Psi_u = (1.0 - s) * np.sqrt(model.tau_f * np.log2(1.0 + zeta_u))
    f_d = (1.0 - s) * (2.0 * e_d * Psi_d - model.power_d(cbar)) / e_d ** 2
    f_u = (1.0 - s) * (2.0 * e_u * Psi_u - model.power_u(theta)) / e_u ** 2
    if qos and (np.any(f_d <= 0) or np.any(f_u <= 0)):
        return None
    return SCAIterate(cbar, theta, f_d, f_u, Psi_d, Psi_u, zeta_d, zeta_u, lam_d, lam_u)


def feasible_start(model: WSEEModel, tight: SCAIterate, prog: ConvexProgram, lay: Layout):
    for s in SHRINKS:
        it = interior_start(model, tight, s)
        if it is None:
            continue
        x0 = lay.pack(it)
        if prog.is_strictly_feasible(x0):
            return strict_interior(prog, x0, s)
    return None


def init_iterate(model: WSEEModel) -> SCAIterate:
    """EPA1 downlink and full-power uplink, with slacks set by equality.

    If that point misses a QoS floor, a line search scales the downlink
    amplitudes and then the uplink powers down in search of a point that
    meets all floors.
    """
    pc = baseline_allocation("EPA1", model.state, model.sets, model.q, model.config)
    cbar, theta = model.from_pc(pc)
    if _strict_qos(model, cbar, theta):
        return tight_iterate(model, cbar, theta)
    for factor in np.geomspace(1.0, 1e-3, 31)[1:]:
        for cb, th in ((cbar * factor, theta), (cbar, theta * factor), (cbar * factor, theta * factor)):
            if _strict_qos(model, cb, th):
                log.info("EPA1 misses QoS floors; starting from a scaled allocation (factor %.3g)", factor)
                return tight_iterate(model, cb, th)
    found = phase_one(model, cbar, theta)
    if found is not None:
        log.info("EPA1 misses QoS floors; starting from a max-min margin allocation")
        return tight_iterate(model, *found)
    se_d, se_u = model.se(cbar, theta)
    raise InfeasibleQoS(np.flatnonzero(se_d < model.config.qos_d), np.flatnonzero(se_u < model.config.qos_u))


PHASE_ONE_TARGET = 1.05   # stop once every SINR clears its floor by 5%


def phase_one(model: WSEEModel, cbar, theta, max_iter: int = 60, solver: SolverOptions = None):
    """SCA on max t s.t. SINR_j >= t * floor_j; returns (cbar, theta) or None.

    Uses the same numerator and denominator bounds as the main program, so
    every iterate is feasible for the exact SINRs and t never decreases.
    """
    zmin = np.concatenate([model.zmin_d, model.zmin_u])
    active = np.flatnonzero(zmin > 0)
    if active.size == 0:
        return cbar, theta
    cbar = np.maximum(np.asarray(cbar, dtype=float), 1e-6)
    theta = np.clip(np.asarray(theta, dtype=float), 1e-6, 1.0)
    solver = solver or SolverOptions(tol=1e-7, max_newton=3000)
    nc, Kd, Ku = model.nc, model.Kd, model.Ku
    K = Kd + Ku
    ic, ith = np.arange(nc), nc + np.arange(Ku)
    iz, il = nc + Ku + np.arange(K), nc + Ku + K + np.arange(K)
    it_ = nc + Ku + 2 * K
    best = None
    for _ in range(max_iter):
        tight = tight_iterate(model, cbar, theta)
        z = np.concatenate([tight.zeta_d, tight.zeta_u])
        ratio = float(np.min(z[active] / zmin[active]))
        if ratio >= PHASE_ONE_TARGET:
            return cbar, theta
        if best is not None and ratio <= best * (1 + 1e-6):
            return None
        best = ratio
        prog = ConvexProgram(it_ + 1)
        lin = np.zeros(prog.n)
        lin[it_] = 1.0
        prog.set_objective(lin)
        for j in range(K):
            d, jj = ("d", j) if j < Kd else ("u", j - Kd)
            _sinr_constraints(prog, model, tight, d, jj, ic, ith, iz[j], il[j])
            prog.set_box(iz[j], 0.0)
            prog.set_box(il[j], 0.0)
        for j in active:
            v = np.zeros(prog.n)
            v[iz[j]] = -1.0
            v[it_] = zmin[j]
            prog.add_affine(v, 0.0, name=f"floor{j}")
        _shared_constraints(prog, model, ic, ith)
        prog.set_box(it_, 0.0, 2.0 * PHASE_ONE_TARGET)
        x0 = None
        for sh in SHRINKS:
            st = interior_start(model, tight, sh, qos=False)
            if st is None:
                continue
            zz = np.concatenate([st.zeta_d, st.zeta_u])
            t0 = (1.0 - sh) * float(np.min(zz[active] / zmin[active]))
            x = np.concatenate([st.cbar, st.theta, zz, np.concatenate([st.lam_d, st.lam_u]), [t0]])
            if prog.is_strictly_feasible(x):
                x0 = x
                break
        if x0 is None:
            return None
        rep = solve(prog, x0, options=solver)
        if rep.status != Status.OPTIMAL:
            return None
        cbar, theta = rep.x_star[ic], rep.x_star[ith]
    return None


def _strict_qos(model, cbar, theta):
    sd, su = model.sinr(cbar, theta)
    return bool(np.all(sd > model.zmin_d * (1 + 1e-6) + 1e-12) and np.all(su > model.zmin_u * (1 + 1e-6) + 1e-12))


@dataclass
class SCAReport:
    wsee: list = field(default_factory=list)           # bandwidth omitted
    residual: list = field(default_factory=list)
    status: list = field(default_factory=list)
    iterates: list = field(default_factory=list)        # (cbar, theta) per iteration
    converged: bool = False
    iterations: int = 0
    warnings: list = field(default_factory=list)
    admm_log: list = field(default_factory=list)
    seconds: list = field(default_factory=list)       # wall clock per iteration

    def rows(self, bandwidth: float):
        out = []
        for i, (w, r, s) in enumerate(zip(self.wsee, self.residual, self.status)):
            out.append({"iter": i, "wsee": w * bandwidth, "residual": r, "solver_status": s})
        return out


def solve_step(model: WSEEModel, cbar, theta, prev_x, prev_lay, opts: OptimizerOptions):
    """One SCA step from (cbar, theta): returns (report, x, layout, program)."""
    tight = tight_iterate(model, cbar, theta)
    prog, lay = build_gcp(model, tight)
    x0 = feasible_start(model, tight, prog, lay)
    if x0 is None:
        if prev_x is None:
            raise DegenerateLinearization("no strictly feasible start for the convexified problem")
        prog, lay = build_gcp(model, prev_lay.unpack(prev_x))
        x0 = prev_x
    rep = solve(prog, x0, options=opts.solver)
    return rep, lay, prog


def run_centralized(model: WSEEModel, opts: OptimizerOptions = None, init: SCAIterate = None):
    """Algorithm with one global convex solve per SCA iteration.

    Returns (SCAReport, PowerControl).
    """
    opts = opts or OptimizerOptions()
    it = init or init_iterate(model)
    cbar, theta = it.cbar.copy(), it.theta.copy()
    rep_out = SCAReport()
    cur = model.wsee(cbar, theta)
    rep_out.wsee.append(cur)
    rep_out.residual.append(float("nan"))
    rep_out.status.append("INIT")
    rep_out.iterates.append((cbar.copy(), theta.copy()))
    prev_x, prev_lay = None, None
    for n in range(1, opts.max_sca + 1):
        t0 = time.perf_counter()
        rep, lay, _ = solve_step(model, cbar, theta, prev_x, prev_lay, opts)
        if rep.status != Status.OPTIMAL:
            raise SolverFailure(n, rep.status)
        new = lay.unpack(rep.x_star)
        res = float(np.sqrt(np.sum((new.cbar - cbar) ** 2) + np.sum((new.theta - theta) ** 2)))
        cbar, theta = new.cbar, new.theta
        prev_x, prev_lay = rep.x_star, lay
        val = model.wsee(cbar, theta)
        if val < cur - opts.monotone_tol:
            msg = f"WSEE decreased at iteration {n}: {cur:.9g} -> {val:.9g}"
            rep_out.warnings.append(msg)
            warnings.warn(msg, RuntimeWarning)
        cur = val
        rep_out.wsee.append(val)
        rep_out.residual.append(res)
        rep_out.status.append(rep.status.value)
        rep_out.iterates.append((cbar.copy(), theta.copy()))
        rep_out.seconds.append(time.perf_counter() - t0)
        rep_out.iterations = n
        if res <= opts.eps_sca:
            rep_out.converged = True
            break
    return rep_out, model.to_pc(cbar, theta)
