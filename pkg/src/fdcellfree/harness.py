"""Experiment specs, key = value config files and CSV-producing experiment runs."""
from __future__ import annotations

import ast
import csv
import hashlib
import io
import math
import os
import warnings
from dataclasses import dataclass, field, fields, replace
from typing import Optional

import numpy as np

from .admm import run_decentralized
from .config import ConfigError, SystemConfig, db_to_lin, dbm_to_watt
from .fronthaul import all_caps, ap_rates, select_aps
from .montecarlo import closed_form_terms, mc_ergodic_se, mc_term_powers
from .quantizer import quantizer_for, quantizer_table
from .rng import substream
from .sca import InfeasibleQoS, OptimizerOptions, SolverFailure, WSEEModel, run_centralized
from .se import (baseline_allocation, evaluate, fd_sum_se, hd_equivalent_sum_se,
                 se_coefficients, se_lb)
from .topology import deploy, large_scale

EXPERIMENTS = ("quantizer-table", "topology-dump", "validate-bound", "term-oracle", "sweep-power",
               "sweep-nu", "sweep-ri", "optimize-wsee", "compare-hd")
MODES = ("central", "admm")
MC_MODES = ("direct", "pilot")

_SCENARIO = {f.name: f for f in fields(SystemConfig)}
_INT_FIELDS = {"M", "Nt", "Nr", "Kd", "Ku", "tau_c", "tau_td", "tau_tu", "fronthaul_cap_denominator"}
_SEQ_FIELDS = {"nu", "C_fh", "w_d", "w_u", "S_od", "S_ou"}
# aliases converted from dB / dBm; p_dbm follows the p_d = 2 p_u sweep convention
_DB_ALIASES = {"gamma_RI_db": "gamma_RI", "N0_db": "N0", "p_d_dbm": "p_d", "p_u_dbm": "p_u",
               "p_t_dbm": "p_t", "p_dbm": ("p_d", "p_u")}


@dataclass(frozen=True)
class ExperimentSpec:
    experiment: str = "optimize-wsee"
    scenario: SystemConfig = field(default_factory=SystemConfig)
    p_dbm_grid: tuple = (10.0, 20.0, 30.0)
    gamma_RI_db_grid: tuple = (-40.0, -30.0, -20.0, -10.0, 0.0)
    nu_grid: tuple = (1, 2, 3, 4)
    C_fh_grid: Optional[tuple] = None   # None: the scenario value only
    trials: int = 100
    seed: int = 0
    out: str = "out"
    mode: str = "central"
    mc_mode: str = "direct"
    optimize: bool = False
    workers: int = 1
    eps_sca: float = 1e-3
    max_sca: int = 100
    eps_admm: float = 0.01
    max_admm: int = 500
    rho0: float = 0.1
    mu_admm: float = 10.0
    vartheta: float = 1.2

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError("experiment", f"unknown experiment {self.experiment!r}; choose from {', '.join(EXPERIMENTS)}")
        if self.mode not in MODES:
            raise ConfigError("mode", f"must be one of {MODES}")
        if self.mc_mode not in MC_MODES:
            raise ConfigError("mc_mode", f"must be one of {MC_MODES}")
        for name in ("p_dbm_grid", "gamma_RI_db_grid", "nu_grid", "C_fh_grid"):
            v = getattr(self, name)
            if v is not None and len(v) == 0:
                raise ConfigError(name, "grid must be nonempty")
        if any(int(n) < 1 or int(n) > 8 for n in self.nu_grid):
            raise ConfigError("nu_grid", "bits must be in 1..8")
        if self.C_fh_grid is not None and any(c <= 0 for c in self.C_fh_grid):
            raise ConfigError("C_fh_grid", "capacities must be > 0")
        if self.trials < 1:
            raise ConfigError("trials", "must be >= 1")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed", "must be an unsigned 64-bit integer")
        if self.workers < 1:
            raise ConfigError("workers", "must be >= 1")
        for name in ("eps_sca", "eps_admm", "rho0"):
            if not getattr(self, name) > 0:
                raise ConfigError(name, "must be > 0")
        if not (self.mu_admm > 1 and self.vartheta > 1):
            raise ConfigError("vartheta", "mu_admm and vartheta must be > 1")
        if self.max_sca < 1 or self.max_admm < 1:
            raise ConfigError("max_sca", "iteration caps must be >= 1")

    @property
    def options(self) -> OptimizerOptions:
        return OptimizerOptions(eps_sca=self.eps_sca, max_sca=self.max_sca, eps_admm=self.eps_admm,
                                max_admm=self.max_admm, rho0=self.rho0, mu_admm=self.mu_admm,
                                vartheta=self.vartheta)

    @property
    def capacities(self) -> tuple:
        return self.C_fh_grid if self.C_fh_grid is not None else (self.scenario.C_fh,)


_SPEC_FIELDS = {f.name: f for f in fields(ExperimentSpec) if f.name != "scenario"}
_SPEC_INT = {"trials", "seed", "workers", "max_sca", "max_admm"}
_SPEC_STR = {"experiment", "out", "mode", "mc_mode"}
_SPEC_GRIDS = {"p_dbm_grid", "gamma_RI_db_grid", "nu_grid", "C_fh_grid"}


# parsing

def _literal(key, text):
    text = text.strip()
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    if low in ("none", ""):
        return None
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        if "," in text:
            return tuple(_literal(key, t) for t in text.split(","))
        return text


def _as_int(key, v):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or (isinstance(v, float) and not v.is_integer()):
        raise ConfigError(key, f"expected an integer, got {v!r}")
    return int(v)


def _as_float(key, v):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(key, f"expected a number, got {v!r}")
    if not math.isfinite(v):
        raise ConfigError(key, "must be finite")
    return float(v)


def _as_seq(key, v, conv):
    if isinstance(v, (list, tuple)):
        return tuple(conv(key, x) for x in v)
    return (conv(key, v),)


def parse_config(text: str) -> ExperimentSpec:
    """Parse a ``key = value`` document; ``#`` starts a comment.

    Omitted scenario keys take the reference parameter defaults. Lists are
    written comma separated or in brackets.
    """
    scen, spec, seen = {}, {}, set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", "expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        if key in seen:
            raise ConfigError(key, "given more than once")
        seen.add(key)
        v = _literal(key, val)
        if key in _SCENARIO:
            if key in scen:
                raise ConfigError(key, "conflicts with a dB setting of the same quantity")
            if key in _SEQ_FIELDS:
                conv = _as_int if key == "nu" else _as_float
                if v is None and key in ("w_d", "w_u"):
                    scen[key] = None
                else:
                    seq = _as_seq(key, v, conv)
                    scen[key] = seq[0] if len(seq) == 1 and key not in ("w_d", "w_u") else seq
            elif key in _INT_FIELDS:
                scen[key] = None if v is None and key in ("tau_td", "tau_tu") else _as_int(key, v)
            else:
                scen[key] = _as_float(key, v)
        elif key in _DB_ALIASES:
            target = _DB_ALIASES[key]
            x = _as_float(key, v)
            if key == "p_dbm":
                w = float(dbm_to_watt(x))
                vals = {"p_d": w, "p_u": w / 2.0}
            elif key.endswith("_dbm"):
                vals = {target: float(dbm_to_watt(x))}
            else:
                vals = {target: float(db_to_lin(x))}
            for t, w in vals.items():
                if t in scen:
                    raise ConfigError(key, f"conflicts with another setting of {t}")
                scen[t] = w
        elif key in _SPEC_FIELDS:
            if key in _SPEC_GRIDS:
                if v is None and key == "C_fh_grid":
                    spec[key] = None
                else:
                    spec[key] = _as_seq(key, v, _as_int if key == "nu_grid" else _as_float)
            elif key in _SPEC_INT:
                spec[key] = _as_int(key, v)
            elif key in _SPEC_STR:
                spec[key] = str(v)
            elif key == "optimize":
                if not isinstance(v, bool):
                    raise ConfigError(key, "expected true or false")
                spec[key] = v
            else:
                spec[key] = _as_float(key, v)
        else:
            raise ConfigError(key, "unknown key")
    try:
        scenario = SystemConfig(**scen)
    except TypeError as e:
        raise ConfigError("scenario", str(e)) from None
    return ExperimentSpec(scenario=scenario, **spec)


def _fmt(v):
    if isinstance(v, tuple):
        return ", ".join(_fmt(x) for x in v) if len(v) != 1 else f"[{_fmt(v[0])}]"
    if isinstance(v, bool):
        return "true" if v else "false"
    if v is None:
        return "none"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def emit_config(spec: ExperimentSpec) -> str:
    """Canonical text form: every experiment key, plus scenario keys that differ from the defaults."""
    lines = []
    for name in _SPEC_FIELDS:
        lines.append(f"{name} = {_fmt(getattr(spec, name))}")
    default = SystemConfig(Kd=spec.scenario.Kd, Ku=spec.scenario.Ku)
    for name in _SCENARIO:
        v = getattr(spec.scenario, name)
        if v != getattr(default, name) or name in ("Kd", "Ku"):
            lines.append(f"{name} = {_fmt(v)}")
    return "\n".join(lines) + "\n"


def config_hash(spec: ExperimentSpec) -> str:
    return hashlib.sha256(emit_config(replace(spec, out="")).encode("utf-8")).hexdigest()[:16]


def load_config(path) -> ExperimentSpec:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


# instances

def _quantizer(cfg: SystemConfig):
    nus = np.unique(cfg.nu_m)
    if nus.size != 1:
        raise ConfigError("nu", "the bound needs one bit width shared by all APs")
    return quantizer_for(int(nus[0]))


def instance(cfg: SystemConfig, seed: int, trial: int):
    """(state, sets, q) of deployment ``trial`` under the master ``seed``."""
    dep = deploy(cfg, substream(seed, "deploy", trial))
    state = large_scale(dep, cfg, substream(seed, "large_scale", trial))
    sets = select_aps(state, all_caps(cfg), cfg)
    return dep, state, sets, _quantizer(cfg)


def optimize(state, sets, q, cfg, spec: ExperimentSpec):
    model = WSEEModel.build(state, sets, q, cfg)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        if spec.mode == "admm":
            return run_decentralized(model, spec.options, workers=spec.workers, bandwidth=cfg.B)
        return run_centralized(model, spec.options)


def _baselines(state, sets, q, cfg, coeffs, seed, trial):
    out = {}
    for kind in ("EPA1", "EPA2", "RPA"):
        pc = baseline_allocation(kind, state, sets, q, cfg, seed=substream(seed, "rpa", trial))
        out[kind] = evaluate(pc, coeffs, sets, state, q, cfg)
    return out


# experiments (each returns {file stem: rows})

def exp_quantizer_table(spec):
    rows = [{"nu": p.nu, "delta_opt": p.delta, "a_tilde": p.a_tilde, "b_minus_a2": p.distortion}
            for p in quantizer_table()]
    return {"quantizer_table": rows}


def exp_topology_dump(spec):
    cfg = spec.scenario
    dep, state, sets, q = instance(cfg, spec.seed, 0)
    caps = all_caps(cfg)
    R = ap_rates(sets, cfg)
    aps = [{"ap": m, "x": dep.ap[m, 0], "y": dep.ap[m, 1], "cap_d": int(caps[m, 0]), "cap_u": int(caps[m, 1]),
            "K_dm": int(sets.K_dm[m]), "K_um": int(sets.K_um[m]), "R_fh": R[m], "C_fh": cfg.C_fh_m[m]}
           for m in range(cfg.M)]
    ues = [{"direction": "d", "ue": k, "x": dep.dl[k, 0], "y": dep.dl[k, 1],
            "n_serving": int(sets.mask_d[:, k].sum())} for k in range(cfg.Kd)]
    ues += [{"direction": "u", "ue": l, "x": dep.ul[l, 0], "y": dep.ul[l, 1],
             "n_serving": int(sets.mask_u[:, l].sum())} for l in range(cfg.Ku)]
    ev = [{"direction": d, "ap": m, "evicted": e, "attached": o} for d, m, e, o in sets.evictions]
    return {"topology_aps": aps, "topology_ues": ues, "topology_evictions": ev}


def exp_validate_bound(spec):
    rows, summary = [], []
    for p in spec.p_dbm_grid:
        cfg = spec.scenario.with_power_dbm(p)
        _, state, sets, q = instance(cfg, spec.seed, 0)
        pc = baseline_allocation("EPA1", state, sets, q, cfg)
        lb_d, lb_u = se_lb(se_coefficients(state, sets, q, cfg), pc)
        ub_d, ub_u, se_d, se_u = mc_ergodic_se(state, sets, q, pc, cfg, max(2, spec.trials),
                                               spec.seed, mode=spec.mc_mode)
        for d, lb, ub, se in (("d", lb_d, ub_d, se_d), ("u", lb_u, ub_u, se_u)):
            for j in range(lb.size):
                rows.append({"p_dbm": p, "direction": d, "ue": j, "lb": lb[j], "ub": ub[j], "stderr": se[j],
                             "valid": bool(lb[j] <= ub[j] + 3.0 * se[j])})
        s_lb = float(lb_d.sum() + lb_u.sum())
        s_ub = float(ub_d.sum() + ub_u.sum())
        summary.append({"p_dbm": p, "sum_lb": s_lb, "sum_ub": s_ub, "ratio": s_lb / s_ub})
    return {"validate_bound": rows, "validate_bound_summary": summary}


def exp_term_oracle(spec):
    cfg = spec.scenario
    _, state, sets, q = instance(cfg, spec.seed, 0)
    pc = baseline_allocation("EPA1", state, sets, q, cfg)
    cf = closed_form_terms(state, sets, q, pc, cfg)
    mc, rse = mc_term_powers(state, sets, q, pc, cfg, max(2, spec.trials), spec.seed,
                             mode=spec.mc_mode)
    rows = []
    for d in "du":
        for term in mc[d]:
            for j in range(mc[d][term].size):
                a, b = cf[d][term][j], mc[d][term][j]
                rows.append({"direction": d, "ue": j, "term": term, "closed_form": a, "monte_carlo": b,
                             "rel_err": abs(a - b) / abs(b) if b != 0 else float("nan"),
                             "rel_stderr": rse[d][term][j]})
    return {"term_oracle": rows}


def _opt_row(state, sets, q, cfg, coeffs, spec):
    try:
        rep, pc = optimize(state, sets, q, cfg, spec)
    except InfeasibleQoS:
        return {"wsee_opt": float("nan"), "sum_se_opt": float("nan"), "opt_status": "infeasible_qos"}
    except SolverFailure:
        return {"wsee_opt": float("nan"), "sum_se_opt": float("nan"), "opt_status": "solver_failure"}
    r = evaluate(pc, coeffs, sets, state, q, cfg)
    return {"wsee_opt": r.wsee, "sum_se_opt": r.sum_se,
            "opt_status": "converged" if rep.converged else "max_iter"}


def exp_sweep_power(spec):
    rows = []
    for p in spec.p_dbm_grid:
        cfg = spec.scenario.with_power_dbm(p)
        for t in range(spec.trials):
            _, state, sets, q = instance(cfg, spec.seed, t)
            coeffs = se_coefficients(state, sets, q, cfg)
            base = _baselines(state, sets, q, cfg, coeffs, spec.seed, t)
            row = {"p_dbm": p, "trial": t, "sum_se_epa1": base["EPA1"].sum_se,
                   "wsee_epa1": base["EPA1"].wsee, "wsee_epa2": base["EPA2"].wsee, "wsee_rpa": base["RPA"].wsee}
            if spec.optimize:
                row.update(_opt_row(state, sets, q, cfg, coeffs, spec))
            rows.append(row)
    return {"sweep_power": rows}


def exp_sweep_nu(spec):
    rows = []
    for C in spec.capacities:
        for nu in spec.nu_grid:
            cfg = spec.scenario.with_(C_fh=C, nu=int(nu))
            caps = all_caps(cfg)
            for t in range(spec.trials):
                _, state, sets, q = instance(cfg, spec.seed, t)
                coeffs = se_coefficients(state, sets, q, cfg)
                base = evaluate(baseline_allocation("EPA1", state, sets, q, cfg), coeffs, sets, state, q, cfg)
                row = {"C_fh": C, "nu": int(nu), "trial": t, "cap_d": int(caps[0, 0]), "cap_u": int(caps[0, 1]),
                       "R_fh_max": float(ap_rates(sets, cfg).max()),
                       "sum_se_epa1": base.sum_se, "wsee_epa1": base.wsee}
                row.update(_opt_row(state, sets, q, cfg, coeffs, spec))
                rows.append(row)
    return {"sweep_nu": rows}


def _fd_hd_rows(spec, key, grid, make_cfg):
    rows = []
    for g in grid:
        cfg = make_cfg(g)
        for t in range(spec.trials):
            _, state, sets, q = instance(cfg, spec.seed, t)
            pc = baseline_allocation("EPA1", state, sets, q, cfg)
            rows.append({key: g, "trial": t, "sum_se_fd": fd_sum_se(state, sets, q, pc, cfg),
                         "sum_se_hd": hd_equivalent_sum_se(state, sets, q, None, cfg)})
    return rows


def exp_sweep_ri(spec):
    return {"sweep_ri": _fd_hd_rows(spec, "gamma_RI_db", spec.gamma_RI_db_grid,
                                    lambda g: spec.scenario.with_(gamma_RI=float(db_to_lin(g))))}


def exp_compare_hd(spec):
    return {"compare_hd": _fd_hd_rows(spec, "p_dbm", spec.p_dbm_grid, spec.scenario.with_power_dbm)}


def exp_optimize_wsee(spec):
    cfg = spec.scenario
    _, state, sets, q = instance(cfg, spec.seed, 0)
    coeffs = se_coefficients(state, sets, q, cfg)
    rep, pc = optimize(state, sets, q, cfg, spec)
    r = evaluate(pc, coeffs, sets, state, q, cfg)
    files = {"optimize_wsee_sca": rep.rows(cfg.B)}
    alloc = []
    for d, se, pw, ee, w in (("d", r.se_d, r.p_d, r.ee_d, cfg.weights_d), ("u", r.se_u, r.p_u, r.ee_u, cfg.weights_u)):
        for j in range(se.size):
            alloc.append({"direction": d, "ue": j, "se": se[j], "power_w": pw[j], "ee": ee[j], "weight": w[j]})
    files["optimize_wsee_allocation"] = alloc
    base = _baselines(state, sets, q, cfg, coeffs, spec.seed, 0)
    files["optimize_wsee_baselines"] = (
        [{"scheme": f"OPT-{spec.mode}", "wsee": r.wsee, "sum_se": r.sum_se}]
        + [{"scheme": k, "wsee": v.wsee, "sum_se": v.sum_se} for k, v in base.items()])
    if spec.mode == "admm":
        files["optimize_wsee_admm"] = rep.admm_log
    # wall clock is kept apart so the other files stay byte-identical across runs
    files["optimize_wsee_timing"] = [{"iter": i + 1, "seconds": s} for i, s in enumerate(rep.seconds)]
    return files


RUNNERS = {
    "quantizer-table": exp_quantizer_table,
    "topology-dump": exp_topology_dump,
    "validate-bound": exp_validate_bound,
    "term-oracle": exp_term_oracle,
    "sweep-power": exp_sweep_power,
    "sweep-nu": exp_sweep_nu,
    "sweep-ri": exp_sweep_ri,
    "compare-hd": exp_compare_hd,
    "optimize-wsee": exp_optimize_wsee,
}


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)


def csv_text(rows, spec: ExperimentSpec) -> str:
    buf = io.StringIO()
    buf.write(f"# config_hash={config_hash(spec)} seed={spec.seed} experiment={spec.experiment}\n")
    if rows:
        w = csv.writer(buf, lineterminator="\n")
        header = list(rows[0].keys())
        w.writerow(header)
        for r in rows:
            w.writerow([_cell(r.get(h, "")) for h in header])
    return buf.getvalue()


def run(spec: ExperimentSpec):
    """Run one experiment and write its CSVs under ``spec.out``; returns the paths."""
    files = RUNNERS[spec.experiment](spec)
    os.makedirs(spec.out, exist_ok=True)
    paths = []
    for stem, rows in files.items():
        path = os.path.join(spec.out, f"{stem}.csv")
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(csv_text(rows, spec))
        paths.append(path)
    return paths
