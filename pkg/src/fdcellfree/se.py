"""Closed-form SE lower bounds, power consumption and energy efficiency."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .config import SystemConfig
from .fronthaul import ServingSets, ap_rates
from .quantizer import QuantizerParams
from .rng import as_generator
from .topology import LargeScaleState


@dataclass(frozen=True)
class SEBoundCoefficients:
    tau_f: float
    A_d: np.ndarray  # (M, Kd)
    B_d: np.ndarray  # (Kd, M, Kd): [k, m, q]
    D_d: np.ndarray  # (Kd, Ku)
    A_u: np.ndarray  # (Ku,)
    B_u: np.ndarray  # (Ku, Ku)
    D_u: np.ndarray  # (Ku, M, Kd): [l, i, k]
    E_u: np.ndarray  # (Ku,)
    F_u: np.ndarray  # (Ku,)


@dataclass(frozen=True)
class PowerControl:
    eta: np.ndarray    # (M, Kd), zero off the serving set
    theta: np.ndarray  # (Ku,)

    @property
    def c(self) -> np.ndarray:
        return np.sqrt(self.eta)

    @classmethod
    def from_amplitudes(cls, c, theta):
        c = np.asarray(c, dtype=float)
        return cls(eta=c * c, theta=np.asarray(theta, dtype=float))


@dataclass(frozen=True)
class EnergyReport:
    se_d: np.ndarray
    se_u: np.ndarray
    p_d: np.ndarray
    p_u: np.ndarray
    ee_d: np.ndarray
    ee_u: np.ndarray
    wsee: float

    @property
    def sum_se(self) -> float:
        return float(self.se_d.sum() + self.se_u.sum())


def se_coefficients(state: LargeScaleState, sets: ServingSets, q: QuantizerParams,
                    config: SystemConfig) -> SEBoundCoefficients:
    a, b = q.a_tilde, q.b_tilde
    Nt, Nr = config.Nt, config.Nr
    rho_d, rho_u = config.rho_d, config.rho_u
    md = sets.mask_d.astype(float)
    mu = sets.mask_u.astype(float)
    gd = state.gamma_d * md          # gamma restricted to served pairs
    gu = state.gamma_u * mu

    A_d = a * Nt * np.sqrt(rho_d) * gd
    B_d = b * Nt * rho_d * np.einsum("mk,mq->kmq", state.beta_d, gd)
    D_d = rho_u * state.beta_udi
    sum_gu = gu.sum(axis=0)
    A_u = a * a * Nr * Nr * rho_u * sum_gu ** 2
    B_u = b * Nr * rho_u * gu.T @ state.beta_u
    ri = gu.T @ (state.beta_ri * config.gamma_RI)           # (Ku, M) over i
    D_u = b * b * Nr * Nt * rho_d * ri[:, :, None] * gd[None, :, :]
    E_u = (b - a * a) * Nr * Nr * rho_u * (gu ** 2).sum(axis=0)
    F_u = b * Nr * sum_gu
    return SEBoundCoefficients(config.tau_f, A_d, B_d, D_d, A_u, B_u, D_u, E_u, F_u)


def sinr_lb(coeffs: SEBoundCoefficients, pc: PowerControl):
    c = np.sqrt(pc.eta)
    th = pc.theta
    num_d = np.einsum("mk,mk->k", coeffs.A_d, c) ** 2
    den_d = np.einsum("kmq,mq->k", coeffs.B_d, pc.eta) + coeffs.D_d @ th + 1.0
    num_u = coeffs.A_u * th
    den_u = (coeffs.B_u @ th + np.einsum("lik,ik->l", coeffs.D_u, pc.eta)
             + coeffs.E_u * th + coeffs.F_u)
    with np.errstate(divide="ignore", invalid="ignore"):
        sinr_u = np.where(num_u > 0, num_u / den_u, 0.0)
    return num_d / den_d, sinr_u


def se_lb(coeffs: SEBoundCoefficients, pc: PowerControl):
    """Per-UE SE lower bounds (bit/s/Hz) for downlink and uplink UEs."""
    sd, su = sinr_lb(coeffs, pc)
    return coeffs.tau_f * np.log2(1.0 + sd), coeffs.tau_f * np.log2(1.0 + su)


def fixed_power(sets: ServingSets, config: SystemConfig) -> float:
    """Fixed power share per UE: AP static power, transceiver chains and
    traffic-proportional fronthaul power, spread over all K UEs."""
    R = ap_rates(sets, config)
    per_ap = config.P0m + (config.Nt + config.Nr) * config.Ptc_m + config.P_ft * R / config.C_fh_m
    return float(per_ap.sum() / config.K)


def power_model(pc: PowerControl, sets: ServingSets, state: LargeScaleState,
                q: QuantizerParams, config: SystemConfig):
    """Per-UE consumed power (W) for downlink and uplink UEs."""
    P_fix = fixed_power(sets, config)
    tx_d = config.Nt * config.p_d * np.einsum("mk,mk->k", state.gamma_d * sets.mask_d, pc.eta) / config.alpha_m
    p_d = P_fix + tx_d + config.Ptc_dk
    p_u = P_fix + config.p_u * pc.theta / config.alpha_l + config.Ptc_ul
    return p_d, p_u


def energy_report(se_d, se_u, p_d, p_u, config: SystemConfig, bandwidth: float = None) -> EnergyReport:
    B = config.B if bandwidth is None else bandwidth
    ee_d = B * np.asarray(se_d) / p_d
    ee_u = B * np.asarray(se_u) / p_u
    w = float(config.weights_d @ ee_d + config.weights_u @ ee_u)
    return EnergyReport(np.asarray(se_d), np.asarray(se_u), p_d, p_u, ee_d, ee_u, w)


def evaluate(pc: PowerControl, coeffs: SEBoundCoefficients, sets: ServingSets,
             state: LargeScaleState, q: QuantizerParams, config: SystemConfig,
             bandwidth: float = None) -> EnergyReport:
    se_d, se_u = se_lb(coeffs, pc)
    p_d, p_u = power_model(pc, sets, state, q, config)
    return energy_report(se_d, se_u, p_d, p_u, config, bandwidth)


def wsee(pc, coeffs, sets, state, q, config, bandwidth: float = None) -> float:
    return evaluate(pc, coeffs, sets, state, q, config, bandwidth).wsee


def max_amplitude(state: LargeScaleState, sets: ServingSets, q: QuantizerParams,
                  config: SystemConfig) -> np.ndarray:
    """Largest feasible c_mk when AP m serves only UE k (zero off the set)."""
    g = state.gamma_d * sets.mask_d
    with np.errstate(divide="ignore"):
        s = np.where(g > 0, 1.0 / np.sqrt(q.b_tilde * config.Nt * np.where(g > 0, g, 1.0)), 0.0)
    return s


def per_ap_load(pc: PowerControl, state: LargeScaleState, sets: ServingSets,
                q: QuantizerParams, config: SystemConfig) -> np.ndarray:
    """Left side of the per-AP power constraint scaled so that 1 is the limit."""
    return q.b_tilde * config.Nt * (state.gamma_d * sets.mask_d * pc.eta).sum(axis=1)


def baseline_allocation(kind: str, state: LargeScaleState, sets: ServingSets,
                        q: QuantizerParams, config: SystemConfig, seed=0) -> PowerControl:
    """EPA1, EPA2 or RPA power coefficients."""
    g = state.gamma_d * sets.mask_d
    tot = g.sum(axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        epa1 = np.where(sets.mask_d, 1.0 / (q.b_tilde * config.Nt * tot), 0.0)
    theta = np.ones(config.Ku)
    kind = kind.upper()
    if kind == "EPA1":
        return PowerControl(eta=epa1, theta=theta)
    if kind == "EPA2":
        Kdm = sets.K_dm[:, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            eta = np.where(sets.mask_d, 1.0 / (q.b_tilde * config.Nt * Kdm * np.where(g > 0, g, 1.0)), 0.0)
        return PowerControl(eta=eta, theta=theta)
    if kind == "RPA":
        rng = as_generator(seed, "rpa")
        return PowerControl(eta=epa1 * rng.uniform(size=epa1.shape), theta=rng.uniform(size=config.Ku))
    raise ValueError(f"unknown baseline {kind!r}")


def hd_equivalent_sum_se(state: LargeScaleState, sets: ServingSets, q: QuantizerParams,
                         pc: PowerControl, config: SystemConfig, halve: bool = True) -> float:
    """Sum SE of the half-duplex counterpart.

    No residual or UE-to-UE interference, every AP uses all Nt + Nr antennas,
    and the time split halves the sum SE. ``pc=None`` uses EPA1 sized for the
    larger array.
    """
    N = config.Nt + config.Nr
    hd_cfg = config.with_(Nt=N, Nr=N, gamma_RI=0.0)
    hd_state = replace(state, beta_udi=np.zeros_like(state.beta_udi))
    if pc is None:
        pc = baseline_allocation("EPA1", hd_state, sets, q, hd_cfg)
    se_d, se_u = se_lb(se_coefficients(hd_state, sets, q, hd_cfg), pc)
    total = float(se_d.sum() + se_u.sum())
    return 0.5 * total if halve else total


def fd_sum_se(state, sets, q, pc, config) -> float:
    se_d, se_u = se_lb(se_coefficients(state, sets, q, config), pc)
    return float(se_d.sum() + se_u.sum())
