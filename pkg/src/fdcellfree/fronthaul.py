"""Fronthaul-limited user-centric AP selection."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import ConfigError, SystemConfig
from .topology import LargeScaleState


class SelectionInfeasible(RuntimeError):
    def __init__(self, direction: str, ue: int):
        self.direction = direction
        self.ue = ue
        super().__init__(f"cannot attach {direction} UE {ue}: no evictable UE at any AP")


@dataclass
class ServingSets:
    """Serving relations stored as boolean masks.

    ``mask_d[m, k]`` is True iff AP m serves downlink UE k, so the per-AP
    sets and per-UE sets are two views of the same array.
    """

    mask_d: np.ndarray  # (M, Kd)
    mask_u: np.ndarray  # (M, Ku)
    evictions: list = field(default_factory=list)

    @property
    def kappa_d(self):
        return [np.flatnonzero(r) for r in self.mask_d]

    @property
    def kappa_u(self):
        return [np.flatnonzero(r) for r in self.mask_u]

    @property
    def M_d(self):
        return [np.flatnonzero(c) for c in self.mask_d.T]

    @property
    def M_u(self):
        return [np.flatnonzero(c) for c in self.mask_u.T]

    @property
    def K_dm(self) -> np.ndarray:
        return self.mask_d.sum(axis=1)

    @property
    def K_um(self) -> np.ndarray:
        return self.mask_u.sum(axis=1)


def max_served(config: SystemConfig, m: int):
    """Per-AP caps (cap_dm, cap_um) on served downlink and uplink UEs."""
    nu = config.nu_m[m]
    C = config.C_fh_m[m]
    base = C * config.Tc / (config.fronthaul_cap_denominator * (config.tau_c - config.tau_t) * nu)
    cap_d = int(np.floor(config.Kd / config.K * base + 1e-12))
    cap_u = int(np.floor(config.Ku / config.K * base + 1e-12))
    return min(config.Kd, cap_d), min(config.Ku, cap_u)


def all_caps(config: SystemConfig) -> np.ndarray:
    caps = np.array([max_served(config, m) for m in range(config.M)], dtype=int)
    if not caps.any():
        raise ConfigError("C_fh", "fronthaul too small: every AP has zero caps in both directions")
    return caps


def fronthaul_rate(K_dm, K_um, nu_m, config: SystemConfig):
    """Fronthaul data rate (bit/s) of an AP serving the given UE counts."""
    return 2.0 * np.asarray(nu_m) * (np.asarray(K_dm) + np.asarray(K_um)) * (config.tau_c - config.tau_t) / config.Tc


def ap_rates(sets: ServingSets, config: SystemConfig) -> np.ndarray:
    return fronthaul_rate(sets.K_dm, sets.K_um, config.nu_m, config)


def _top(beta_row, cap):
    # stable descending order: equal gains keep the lower index first
    order = np.argsort(-beta_row, kind="stable")
    return order[:cap]


def _repair(mask, beta, direction, log):
    M, K = mask.shape
    for k in range(K):
        if mask[:, k].any():
            continue
        attached = False
        for m in np.argsort(-beta[:, k], kind="stable"):
            served = np.flatnonzero(mask[m])
            evictable = [q for q in served if mask[:, q].sum() >= 2]
            if not evictable:
                continue
            gains = beta[m, evictable]
            # weakest link; on equal gains the lowest index is evicted
            q = evictable[int(np.flatnonzero(gains == gains.min())[0])]
            mask[m, q] = False
            mask[m, k] = True
            log.append((direction, int(m), int(q), int(k)))
            attached = True
            break
        if not attached:
            raise SelectionInfeasible(direction, k)


def select_aps(state: LargeScaleState, caps, config: SystemConfig) -> ServingSets:
    """Each AP keeps its strongest UEs up to its caps, then orphans are repaired.

    An orphan attaches to its strongest AP by evicting that AP's weakest UE
    among those with at least two serving APs. If that AP has no such UE the
    next-strongest AP is tried.
    """
    caps = np.asarray(caps, dtype=int)
    M, Kd = state.beta_d.shape
    Ku = state.beta_u.shape[1]
    mask_d = np.zeros((M, Kd), dtype=bool)
    mask_u = np.zeros((M, Ku), dtype=bool)
    for m in range(M):
        mask_d[m, _top(state.beta_d[m], caps[m, 0])] = True
        mask_u[m, _top(state.beta_u[m], caps[m, 1])] = True
    log: list = []
    _repair(mask_d, state.beta_d, "d", log)
    _repair(mask_u, state.beta_u, "u", log)
    return ServingSets(mask_d=mask_d, mask_u=mask_u, evictions=log)


def full_service(config: SystemConfig) -> ServingSets:
    """Every AP serves every UE (unlimited fronthaul)."""
    return ServingSets(mask_d=np.ones((config.M, config.Kd), dtype=bool),
                       mask_u=np.ones((config.M, config.Ku), dtype=bool))
