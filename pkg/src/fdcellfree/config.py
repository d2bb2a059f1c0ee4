"""Scenario configuration for full-duplex cell-free networks.

All powers are linear watts, distances are km, rates are bit/s. Normalized
SNRs are derived from the powers and the noise level and never stored.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from typing import Optional, Sequence, Union

import numpy as np


class ConfigError(ValueError):
    """Invalid scenario or experiment configuration."""

    def __init__(self, field_name: str, message: str):
        self.field = field_name
        super().__init__(f"{field_name}: {message}")


def db_to_lin(x_db):
    return 10.0 ** (np.asarray(x_db, dtype=float) / 10.0)


def lin_to_db(x):
    return 10.0 * np.log10(x)


def dbm_to_watt(p_dbm):
    return 10.0 ** ((np.asarray(p_dbm, dtype=float) - 30.0) / 10.0)


Scalars = Union[float, Sequence[float]]

NOISE_DBW = -121.4


@dataclass(frozen=True)
class SystemConfig:
    """Every scenario constant. Defaults follow the reference parameter table.

    ``nu`` and ``C_fh`` may be a scalar (shared by all APs) or one value per
    AP. ``w_d`` / ``w_u`` default to equal weights 1/K. ``S_od`` / ``S_ou``
    are QoS floors in bit/s/Hz, scalar or per UE.
    """

    M: int = 32
    Nt: int = 8
    Nr: int = 8
    Kd: int = 12
    Ku: int = 8
    D: float = 1.0
    tau_c: int = 200
    tau_td: Optional[int] = None
    tau_tu: Optional[int] = None
    Tc: float = 1e-3
    p_t: float = 0.2
    p_d: float = 1.0
    p_u: float = 0.5
    N0: float = float(10.0 ** (NOISE_DBW / 10.0))
    sigma_sd: float = 2.0
    delta: float = 0.5
    gamma_RI: float = 0.01
    PL_RI: float = -81.1846
    nu: Union[int, tuple] = 2
    C_fh: Union[float, tuple] = 10e6
    alpha_m: float = 0.39
    alpha_l: float = 0.3
    P0m: float = 0.825
    Ptc_m: float = 0.2
    P_ft: float = 10.0
    Ptc_dk: float = 0.2
    Ptc_ul: float = 0.2
    w_d: Optional[tuple] = None
    w_u: Optional[tuple] = None
    S_od: Union[float, tuple] = 0.0
    S_ou: Union[float, tuple] = 0.0
    B: float = 20e6
    d0: float = 0.01
    d1: float = 0.05
    L_db: float = 140.72
    fronthaul_cap_denominator: int = 4

    def __post_init__(self):
        for name in ("nu", "C_fh", "w_d", "w_u", "S_od", "S_ou"):
            v = getattr(self, name)
            if isinstance(v, (list, tuple, np.ndarray)):
                v = tuple(float(x) if name != "nu" else int(x) for x in v)
                # a one-element per-AP or per-UE list is the shared scalar
                if len(v) == 1 and name not in ("w_d", "w_u"):
                    v = v[0]
                object.__setattr__(self, name, v)
        if self.tau_td is None:
            object.__setattr__(self, "tau_td", int(self.Kd))
        if self.tau_tu is None:
            object.__setattr__(self, "tau_tu", int(self.Ku))
        self.validate()

    def validate(self):
        for name in ("M", "Nt", "Nr", "Kd", "Ku"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(name, "must be >= 1")
        if self.D <= 0:
            raise ConfigError("D", "must be > 0")
        if self.tau_td < self.Kd:
            raise ConfigError("tau_td", f"needs tau_td >= Kd = {self.Kd}")
        if self.tau_tu < self.Ku:
            raise ConfigError("tau_tu", f"needs tau_tu >= Ku = {self.Ku}")
        if self.tau_td + self.tau_tu >= self.tau_c:
            raise ConfigError("tau_c", "pilot length must be shorter than tau_c")
        for name in ("p_t", "p_d", "p_u", "N0", "Tc", "B", "alpha_m", "alpha_l"):
            if not getattr(self, name) > 0:
                raise ConfigError(name, "must be > 0")
        for name in ("P0m", "Ptc_m", "P_ft", "Ptc_dk", "Ptc_ul", "sigma_sd", "gamma_RI"):
            if getattr(self, name) < 0:
                raise ConfigError(name, "must be >= 0")
        if not 0.0 <= self.delta <= 1.0:
            raise ConfigError("delta", "must lie in [0, 1]")
        if not 0 < self.d0 < self.d1:
            raise ConfigError("d1", "need 0 < d0 < d1")
        if self.fronthaul_cap_denominator not in (2, 4):
            raise ConfigError("fronthaul_cap_denominator", "must be 2 or 4")
        nu = np.atleast_1d(self.nu)
        if nu.size not in (1, self.M) or np.any(nu < 1) or np.any(nu > 8):
            raise ConfigError("nu", "bits must be in 1..8, scalar or one per AP")
        cfh = np.atleast_1d(self.C_fh)
        if cfh.size not in (1, self.M) or np.any(cfh <= 0):
            raise ConfigError("C_fh", "capacity must be > 0, scalar or one per AP")
        for name, n in (("w_d", self.Kd), ("w_u", self.Ku)):
            w = getattr(self, name)
            if w is not None and (len(w) != n or min(w) < 0):
                raise ConfigError(name, f"needs {n} nonnegative weights")
        for name, n in (("S_od", self.Kd), ("S_ou", self.Ku)):
            s = np.atleast_1d(getattr(self, name))
            if s.size not in (1, n) or np.any(s < 0):
                raise ConfigError(name, f"QoS floor must be >= 0, scalar or {n} values")

    # derived quantities
    @property
    def K(self) -> int:
        return self.Kd + self.Ku

    @property
    def tau_t(self) -> int:
        return self.tau_td + self.tau_tu

    @property
    def tau_f(self) -> float:
        return (self.tau_c - self.tau_t) / self.tau_c

    @property
    def rho_d(self) -> float:
        return self.p_d / self.N0

    @property
    def rho_u(self) -> float:
        return self.p_u / self.N0

    @property
    def rho_t(self) -> float:
        return self.p_t / self.N0

    @property
    def nu_m(self) -> np.ndarray:
        return np.broadcast_to(np.atleast_1d(self.nu), (self.M,)).astype(int)

    @property
    def C_fh_m(self) -> np.ndarray:
        return np.broadcast_to(np.atleast_1d(self.C_fh), (self.M,)).astype(float)

    @property
    def weights_d(self) -> np.ndarray:
        if self.w_d is None:
            return np.full(self.Kd, 1.0 / self.K)
        return np.asarray(self.w_d, dtype=float)

    @property
    def weights_u(self) -> np.ndarray:
        if self.w_u is None:
            return np.full(self.Ku, 1.0 / self.K)
        return np.asarray(self.w_u, dtype=float)

    @property
    def qos_d(self) -> np.ndarray:
        return np.broadcast_to(np.atleast_1d(self.S_od), (self.Kd,)).astype(float)

    @property
    def qos_u(self) -> np.ndarray:
        return np.broadcast_to(np.atleast_1d(self.S_ou), (self.Ku,)).astype(float)

    def with_(self, **changes) -> "SystemConfig":
        """Copy with overrides; pilot lengths follow the UE counts unless given."""
        if ("Kd" in changes) and "tau_td" not in changes:
            changes["tau_td"] = None
        if ("Ku" in changes) and "tau_tu" not in changes:
            changes["tau_tu"] = None
        return replace(self, **changes)

    def with_power_dbm(self, p_dbm: float) -> "SystemConfig":
        """Sweep convention p_d = 2 p_u = p."""
        p = float(dbm_to_watt(p_dbm))
        return self.with_(p_d=p, p_u=p / 2.0)


def config_field_names():
    return [f.name for f in fields(SystemConfig)]
