"""Wrap-around deployments, large-scale fading, MMSE statistics and
small-scale channel draws."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import SystemConfig
from .rng import as_generator


@dataclass(frozen=True)
class Deployment:
    ap: np.ndarray   # (M, 2)
    dl: np.ndarray   # (Kd, 2)
    ul: np.ndarray   # (Ku, 2)
    D: float


@dataclass(frozen=True)
class LargeScaleState:
    beta_d: np.ndarray    # (M, Kd)
    beta_u: np.ndarray    # (M, Ku)
    beta_udi: np.ndarray  # (Kd, Ku)
    beta_ri: np.ndarray   # (M, M)
    gamma_d: np.ndarray   # (M, Kd)
    gamma_u: np.ndarray   # (M, Ku)


@dataclass(frozen=True)
class ChannelRealization:
    """Channel draws; every array carries a leading trial axis of length T."""

    g_d: np.ndarray       # (T, M, Kd, Nt)
    g_u: np.ndarray       # (T, M, Ku, Nr)
    g_d_hat: np.ndarray
    g_u_hat: np.ndarray
    h_udi: np.ndarray     # (T, Kd, Ku)
    H_ri: np.ndarray      # (T, M, M, Nr, Nt), H_ri[:, m, i] maps AP i to AP m

    @property
    def trials(self) -> int:
        return self.g_d.shape[0]


def deploy(config: SystemConfig, seed) -> Deployment:
    rng = as_generator(seed, "deploy")
    D = config.D
    return Deployment(
        ap=rng.uniform(0.0, D, size=(config.M, 2)),
        dl=rng.uniform(0.0, D, size=(config.Kd, 2)),
        ul=rng.uniform(0.0, D, size=(config.Ku, 2)),
        D=D,
    )


def torus_distance(a, b, D: float) -> np.ndarray:
    """Pairwise distances on the D x D torus, shape (len(a), len(b)).

    Taking per-axis min(|dx|, D - |dx|) equals the minimum over the nine
    wrap-around images.
    """
    a = np.atleast_2d(a)
    b = np.atleast_2d(b)
    diff = np.abs(a[:, None, :] - b[None, :, :]) % D
    diff = np.minimum(diff, D - diff)
    return np.sqrt(np.sum(diff ** 2, axis=-1))


def path_loss_db(distance, d0: float = 0.01, d1: float = 0.05, L: float = 140.72):
    """Three-slope path loss in dB (negative), distance in km."""
    d = np.asarray(distance, dtype=float)
    far = -L - 35.0 * np.log10(np.maximum(d, d1))
    mid = -L - 15.0 * np.log10(d1) - 20.0 * np.log10(np.clip(d, d0, d1))
    out = np.where(d > d1, far, mid)
    return out if out.ndim else float(out)


def mmse_gamma(beta, tau_t, rho_t):
    """Per-entry variance of the MMSE channel estimate."""
    beta = np.asarray(beta, dtype=float)
    x = tau_t * rho_t * beta
    return x * beta / (x + 1.0)


def large_scale(dep: Deployment, config: SystemConfig, seed) -> LargeScaleState:
    rng = as_generator(seed, "large_scale")
    M, Kd, Ku = config.M, config.Kd, config.Ku
    pl = lambda d: path_loss_db(d, config.d0, config.d1, config.L_db)
    s = config.sigma_sd
    sd, sa = np.sqrt(config.delta), np.sqrt(1.0 - config.delta)

    a = rng.standard_normal(M)
    b_d = rng.standard_normal(Kd)
    b_u = rng.standard_normal(Ku)
    z_d = sd * a[:, None] + sa * b_d[None, :]
    z_u = sd * a[:, None] + sa * b_u[None, :]
    beta_d = 10.0 ** ((pl(torus_distance(dep.ap, dep.dl, dep.D)) + s * z_d) / 10.0)
    beta_u = 10.0 ** ((pl(torus_distance(dep.ap, dep.ul, dep.D)) + s * z_u) / 10.0)

    # UE-UE and AP-AP links: one independent standard normal per pair
    z_udi = rng.standard_normal((Kd, Ku))
    beta_udi = 10.0 ** ((pl(torus_distance(dep.dl, dep.ul, dep.D)) + s * z_udi) / 10.0)

    z_ri = rng.standard_normal((M, M))
    z_ri = np.triu(z_ri, 1)
    z_ri = z_ri + z_ri.T
    beta_ri = 10.0 ** ((pl(torus_distance(dep.ap, dep.ap, dep.D)) + s * z_ri) / 10.0)
    np.fill_diagonal(beta_ri, 10.0 ** (config.PL_RI / 10.0))

    return LargeScaleState(
        beta_d=beta_d,
        beta_u=beta_u,
        beta_udi=beta_udi,
        beta_ri=beta_ri,
        gamma_d=mmse_gamma(beta_d, config.tau_td, config.rho_t),
        gamma_u=mmse_gamma(beta_u, config.tau_tu, config.rho_t),
    )


def _cn(rng, shape, var):
    """Complex normal draws with per-entry variance ``var`` (broadcast)."""
    z = rng.standard_normal(shape + (2,)).view(np.complex128)[..., 0]
    return z * np.sqrt(np.asarray(var) / 2.0)


def _estimate(rng, beta, tau, rho_t, n_ant, trials, mode):
    """True channel and MMSE estimate for a (M, K) gain matrix."""
    shape = (trials,) + beta.shape + (n_ant,)
    b = beta[None, :, :, None]
    gam = mmse_gamma(beta, tau, rho_t)[None, :, :, None]
    if mode == "direct":
        g_hat = _cn(rng, shape, gam)
        g = g_hat + _cn(rng, shape, b - gam)
    elif mode == "pilot":
        g = _cn(rng, shape, b)
        y = np.sqrt(tau * rho_t) * g + _cn(rng, shape, 1.0)
        c = np.sqrt(tau * rho_t) * b / (tau * rho_t * b + 1.0)
        g_hat = c * y
    else:
        raise ValueError(f"unknown estimation mode {mode!r}")
    return g, g_hat


def sample_realization(state: LargeScaleState, config: SystemConfig, seed,
                       trials: int = 1, mode: str = "direct") -> ChannelRealization:
    """Draw ``trials`` independent small-scale realizations.

    ``mode='direct'`` draws estimate and error independently with variances
    gamma and beta - gamma; ``mode='pilot'`` simulates the pilot projection
    followed by the scalar MMSE estimator.
    """
    rng = as_generator(seed, "realization")
    g_d, g_d_hat = _estimate(rng, state.beta_d, config.tau_td, config.rho_t, config.Nt, trials, mode)
    g_u, g_u_hat = _estimate(rng, state.beta_u, config.tau_tu, config.rho_t, config.Nr, trials, mode)
    h_udi = _cn(rng, (trials,) + state.beta_udi.shape, state.beta_udi[None])
    M = state.beta_ri.shape[0]
    var_ri = (state.beta_ri * config.gamma_RI)[None, :, :, None, None]
    H_ri = _cn(rng, (trials, M, M, config.Nr, config.Nt), var_ri)
    return ChannelRealization(g_d=g_d, g_u=g_u, g_d_hat=g_d_hat, g_u_hat=g_u_hat,
                              h_udi=h_udi, H_ri=H_ri)
