"""Monte-Carlo oracles: ergodic SE and per-term interference powers.

Quantization enters as Bussgang attenuation plus independent Gaussian
distortion whose power is (b_tilde - a_tilde**2) times the conditional
power of the quantized signal. Expectations over data symbols, noise and
distortion are taken in closed form; expectations over channels are
sample averages.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import SystemConfig
from .fronthaul import ServingSets
from .quantizer import QuantizerParams
from .rng import substream
from .se import PowerControl
from .topology import LargeScaleState, sample_realization

DL_TERMS = ("DS", "BU", "MUI", "UDI", "TQD")
UL_TERMS = ("DS", "BU", "MUI", "RI", "N", "TQD")


@dataclass
class _Chunk:
    """Per-trial conditional term powers for one block of realizations."""

    y_dd: np.ndarray     # (T, Kd) coherent own-stream gain sum_m sqrt(eta) g^T conj(g_hat)
    mui_d: np.ndarray    # (T, Kd)
    udi_d: np.ndarray
    tqd_d: np.ndarray
    u_ll: np.ndarray     # (T, Ku) sum_m g_hat^H g for the own UE
    mui_u: np.ndarray
    ri_u: np.ndarray
    n_u: np.ndarray
    tqd_u: np.ndarray
    yhat_d: np.ndarray   # own-stream gain with the true channel replaced by its estimate
    errvar_d: np.ndarray  # conditional variance of the estimation-error part given the estimate
    uhat_u: np.ndarray
    errvar_u: np.ndarray


def _chunk_terms(real, state: LargeScaleState, sets: ServingSets, q: QuantizerParams,
                 pc: PowerControl, config: SystemConfig) -> _Chunk:
    a, b = q.a_tilde, q.b_tilde
    rho_d, rho_u = config.rho_d, config.rho_u
    eta = pc.eta * sets.mask_d
    th = pc.theta
    mu = sets.mask_u.astype(float)

    # downlink: X[t,m,k,q] = g_mk^T conj(g_hat_mq)
    X = np.einsum("tmkn,tmqn->tmkq", real.g_d, np.conj(real.g_d_hat))
    Y = np.einsum("mq,tmkq->tkq", np.sqrt(eta), X)
    Kd = eta.shape[1]
    diag = np.arange(Kd)
    y_dd = Y[:, diag, diag]
    p_Y = np.abs(Y) ** 2
    mui_d = a * a * rho_d * (p_Y.sum(axis=2) - p_Y[:, diag, diag])
    udi_d = rho_u * np.einsum("tkl,l->tk", np.abs(real.h_udi) ** 2, th)
    tqd_d = (b - a * a) * rho_d * np.einsum("tmkq,mq->tk", np.abs(X) ** 2, eta)

    # uplink: Z[t,m,l,q] = g_hat_ml^H g_mq
    gh_u = real.g_u_hat
    Z = np.einsum("tmln,tmqn->tmlq", np.conj(gh_u), real.g_u)
    U = np.einsum("ml,tmlq->tlq", mu, Z)
    Ku = th.size
    diag_u = np.arange(Ku)
    u_ll = U[:, diag_u, diag_u]
    p_U = np.abs(U) ** 2 * th[None, None, :]
    mui_u = a * a * rho_u * (p_U.sum(axis=2) - p_U[:, diag_u, diag_u])

    # residual interference V[t,m,l,i,k] = g_hat_ml^H H_mi conj(g_hat_ik)
    HG = np.einsum("tmirn,tikn->tmikr", real.H_ri, np.conj(real.g_d_hat))
    V = np.einsum("tmlr,tmikr->tmlik", np.conj(gh_u), HG)
    R = np.einsum("ml,tmlik->tlik", mu, V)
    ri_u = a * a * b * rho_d * np.einsum("tlik,ik->tl", np.abs(R) ** 2, eta)
    norm_u = np.sum(np.abs(gh_u) ** 2, axis=-1)              # (T, M, Ku)
    n_u = a * a * np.einsum("ml,tml->tl", mu, norm_u)

    # conditional power of each AP's combined signal before quantization
    pw = (rho_u * np.einsum("tmlq,q->tml", np.abs(Z) ** 2, th)
          + rho_d * b * np.einsum("tmlik,ik->tml", np.abs(V) ** 2, eta)
          + norm_u)
    tqd_u = (b - a * a) * np.einsum("ml,tml->tl", mu, pw)

    norm_d = np.sum(np.abs(real.g_d_hat) ** 2, axis=-1)     # (T, M, Kd)
    yhat_d = np.einsum("mk,tmk->tk", np.sqrt(eta), norm_d)
    errvar_d = np.einsum("mk,tmk->tk", eta * (state.beta_d - state.gamma_d), norm_d)
    uhat_u = np.einsum("ml,tml->tl", mu, norm_u)
    errvar_u = np.einsum("ml,tml->tl", mu * (state.beta_u - state.gamma_u), norm_u)
    return _Chunk(y_dd, mui_d, udi_d, tqd_d, u_ll, mui_u, ri_u, n_u, tqd_u,
                  yhat_d, errvar_d, uhat_u, errvar_u)


def _iter_chunks(state, sets, q, pc, config, trials, seed, chunk, mode="direct"):
    done = 0
    idx = 0
    while done < trials:
        n = min(chunk, trials - done)
        real = sample_realization(state, config, substream(seed, "mc", idx), trials=n, mode=mode)
        yield _chunk_terms(real, state, sets, q, pc, config)
        done += n
        idx += 1


def _default_chunk(config: SystemConfig) -> int:
    per_trial = config.M * config.M * max(config.Kd, 1) * max(config.Ku, 1) * max(config.Nr, config.Nt)
    return int(max(1, min(2000, 4_000_000 // max(per_trial, 1))))


def mc_ergodic_se(state: LargeScaleState, sets: ServingSets, q: QuantizerParams,
                  pc: PowerControl, config: SystemConfig, trials: int, seed, chunk: int = None,
                  mode: str = "direct"):
    """Ergodic SE with genie-aided decoding: mean and standard error per UE.

    Returns (ub_d, ub_u, stderr_d, stderr_u).
    """
    if trials < 2:
        raise ValueError("need at least two trials for a standard error")
    chunk = chunk or _default_chunk(config)
    a = q.a_tilde
    sd, su = [], []
    for c in _iter_chunks(state, sets, q, pc, config, trials, seed, chunk, mode):
        p_d = a * a * config.rho_d * np.abs(c.y_dd) ** 2
        i_d = c.mui_d + c.udi_d + c.tqd_d + 1.0
        p_u = a * a * config.rho_u * pc.theta[None, :] * np.abs(c.u_ll) ** 2
        i_u = c.mui_u + c.ri_u + c.n_u + c.tqd_u
        sd.append(np.log2(1.0 + p_d / i_d))
        with np.errstate(divide="ignore", invalid="ignore"):
            su.append(np.log2(1.0 + np.where(p_u > 0, p_u / i_u, 0.0)))
    sd = config.tau_f * np.concatenate(sd)
    su = config.tau_f * np.concatenate(su)
    n = sd.shape[0]
    return (sd.mean(axis=0), su.mean(axis=0),
            sd.std(axis=0, ddof=1) / np.sqrt(n), su.std(axis=0, ddof=1) / np.sqrt(n))


def mc_term_powers(state: LargeScaleState, sets: ServingSets, q: QuantizerParams,
                   pc: PowerControl, config: SystemConfig, trials: int, seed, chunk: int = None,
                   mode: str = "direct"):
    """Empirical term powers per UE and their relative standard errors.

    The desired signal uses the sample mean of the coherent gain and the
    beamforming uncertainty its sample variance, as in the use-and-then-forget
    decomposition. The estimation-error part of the coherent gain is
    independent of the estimate and Gaussian given it, so its contribution is
    averaged analytically per draw (Rao-Blackwellized) to cut the variance.

    Returns (means, rel_stderr), each {"d": {term: (Kd,)}, "u": {term: (Ku,)}}.
    """
    chunk = chunk or _default_chunk(config)
    a = q.a_tilde
    rho_d, rho_u = config.rho_d, config.rho_u
    th = pc.theta
    parts = {}
    for c in _iter_chunks(state, sets, q, pc, config, trials, seed, chunk, mode):
        for name in ("yhat_d", "errvar_d", "mui_d", "udi_d", "tqd_d",
                     "uhat_u", "errvar_u", "mui_u", "ri_u", "n_u", "tqd_u"):
            parts.setdefault(name, []).append(getattr(c, name))
    s = {k: np.concatenate(v) for k, v in parts.items()}
    n = s["yhat_d"].shape[0]

    def avg(x):
        m = x.mean(axis=0)
        with np.errstate(divide="ignore", invalid="ignore"):
            return m, np.where(m != 0, x.std(axis=0, ddof=1) / np.sqrt(n) / np.abs(m), 0.0)

    def coherent(y, errvar, scale):
        ybar = y.mean(axis=0)
        ds = scale * np.abs(ybar) ** 2
        with np.errstate(divide="ignore", invalid="ignore"):
            ds_rse = np.where(ybar != 0, 2.0 * y.std(axis=0, ddof=1) / np.sqrt(n) / np.abs(ybar), 0.0)
        bu, bu_rse = avg(np.abs(y - ybar) ** 2 + errvar)
        return ds, ds_rse, scale * bu, bu_rse

    ds_d, ds_d_r, bu_d, bu_d_r = coherent(s["yhat_d"], s["errvar_d"], a * a * rho_d)
    ds_u, ds_u_r, bu_u, bu_u_r = coherent(s["uhat_u"], s["errvar_u"], a * a * rho_u * th)
    means = {"d": {"DS": ds_d, "BU": bu_d}, "u": {"DS": ds_u, "BU": bu_u}}
    rse = {"d": {"DS": ds_d_r, "BU": bu_d_r}, "u": {"DS": ds_u_r, "BU": bu_u_r}}
    for d, term, name in (("d", "MUI", "mui_d"), ("d", "UDI", "udi_d"), ("d", "TQD", "tqd_d"),
                          ("u", "MUI", "mui_u"), ("u", "RI", "ri_u"), ("u", "N", "n_u"),
                          ("u", "TQD", "tqd_u")):
        means[d][term], rse[d][term] = avg(s[name])
    order = {"d": DL_TERMS, "u": UL_TERMS}
    means = {d: {t: means[d][t] for t in order[d]} for d in "du"}
    rse = {d: {t: rse[d][t] for t in order[d]} for d in "du"}
    return means, rse


def closed_form_terms(state: LargeScaleState, sets: ServingSets, q: QuantizerParams,
                      pc: PowerControl, config: SystemConfig):
    """Analytical expectations of every term, same layout as mc_term_powers."""
    a, b = q.a_tilde, q.b_tilde
    Nt, Nr = config.Nt, config.Nr
    rho_d, rho_u = config.rho_d, config.rho_u
    eta = pc.eta * sets.mask_d
    th = pc.theta
    gd = state.gamma_d * sets.mask_d
    bd = state.beta_d
    gu = state.gamma_u * sets.mask_u
    bu = state.beta_u

    ds_d = a * a * Nt * Nt * rho_d * np.einsum("mk,mk->k", np.sqrt(eta), gd) ** 2
    bu_d = a * a * Nt * rho_d * np.einsum("mk,mk,mk->k", eta, bd, gd)
    all_q = np.einsum("mk,mq,mq->k", bd, eta, gd)
    mui_d = a * a * Nt * rho_d * (all_q - np.einsum("mk,mk,mk->k", bd, eta, gd))
    udi_d = rho_u * state.beta_udi @ th
    tqd_d = (b - a * a) * Nt * rho_d * all_q

    sg = gu.sum(axis=0)
    ds_u = a * a * Nr * Nr * rho_u * th * sg ** 2
    gb = gu.T @ bu                                   # (Ku, Ku): sum_m gamma_ml beta_mq
    own = np.diag(gb)
    bu_u = a * a * rho_u * Nr * th * own
    mui_u = a * a * rho_u * Nr * (gb @ th - own * th)
    ri_core = Nr * Nt * rho_d * b * np.einsum("li,ik->l", gu.T @ (state.beta_ri * config.gamma_RI),
                                             gd * eta)
    ri_u = a * a * ri_core
    n_u = a * a * Nr * sg
    tqd_u = (b - a * a) * (rho_u * th * Nr * (Nr * (gu ** 2).sum(axis=0) + own)
                           + rho_u * Nr * (gb @ th - own * th)
                           + ri_core + Nr * sg)
    return {"d": {"DS": ds_d, "BU": bu_d, "MUI": mui_d, "UDI": udi_d, "TQD": tqd_d},
            "u": {"DS": ds_u, "BU": bu_u, "MUI": mui_u, "RI": ri_u, "N": n_u, "TQD": tqd_u}}
