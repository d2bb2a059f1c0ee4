import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fdcellfree.config import SystemConfig
from fdcellfree.fronthaul import ServingSets, full_service
from fdcellfree.montecarlo import closed_form_terms
from fdcellfree.quantizer import PERFECT, QuantizerParams, optimize_step
from fdcellfree.se import (PowerControl, baseline_allocation, energy_report, evaluate, fd_sum_se,
                           fixed_power, hd_equivalent_sum_se, per_ap_load, power_model,
                           se_coefficients, se_lb, sinr_lb, wsee)
from fdcellfree.topology import LargeScaleState


def _unit_state(M, Kd, Ku, gamma=0.5, beta=1.0):
    return LargeScaleState(beta_d=np.full((M, Kd), beta), beta_u=np.full((M, Ku), beta),
                           beta_udi=np.full((Kd, Ku), beta), beta_ri=np.full((M, M), beta),
                           gamma_d=np.full((M, Kd), gamma), gamma_u=np.full((M, Ku), gamma))


def test_toy_downlink_coefficient():
    cfg = SystemConfig(M=1, Nt=2, Nr=2, Kd=1, Ku=1, p_d=1.0, N0=1.0)
    assert cfg.rho_d == 1.0
    co = se_coefficients(_unit_state(1, 1, 1), full_service(cfg), PERFECT, cfg)
    assert co.A_d[0, 0] == pytest.approx(1.0)


def test_no_residual_interference_without_leakage(desk):
    cfg, state, sets, q = desk
    co = se_coefficients(state, sets, q, cfg.with_(gamma_RI=0.0))
    assert np.all(co.D_u == 0)


def test_perfect_fronthaul_has_no_distortion_term(desk):
    cfg, state, sets, _ = desk
    co = se_coefficients(state, sets, PERFECT, cfg)
    assert np.all(co.E_u == 0)


def test_zero_power_gives_zero_se(desk):
    cfg, state, sets, q = desk
    co = se_coefficients(state, sets, q, cfg)
    pc = baseline_allocation("EPA1", state, sets, q, cfg)
    se_d, _ = se_lb(co, PowerControl(np.zeros_like(pc.eta), pc.theta))
    _, se_u = se_lb(co, PowerControl(pc.eta, np.zeros(cfg.Ku)))
    assert np.all(se_d == 0) and np.all(se_u == 0)


def test_sinr_equals_ratio_of_term_powers(desk):
    # independent route: expectations of each received term
    cfg, state, sets, q = desk
    pc = baseline_allocation("RPA", state, sets, q, cfg, seed=3)
    sd, su = sinr_lb(se_coefficients(state, sets, q, cfg), pc)
    t = closed_form_terms(state, sets, q, pc, cfg)
    den_d = t["d"]["BU"] + t["d"]["MUI"] + t["d"]["UDI"] + t["d"]["TQD"] + 1.0
    den_u = t["u"]["BU"] + t["u"]["MUI"] + t["u"]["RI"] + t["u"]["N"] + t["u"]["TQD"]
    assert np.allclose(sd, t["d"]["DS"] / den_d, rtol=1e-10)
    assert np.allclose(su, t["u"]["DS"] / den_u, rtol=1e-10)


def test_downlink_power_monotonicity(desk):
    cfg, state, sets, q = desk
    co = se_coefficients(state, sets, q, cfg)
    pc = baseline_allocation("EPA1", state, sets, q, cfg)
    m, k = np.argwhere(sets.mask_d)[0]
    eta = pc.eta.copy()
    eta[m, k] *= 1.5
    d0, u0 = se_lb(co, pc)
    d1, u1 = se_lb(co, PowerControl(eta, pc.theta))
    assert d1[k] > d0[k]
    others = np.arange(cfg.Kd) != k
    assert np.all(d1[others] <= d0[others] + 1e-15)
    assert np.all(u1 <= u0 + 1e-15)


def test_fixed_power_example():
    cfg = SystemConfig(M=1, Nt=8, Nr=8, Kd=12, Ku=8)
    mask_d = np.zeros((1, 12), bool)
    mask_d[0, :4] = True
    mask_u = np.zeros((1, 8), bool)
    mask_u[0, :2] = True
    assert fixed_power(ServingSets(mask_d, mask_u), cfg) == pytest.approx(0.41725, abs=1e-12)


def test_power_model_idle_uplink(desk):
    cfg, state, sets, q = desk
    pc = baseline_allocation("EPA1", state, sets, q, cfg)
    _, p_u = power_model(PowerControl(pc.eta, np.zeros(cfg.Ku)), sets, state, q, cfg)
    assert np.allclose(p_u, fixed_power(sets, cfg) + cfg.Ptc_ul)


def test_normalization_consistency():
    cfg = SystemConfig()
    assert cfg.rho_d * cfg.N0 == pytest.approx(cfg.p_d, rel=1e-15)
    assert cfg.rho_u * cfg.N0 == pytest.approx(cfg.p_u, rel=1e-15)


@given(st.lists(st.floats(0, 5), min_size=4, max_size=4), st.floats(0.1, 10))
def test_wsee_weight_linearity(se, scale):
    cfg = SystemConfig(M=2, Kd=2, Ku=2)
    p = np.array([1.0, 2.0])
    w = dict(w_d=(0.1, 0.2), w_u=(0.3, 0.4))
    r1 = energy_report(se[:2], se[2:], p, p, cfg.with_(**w))
    r2 = energy_report(se[:2], se[2:], p, p, cfg.with_(w_d=(0.1 * scale, 0.2 * scale), w_u=(0.3 * scale, 0.4 * scale)))
    assert r2.wsee == pytest.approx(scale * r1.wsee, rel=1e-12, abs=1e-9)
    r0 = energy_report(se[:2], se[2:], p, p, cfg.with_(w_d=(0.0, 0.0), w_u=(0.0, 0.0)))
    assert r0.wsee == 0.0


def test_equal_weights_give_mean_ee(desk):
    cfg, state, sets, q = desk
    pc = baseline_allocation("EPA1", state, sets, q, cfg)
    r = evaluate(pc, se_coefficients(state, sets, q, cfg), sets, state, q, cfg)
    assert r.wsee == pytest.approx(np.mean(np.concatenate([r.ee_d, r.ee_u])), rel=1e-12)
    assert r.sum_se == pytest.approx(r.se_d.sum() + r.se_u.sum())


def test_baselines_are_feasible(desk):
    cfg, state, sets, q = desk
    busy = sets.K_dm > 0
    for kind in ("EPA1", "EPA2"):
        load = per_ap_load(baseline_allocation(kind, state, sets, q, cfg), state, sets, q, cfg)
        assert np.allclose(load[busy], 1.0, rtol=1e-12)
        assert np.all(load[~busy] == 0)
    epa1 = baseline_allocation("EPA1", state, sets, q, cfg)
    for seed in range(5):
        rpa = baseline_allocation("RPA", state, sets, q, cfg, seed=seed)
        assert np.all(rpa.eta <= epa1.eta) and np.all((0 <= rpa.theta) & (rpa.theta <= 1))
    with pytest.raises(ValueError):
        baseline_allocation("MAX", state, sets, q, cfg)


def test_hd_definition(desk):
    # FD with no leakage, no UE-UE link and Nt + Nr antennas equals twice the HD value
    cfg, state, sets, q = desk
    N = cfg.Nt + cfg.Nr
    big = cfg.with_(Nt=N, Nr=N, gamma_RI=0.0)
    from dataclasses import replace
    quiet = replace(state, beta_udi=np.zeros_like(state.beta_udi))
    pc = baseline_allocation("EPA1", quiet, sets, q, big)
    fd = fd_sum_se(quiet, sets, q, pc, big)
    assert hd_equivalent_sum_se(state, sets, q, None, cfg, halve=False) == pytest.approx(fd, rel=1e-12)
    assert hd_equivalent_sum_se(state, sets, q, None, cfg) == pytest.approx(fd / 2, rel=1e-12)


def test_wsee_wrapper_matches_evaluate(desk):
    cfg, state, sets, q = desk
    pc = baseline_allocation("EPA2", state, sets, q, cfg)
    co = se_coefficients(state, sets, q, cfg)
    assert wsee(pc, co, sets, state, q, cfg) == evaluate(pc, co, sets, state, q, cfg).wsee
