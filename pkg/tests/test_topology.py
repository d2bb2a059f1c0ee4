import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fdcellfree.config import SystemConfig
from fdcellfree.rng import as_generator, substream
from fdcellfree.topology import (LargeScaleState, deploy, large_scale, mmse_gamma, path_loss_db,
                                 sample_realization, torus_distance)


def test_substream_is_deterministic_and_tag_separated():
    a = substream(7, "deploy", 3).standard_normal(5)
    b = substream(7, "deploy", 3).standard_normal(5)
    c = substream(7, "deploy", 4).standard_normal(5)
    d = substream(7, "large_scale", 3).standard_normal(5)
    assert np.array_equal(a, b)
    assert not np.allclose(a, c)
    assert not np.allclose(a, d)


def test_substream_rejects_out_of_range_seed():
    with pytest.raises(ValueError):
        substream(-1, "x")
    with pytest.raises(ValueError):
        substream(2 ** 64, "x")


def test_as_generator_passes_generators_through():
    g = np.random.default_rng(1)
    assert as_generator(g) is g


def test_torus_distance_wraps():
    d = torus_distance([[0.01, 0.5]], [[0.99, 0.5]], 1.0)
    assert d[0, 0] == pytest.approx(0.02, abs=1e-12)


@given(st.lists(st.floats(0, 1, exclude_max=True), min_size=4, max_size=4))
def test_torus_distance_properties(xy):
    a, b = np.array([xy[:2]]), np.array([xy[2:]])
    d_ab = torus_distance(a, b, 1.0)[0, 0]
    assert d_ab == pytest.approx(torus_distance(b, a, 1.0)[0, 0])
    assert 0.0 <= d_ab <= np.sqrt(0.5) + 1e-12
    # minimum over the nine wrap-around images
    shifts = np.array([[i, j] for i in (-1, 0, 1) for j in (-1, 0, 1)], dtype=float)
    brute = np.min(np.linalg.norm(a[0] - (b[0] + shifts), axis=1))
    assert d_ab == pytest.approx(brute, abs=1e-12)


def test_deploy_is_deterministic():
    cfg = SystemConfig(M=8, Kd=3, Ku=2)
    a, b = deploy(cfg, 5), deploy(cfg, 5)
    for name in ("ap", "dl", "ul"):
        assert np.array_equal(getattr(a, name), getattr(b, name))


def test_deploy_uniformity():
    # per-axis mean of 10^4 positions within 3 standard errors of D/2
    D = 2.0
    cfg = SystemConfig(M=10000, Kd=1, Ku=1, D=D)
    pos = deploy(cfg, 3).ap
    se = D / np.sqrt(12.0) / np.sqrt(pos.shape[0])
    assert np.all(np.abs(pos.mean(axis=0) - D / 2) <= 3 * se)
    assert pos.min() >= 0.0 and pos.max() < D


def test_path_loss_at_one_km():
    assert path_loss_db(1.0) == pytest.approx(-140.72, abs=1e-12)


def test_path_loss_flat_inside_d0_and_continuous():
    inner = path_loss_db(np.array([1e-6, 0.003, 0.01]))
    assert np.allclose(inner, inner[0], atol=0)
    left = path_loss_db(0.05 - 1e-12)
    right = path_loss_db(0.05 + 1e-12)
    assert abs(left - right) < 1e-9
    assert path_loss_db(0.05) == pytest.approx(-140.72 - 35 * np.log10(0.05))


def test_path_loss_is_nonincreasing():
    d = np.linspace(1e-4, 1.5, 2000)
    assert np.all(np.diff(path_loss_db(d)) <= 1e-12)


def test_mmse_gamma_examples():
    assert mmse_gamma(1.0, 2, 1.0) == pytest.approx(2.0 / 3.0)
    assert mmse_gamma(0.0, 2, 1.0) == 0.0
    assert mmse_gamma(1.0, 1, 1e9) == pytest.approx(1.0, abs=1e-6)


@given(st.floats(1e-16, 1.0), st.integers(1, 40), st.floats(1e-3, 1e12))
def test_mmse_gamma_between_zero_and_beta(beta, tau, rho):
    g = mmse_gamma(beta, tau, rho)
    assert 0.0 <= g <= beta


def _shadow(beta, dist, cfg):
    return 10 * np.log10(beta) - path_loss_db(dist, cfg.d0, cfg.d1, cfg.L_db)


def test_no_shadowing_gives_pure_path_loss():
    cfg = SystemConfig(M=6, Kd=3, Ku=2, sigma_sd=0.0)
    dep = deploy(cfg, 1)
    st_ = large_scale(dep, cfg, 1)
    pl = path_loss_db(torus_distance(dep.ap, dep.dl, cfg.D))
    assert np.allclose(st_.beta_d, 10 ** (pl / 10), rtol=1e-12)


def test_full_ap_correlation():
    cfg = SystemConfig(M=5, Kd=4, Ku=3, delta=1.0)
    dep = deploy(cfg, 2)
    st_ = large_scale(dep, cfg, 2)
    z = _shadow(st_.beta_d, torus_distance(dep.ap, dep.dl, cfg.D), cfg)
    assert np.allclose(z, z[:, :1], atol=1e-9)


def test_shadowing_std():
    # about 10^5 independent AP-AP draws
    cfg = SystemConfig(M=448, Kd=1, Ku=1)
    dep = deploy(cfg, 4)
    st_ = large_scale(dep, cfg, 4)
    z = _shadow(st_.beta_ri, torus_distance(dep.ap, dep.ap, cfg.D), cfg)
    iu = np.triu_indices(cfg.M, 1)
    assert iu[0].size >= 1e5
    assert np.std(z[iu]) == pytest.approx(2.0, rel=0.01)
    assert np.allclose(z, z.T)


def test_gamma_matches_pilot_lengths(desk):
    cfg, state, _, _ = desk
    assert np.allclose(state.gamma_d, mmse_gamma(state.beta_d, cfg.tau_td, cfg.rho_t))
    assert np.allclose(state.gamma_u, mmse_gamma(state.beta_u, cfg.tau_tu, cfg.rho_t))


def _toy_state(beta):
    beta = np.asarray(beta, dtype=float)
    M, K = beta.shape
    g = mmse_gamma(beta, 2, 1.0)
    return LargeScaleState(beta_d=beta, beta_u=beta, beta_udi=np.ones((K, K)), beta_ri=np.ones((M, M)),
                           gamma_d=g, gamma_u=g)


def test_estimate_second_moments():
    cfg = SystemConfig(M=1, Nt=1, Nr=1, Kd=2, Ku=2, p_t=1.0, N0=1.0)
    state = _toy_state([[1.0, 0.25]])
    n = 100_000
    direct = sample_realization(state, cfg, 9, trials=n, mode="direct")
    pilot = sample_realization(state, cfg, 10, trials=n, mode="pilot")
    gam = state.gamma_d[0]
    p_direct = np.mean(np.abs(direct.g_d_hat[:, 0, :, 0]) ** 2, axis=0)
    p_pilot = np.mean(np.abs(pilot.g_d_hat[:, 0, :, 0]) ** 2, axis=0)
    assert np.allclose(p_direct, gam, rtol=0.02)
    assert np.allclose(p_pilot, gam, rtol=0.02)
    assert np.allclose(p_direct, p_pilot, rtol=0.02)
    # error power beta - gamma, uncorrelated with the estimate
    err = pilot.g_d[:, 0, :, 0] - pilot.g_d_hat[:, 0, :, 0]
    assert np.allclose(np.mean(np.abs(err) ** 2, axis=0), state.beta_d[0] - gam, rtol=0.03)
    corr = np.abs(np.mean(err * np.conj(pilot.g_d_hat[:, 0, :, 0]), axis=0))
    assert np.all(corr < 0.01)


def test_perfect_estimation_has_no_error():
    cfg = SystemConfig(M=1, Nt=2, Nr=2, Kd=1, Ku=1, p_t=1e12, N0=1.0)
    state = _toy_state([[1.0]])
    real = sample_realization(state, cfg, 1, trials=2000, mode="pilot")
    assert np.mean(np.abs(real.g_d - real.g_d_hat) ** 2) < 1e-9


def test_unknown_estimation_mode():
    cfg = SystemConfig(M=1, Kd=1, Ku=1)
    with pytest.raises(ValueError):
        sample_realization(_toy_state([[1.0]]), cfg, 0, mode="bogus")
