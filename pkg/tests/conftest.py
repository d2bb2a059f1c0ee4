import warnings

import numpy as np
import pytest

from fdcellfree.config import SystemConfig
from fdcellfree.fronthaul import all_caps, select_aps
from fdcellfree.quantizer import optimize_step
from fdcellfree.sca import WSEEModel
from fdcellfree.topology import deploy, large_scale


def desk_config(**kw):
    base = dict(M=10, Nt=2, Nr=2, Kd=2, Ku=2, S_od=0.1, S_ou=0.1)
    base.update(kw)
    return SystemConfig(**base)


def build_instance(cfg, seed):
    state = large_scale(deploy(cfg, seed), cfg, seed)
    sets = select_aps(state, all_caps(cfg), cfg)
    q = optimize_step(int(cfg.nu_m[0]))
    return state, sets, q


def build_model(cfg, seed):
    state, sets, q = build_instance(cfg, seed)
    return WSEEModel.build(state, sets, q, cfg)


@pytest.fixture(scope="session")
def desk():
    cfg = desk_config()
    state, sets, q = build_instance(cfg, 0)
    return cfg, state, sets, q


@pytest.fixture(scope="session")
def desk_model(desk):
    cfg, state, sets, q = desk
    return WSEEModel.build(state, sets, q, cfg)


@pytest.fixture(scope="session")
def desk_central(desk_model):
    from fdcellfree.sca import run_centralized
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return run_centralized(desk_model)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one summary line per acceptance criterion, printed after the run
ACCEPTANCE = {}


@pytest.fixture
def criterion():
    def report(number, ok, detail):
        ACCEPTANCE[number] = (bool(ok), detail)
        print(f"criterion {number}: {'PASS' if ok else 'FAIL'} {detail}")
        return ok
    return report


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
