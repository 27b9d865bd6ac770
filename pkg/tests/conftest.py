import math

import numpy as np
import pytest

from heralded_cz.config import load_config
from heralded_cz.model import SystemConfig, build_block
from heralded_cz.propagator import IntegratorSettings
from heralded_cz.waveform import PulsePair

FAST = IntegratorSettings("magnus4", steps=2000)


@pytest.fixture(scope="session")
def fig2():
    return load_config("fig2")


@pytest.fixture(scope="session")
def fig4():
    return load_config("fig4")


@pytest.fixture
def fast():
    return FAST


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_config(rng, n=3, layout="chain_no_qq", scale=40.0, **kw) -> SystemConfig:
    """Random real even waveforms; infinite blockade unless overridden."""
    kw.setdefault("B0", math.inf)
    kw.setdefault("B1", math.inf)
    buf = PulsePair.from_coeffs(rng.uniform(-scale, scale, n + 1), rng.uniform(-scale, scale, n + 1))
    qub = PulsePair.from_coeffs(rng.uniform(-scale, scale, n + 1))
    return SystemConfig(buf, qub, layout=layout, **kw)


def two_level_block(omega, delta, tau):
    """Rail-1 '00' block (|g00>, |r100>) with constant Ω, Δ in rad/μs."""
    cfg = SystemConfig(
        PulsePair.from_coeffs([omega / (2 * math.pi)], [delta / (2 * math.pi)], tau=tau),
        PulsePair.from_coeffs([0.0], tau=tau),
        B0=math.inf,
        B1=math.inf,
    )
    return build_block(cfg, "00", 1)


# one line per acceptance criterion, printed after the run
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
