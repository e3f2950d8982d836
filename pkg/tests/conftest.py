import math

import numpy as np
import pytest

from fcla import fp
from fcla.channel import Scenario, build_channel, sample_scenario
from fcla.geometry import AntennaLayout, ArrayConfig


def random_layout(rng, config, jitter=0.2):
    """Uniform rings with random rotation and jitter; stays feasible for R=0.5, N<=4."""
    M, N = config.num_layers, config.antennas_per_layer
    base = 2 * math.pi * np.arange(N) / N
    psi = base[None, :] + rng.uniform(0, 2 * math.pi, (M, 1)) + rng.uniform(-jitter, jitter, (M, N))
    z = config.wavelength * (np.arange(M) + rng.uniform(-0.2, 0.2, M))
    return AntennaLayout(psi, z)


class Instance:
    def __init__(self, config, layout, scenario, power=1.0, F=None):
        self.config = config
        self.layout = layout
        self.scenario = scenario
        self.noise = scenario.noise_variances
        self.H = build_channel(config, layout, scenario)
        K = scenario.num_users
        if F is None:
            F = fp.matched_filter(self.H, power)
        self.F = F
        self.eps = fp.update_epsilon(self.H, F, self.noise)
        self.mu = fp.update_mu(self.H, F, self.noise)


def random_instance(seed, M=2, N=2, K=2, L=3, noise=1.0, random_beam=True):
    rng = np.random.default_rng(seed)
    config = ArrayConfig(M, N, 0.5)
    layout = random_layout(rng, config)
    scenario = sample_scenario(rng, K, L, noise)
    F = None
    if random_beam:
        F = rng.normal(size=(M * N, K)) + 1j * rng.normal(size=(M * N, K))
        F /= np.linalg.norm(F)
    return Instance(config, layout, scenario, F=F)


def single_path_scenario(gain, elevation, azimuth, noise=1.0):
    g = np.array([[gain]], dtype=complex)
    return Scenario(g, np.array([[elevation]]), np.array([[azimuth]]), np.array([noise]))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# acceptance criteria report -------------------------------------------------

CRITERIA = {}


def record_criterion(number, passed, detail):
    CRITERIA[number] = (bool(passed), detail)
    return bool(passed)


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        passed, detail = CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
