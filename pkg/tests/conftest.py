import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from boussinesq_lab.lattice import CoefficientField, ball_index

settings.register_profile("default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def decaying_field(rng, nu, radius, B=1.0, kappa=1.0, scale=1.0, real=False):
    """Random field under B*scale*exp(-kappa|n|/2), optionally conjugate-symmetric."""
    idx = ball_index(nu, radius)
    amp = B * scale * np.exp(-kappa * idx.norms / 2)
    vals = amp * rng.random(len(idx)) * np.exp(2j * math.pi * rng.random(len(idx)))
    if real:
        for i, n in enumerate(idx.keys):
            j = idx.position[tuple(-k for k in n)]
            if i == j:
                vals[i] = vals[i].real
            elif i > j:
                vals[i] = np.conj(vals[j])
    return CoefficientField(nu, radius, vals)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
