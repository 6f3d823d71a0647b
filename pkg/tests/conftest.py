import math

import numpy as np
import pytest
from hypothesis import settings

from sphere_sh import SpectralField, SpectralSpace, norm_H

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


def brute_field(coeff, Lx, Ly, x, y):
    """Evaluate sum c_jk phi_jk on points (x, y) straight from the formula."""
    J, K = coeff.shape
    out = np.zeros(np.broadcast(x, y).shape)
    for j in range(1, J + 1):
        for k in range(1, K + 1):
            if coeff[j - 1, k - 1] != 0.0:
                out = out + coeff[j - 1, k - 1] * (2.0 / math.sqrt(Lx * Ly)) \
                    * np.sin(j * math.pi * x / Lx) * np.sin(k * math.pi * y / Ly)
    return out


def fine_grid(Lx, Ly, M):
    x = (np.arange(M) + 0.5) * Lx / M
    y = (np.arange(M) + 0.5) * Ly / M
    X, Y = np.meshgrid(x, y, indexing="ij")
    return X, Y, (Lx / M) * (Ly / M)


def on_sphere(u):
    return u / norm_H(u)


def rich_state(space, modes=6, decay=1.5):
    """Normalised state spread over the first modes x modes sine modes."""
    c = np.zeros(space.shape)
    j = np.arange(1, modes + 1)
    c[:modes, :modes] = (1 + space.lam[:modes, :modes]) ** -decay * np.cos(j[:, None] + 2 * j[None, :])
    return on_sphere(SpectralField(space, c))


@pytest.fixture
def rng():
    return np.random.default_rng(20241019)


@pytest.fixture(scope="session")
def space16():
    return SpectralSpace(16, 16, pad_factor=2)


@pytest.fixture(scope="session")
def space8():
    return SpectralSpace(8, 8, pad_factor=2)


# one verdict line per acceptance criterion, printed at the end of the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[num]
        terminalreporter.write_line(f"criterion {num:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
