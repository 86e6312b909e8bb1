import numpy as np
import pytest

from ovlab.spectral import Grid, SpectralField, fft, leray_coeffs


@pytest.fixture
def grid():
    return Grid(32, 32)


def random_field(grid, ncomp, seed=0, k_cut=None):
    """Seeded real random field, dealiased (optionally band-limited to |k| <= k_cut)."""
    rng = np.random.default_rng(seed)
    c = fft(rng.standard_normal((ncomp,) + grid.shape)) * grid.dealias_mask
    if k_cut is not None:
        c = c * (grid.k2 <= k_cut**2)
    return SpectralField(grid, c)


def random_velocity(grid, seed=0, k_cut=None):
    u = random_field(grid, 2, seed, k_cut)
    c = leray_coeffs(grid, u.coeffs)
    c[:, 0, 0] = 0.0
    return SpectralField(grid, c)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
