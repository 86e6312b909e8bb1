"""Named initial-condition generators.

Every generator returns a dealiased, divergence-free, mean-zero velocity.  The
stress is chosen by ``tau_init``: ``"well-prepared"`` (tau = D(u), so sigma
starts at zero), ``"zero"``, or ``"background"`` (tau = a Id plus whatever the
generator adds).
"""

from __future__ import annotations

import numpy as np

from .diagnostics import sobolev_norm, sym_gradient_coeffs
from .fields import ModelParams
from .linear import growth_rates
from .solvers import SimState
from .spectral import ConfigurationError, Grid, SpectralField, fft, leray_coeffs

TAU_INITS = ("well-prepared", "zero", "background")


def _clean_velocity(grid: Grid, uc: np.ndarray) -> np.ndarray:
    uc = leray_coeffs(grid, uc * grid.dealias_mask)
    uc[:, 0, 0] = 0.0
    return uc


def _stress(grid: Grid, uc: np.ndarray, params: ModelParams, tau_init: str) -> np.ndarray:
    if tau_init == "well-prepared":
        return sym_gradient_coeffs(grid, uc)
    tc = np.zeros((3,) + grid.shape, dtype=complex)
    if tau_init == "background":
        tc[0, 0, 0] = params.a
        tc[2, 0, 0] = params.a
    elif tau_init != "zero":
        raise ConfigurationError(f"unknown tau_init {tau_init!r}; expected one of {TAU_INITS}")
    return tc


def taylor_green(grid: Grid, params: ModelParams, amplitude: float = 1.0,
                 tau_init: str = "well-prepared", **_) -> SimState:
    """u = A (sin x cos y, -cos x sin y)."""
    x, y = grid.xy
    up = amplitude * np.stack([np.sin(x) * np.cos(y), -np.cos(x) * np.sin(y)])
    uc = _clean_velocity(grid, fft(up))
    return SimState(0.0, SpectralField(grid, uc), SpectralField(grid, _stress(grid, uc, params, tau_init)), params)


def random_smooth(grid: Grid, params: ModelParams, amplitude: float = 1.0, seed: int = 0,
                  tau_init: str = "well-prepared", k_cut: float = 4.0, **_) -> SimState:
    """Seeded white noise low-passed to 0 < |k| <= k_cut, scaled to ||u||_{H^6} = amplitude."""
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal((2,) + grid.shape)
    uc = fft(noise) * (grid.k2 <= k_cut**2)
    uc = _clean_velocity(grid, uc)
    norm = sobolev_norm(SpectralField(grid, uc), 6)
    if norm == 0:
        raise ConfigurationError("random-smooth generator produced a zero field")
    uc *= amplitude / norm
    return SimState(0.0, SpectralField(grid, uc), SpectralField(grid, _stress(grid, uc, params, tau_init)), params)


def mode_probe(grid: Grid, params: ModelParams, amplitude: float = 1e-6, k: int = 2,
               tau_init: str = "background", **_) -> SimState:
    """Shear mode u = (0, A cos kx) on the background a Id.

    The stress carries the matching eigenvector component so the perturbation
    starts on the fastest-growing branch of the linearized system.
    """
    if not 0 < k < grid.nx / 3:
        raise ConfigurationError(f"probe wavenumber {k} outside the dealiased band of a {grid.nx} grid")
    x, _ = grid.xy
    lam, _ = growth_rates(k, params.a, params.b, params.epsilon, params.voigt)
    u2 = amplitude * np.cos(k * x)
    # Re(-i lam / k e^{ikx}) for the off-diagonal stress
    t12 = amplitude * (lam.imag * np.cos(k * x) + lam.real * np.sin(k * x)) / k
    zero = np.zeros(grid.shape)
    uc = _clean_velocity(grid, fft(np.stack([zero, u2])))
    tc = _stress(grid, uc, params, tau_init) + fft(np.stack([zero, t12, zero])) * grid.dealias_mask
    return SimState(0.0, SpectralField(grid, uc), SpectralField(grid, tc), params)


GENERATORS = {
    "taylor-green": taylor_green,
    "random-smooth": random_smooth,
    "mode-probe": mode_probe,
}


def make_initial(name: str, grid: Grid, params: ModelParams, **kwargs) -> SimState:
    try:
        gen = GENERATORS[name]
    except KeyError:
        raise ConfigurationError(f"unknown initial condition {name!r}; known: {sorted(GENERATORS)}") from None
    return gen(grid, params, **kwargs)


def probe_amplitude(state: SimState, k: int) -> float:
    """|u2| coefficient of the shear mode (k, 0)."""
    return float(abs(state.u.coeffs[1, k % state.grid.nx, 0]))
