"""Tensor calculus of the Oldroyd-B model on spectral fields.

Gradient convention: ``(grad u)_ij = d_j u_i``.  Symmetric tensors are stored as
the three components (11, 12, 22).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spectral import ConfigurationError, SpectralField, fft, ifft

NU_LIMIT = 0.5


@dataclass(frozen=True)
class ModelParams:
    """Physical parameters.

    ``epsilon`` sets the relaxation time epsilon^2, ``b`` weights the symmetric
    part of the rotation correction, ``a`` is the amplitude of a constant
    background stress ``a * Id`` used by the instability probes.
    """

    epsilon: float = 0.1
    b: float = -1.0
    a: float = 0.0
    voigt: bool = True
    nu_limit: float = NU_LIMIT

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ConfigurationError(f"epsilon must be positive, got {self.epsilon}")
        if self.nu_limit != NU_LIMIT:
            raise ConfigurationError("nu_limit is fixed to 1/2")


def _require(f: SpectralField, ncomp: int, what: str):
    if f.ncomp != ncomp:
        raise ConfigurationError(f"{what} needs {ncomp} components, got {f.ncomp}")


def velocity_gradient_coeffs(grid, uc: np.ndarray) -> np.ndarray:
    """Coefficients of (d_x u1, d_y u1, d_x u2, d_y u2)."""
    return np.stack([grid.ikx * uc[0], grid.iky * uc[0], grid.ikx * uc[1], grid.iky * uc[1]])


def sym_gradient(u: SpectralField) -> SpectralField:
    """D(u) = (grad u + grad u^T) / 2 as (11, 12, 22)."""
    _require(u, 2, "sym_gradient")
    g = u.grid
    ux, uy, vx, vy = velocity_gradient_coeffs(g, u.coeffs)
    return SpectralField(g, np.stack([ux, 0.5 * (uy + vx), vy]))


def skew_gradient(u: SpectralField) -> SpectralField:
    """W(u) = (grad u - grad u^T) / 2 as a full 2x2 field of shape (2, 2, nx, ny)."""
    _require(u, 2, "skew_gradient")
    g = u.grid
    _, uy, vx, _ = velocity_gradient_coeffs(g, u.coeffs)
    w12 = 0.5 * (uy - vx)
    zero = np.zeros_like(w12)
    return SpectralField(g, np.stack([zero, w12, -w12, zero]))


def vorticity(u: SpectralField) -> SpectralField:
    _require(u, 2, "vorticity")
    g = u.grid
    return SpectralField(g, g.ikx * u.coeffs[1] - g.iky * u.coeffs[0])


def q_form_physical(tau: np.ndarray, grad_u: np.ndarray, b: float) -> np.ndarray:
    """Pointwise Q = tau W - W tau + b (tau D + D tau) on physical arrays.

    ``tau`` is (3, ...) in (11, 12, 22) order, ``grad_u`` is (4, ...) as
    (d_x u1, d_y u1, d_x u2, d_y u2).
    """
    t11, t12, t22 = tau
    ux, uy, vx, vy = grad_u
    w = 0.5 * (uy - vx)
    d11, d12, d22 = ux, 0.5 * (uy + vx), vy
    q11 = -2.0 * w * t12 + 2.0 * b * (t11 * d11 + t12 * d12)
    q12 = w * (t11 - t22) + b * (d12 * (t11 + t22) + t12 * (d11 + d22))
    q22 = 2.0 * w * t12 + 2.0 * b * (t12 * d12 + t22 * d22)
    return np.stack([q11, q12, q22])


def q_form(tau: SpectralField, u: SpectralField, b: float = -1.0) -> SpectralField:
    """Rotation correction Q(tau, grad u), computed pointwise and dealiased."""
    _require(tau, 3, "q_form stress")
    _require(u, 2, "q_form velocity")
    g = u.grid
    grad = ifft(velocity_gradient_coeffs(g, u.coeffs))
    q = q_form_physical(ifft(tau.coeffs), grad, b)
    return SpectralField(g, fft(q) * g.dealias_mask)


def advect(u: SpectralField, f: SpectralField) -> SpectralField:
    """u . grad f for every component of f, dealiased."""
    _require(u, 2, "advect velocity")
    g = u.grid
    up = ifft(u.coeffs)
    fx = ifft(g.ikx * f.coeffs)
    fy = ifft(g.iky * f.coeffs)
    return SpectralField(g, fft(up[0] * fx + up[1] * fy) * g.dealias_mask)


def tightened_sigma(u: SpectralField, tau: SpectralField) -> SpectralField:
    """sigma = tau - D(u)."""
    _require(tau, 3, "tightened_sigma")
    return tau - sym_gradient(u)


def sym_to_matrix(t: np.ndarray) -> np.ndarray:
    """(3, ...) stored symmetric tensor -> (2, 2, ...) full matrix."""
    return np.stack([np.stack([t[0], t[1]]), np.stack([t[1], t[2]])])


def frobenius_weights() -> np.ndarray:
    """Component weights turning the stored (11, 12, 22) sum into tau:tau."""
    return np.array([1.0, 2.0, 1.0])
