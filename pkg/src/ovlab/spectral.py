"""Pseudospectral kernel on the periodic square [0, 2pi)^2.

Normalization: the forward transform divides by the number of grid points, so a
coefficient is the amplitude of its Fourier mode (``sin x`` has coefficients
``-i/2`` at k=(1,0) and ``+i/2`` at k=(-1,0)).  With this convention

    mean(|f|^2) = sum_k |f_k|^2,      integral(|f|^2) = (2 pi)^2 sum_k |f_k|^2.

Arrays are indexed ``[component, ix, iy]`` with x along axis -2 and y along
axis -1 (``indexing="ij"``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft as sfft

TWO_PI = 2.0 * np.pi


class ConfigurationError(ValueError):
    """Raised for inconsistent grids, shapes or run parameters."""


@dataclass(frozen=True)
class Grid:
    nx: int
    ny: int

    def __post_init__(self):
        for n in (self.nx, self.ny):
            if int(n) != n or n < 8 or n % 2:
                raise ConfigurationError(f"grid sizes must be even integers >= 8, got {self.nx}x{self.ny}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def spacing(self) -> float:
        return TWO_PI / max(self.nx, self.ny)

    @cached_property
    def xy(self) -> tuple[np.ndarray, np.ndarray]:
        x = TWO_PI * np.arange(self.nx) / self.nx
        y = TWO_PI * np.arange(self.ny) / self.ny
        return np.meshgrid(x, y, indexing="ij")

    @cached_property
    def kx(self) -> np.ndarray:
        return (np.fft.fftfreq(self.nx) * self.nx)[:, None] * np.ones((1, self.ny))

    @cached_property
    def ky(self) -> np.ndarray:
        return np.ones((self.nx, 1)) * (np.fft.fftfreq(self.ny) * self.ny)[None, :]

    @cached_property
    def k2(self) -> np.ndarray:
        return self.kx**2 + self.ky**2

    @cached_property
    def nyquist_free(self) -> np.ndarray:
        """1 away from the Nyquist lines |k_i| = n/2, 0 on them."""
        return ((np.abs(self.kx) < self.nx // 2) & (np.abs(self.ky) < self.ny // 2)).astype(float)

    @cached_property
    def ikx(self) -> np.ndarray:
        return 1j * self.kx * self.nyquist_free

    @cached_property
    def iky(self) -> np.ndarray:
        return 1j * self.ky * self.nyquist_free

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """2/3-rule: keep |k1| <= nx/3 and |k2| <= ny/3."""
        return ((np.abs(self.kx) <= self.nx / 3) & (np.abs(self.ky) <= self.ny / 3)).astype(float)

    @cached_property
    def inv_k2(self) -> np.ndarray:
        out = np.zeros(self.shape)
        nz = self.k2 > 0
        out[nz] = 1.0 / self.k2[nz]
        return out

    @cached_property
    def helmholtz(self) -> np.ndarray:
        return 1.0 + self.k2

    def bessel(self, s: float) -> np.ndarray:
        """Sobolev multiplier (1 + |k|^2)^s."""
        return self.helmholtz**s

    def __reduce__(self):
        return (Grid, (self.nx, self.ny))


@dataclass
class SpectralField:
    """Fourier coefficients of a real field with ``ncomp`` components.

    ``coeffs`` has shape ``(ncomp, nx, ny)``.  Symmetric tensors store the
    components (11, 12, 22) in that order.
    """

    grid: Grid
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.ndim == 2:
            c = c[None]
        if c.shape[1:] != self.grid.shape:
            raise ConfigurationError(f"coefficient shape {c.shape[1:]} does not match grid {self.grid.shape}")
        self.coeffs = c

    @property
    def ncomp(self) -> int:
        return self.coeffs.shape[0]

    def copy(self) -> "SpectralField":
        return SpectralField(self.grid, self.coeffs.copy())

    def _like(self, coeffs):
        return SpectralField(self.grid, coeffs)

    def _other(self, other):
        if isinstance(other, SpectralField):
            if other.grid != self.grid:
                raise ConfigurationError("fields live on different grids")
            return other.coeffs
        return other

    def __add__(self, other):
        return self._like(self.coeffs + self._other(other))

    def __sub__(self, other):
        return self._like(self.coeffs - self._other(other))

    def __mul__(self, scalar):
        return self._like(self.coeffs * scalar)

    __rmul__ = __mul__

    def __neg__(self):
        return self._like(-self.coeffs)

    def __getitem__(self, idx) -> "SpectralField":
        return self._like(self.coeffs[idx])

    def to_physical(self) -> np.ndarray:
        return inverse_transform(self)

    def l2_norm(self) -> float:
        """Integral L^2 norm over the torus, summed over stored components."""
        return float(TWO_PI * np.sqrt(np.sum(np.abs(self.coeffs) ** 2)))

    def hermitian_defect(self) -> float:
        """max |f(-k) - conj(f(k))| relative to max |f(k)|."""
        c = self.coeffs
        flipped = np.roll(np.flip(c, axis=(-2, -1)), shift=(1, 1), axis=(-2, -1))
        scale = max(np.max(np.abs(c)), 1e-300)
        return float(np.max(np.abs(flipped - np.conj(c))) / scale)


def fft(values: np.ndarray) -> np.ndarray:
    """Raw forward transform of arrays ``(..., nx, ny)`` with amplitude normalization."""
    return sfft.fft2(values, axes=(-2, -1), norm="forward")


def ifft(coeffs: np.ndarray) -> np.ndarray:
    return sfft.ifft2(coeffs, axes=(-2, -1), norm="forward").real


def transform(values, grid: Grid) -> SpectralField:
    values = np.asarray(values, dtype=float)
    if values.shape[-2:] != grid.shape:
        raise ConfigurationError(f"values of shape {values.shape[-2:]} do not match grid {grid.shape}")
    return SpectralField(grid, fft(values))


def inverse_transform(f: SpectralField) -> np.ndarray:
    return ifft(f.coeffs)


def derivative(f: SpectralField, axis: int, order: int = 1) -> SpectralField:
    """Multiply by (i k_axis)^order; axis 0 is x, axis 1 is y."""
    if order < 1:
        raise ValueError("derivative order must be >= 1")
    g = f.grid
    k = g.kx if axis == 0 else g.ky
    mult = (1j * k) ** order * g.nyquist_free
    return SpectralField(g, f.coeffs * mult)


def laplacian(f: SpectralField) -> SpectralField:
    g = f.grid
    return SpectralField(g, -g.k2 * g.nyquist_free * f.coeffs)


def dealias(f: SpectralField) -> SpectralField:
    return SpectralField(f.grid, f.coeffs * f.grid.dealias_mask)


def divergence(u: SpectralField) -> SpectralField:
    if u.ncomp != 2:
        raise ConfigurationError("divergence expects a 2-component field")
    g = u.grid
    return SpectralField(g, g.ikx * u.coeffs[0] + g.iky * u.coeffs[1])


def leray_coeffs(grid: Grid, c: np.ndarray) -> np.ndarray:
    """u - k (k.u)/|k|^2 on raw coefficients; the mean mode passes through."""
    kx, ky = grid.kx, grid.ky
    kdotu = (kx * c[0] + ky * c[1]) * grid.inv_k2
    return np.stack([c[0] - kx * kdotu, c[1] - ky * kdotu])


def leray_project(u: SpectralField) -> SpectralField:
    if u.ncomp != 2:
        raise ConfigurationError("Leray projection expects a 2-component field")
    return SpectralField(u.grid, leray_coeffs(u.grid, u.coeffs))


def inverse_helmholtz(f: SpectralField) -> SpectralField:
    """Apply (I - Delta)^{-1}."""
    return SpectralField(f.grid, f.coeffs / f.grid.helmholtz)
