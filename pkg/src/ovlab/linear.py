"""Linear stability of the Euler-Oldroyd-B system around ``u = 0, tau = a Id``.

For a shear mode ``u = (0, 1) e^{lambda t + i k x}`` the stress perturbation has
only the off-diagonal entry ``-i lambda / k`` and the growth rate solves

    lambda^2 + lambda + c k^2 = 0,    c = (1 - 2 a b) / 2.

The general form with relaxation time epsilon^2 and optional Voigt term is
``(1 + g k^2) lambda^2 + lambda / eps^2 + (k^2 / 2)(1 / eps^2 - 2 a b) = 0``
with ``g = 1`` for the Voigt system and 0 otherwise.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np


class NumericalError(RuntimeError):
    """An integrator produced an invalid (non-positive or non-finite) trajectory."""


@dataclass(frozen=True)
class DispersionResult:
    k: int
    a: float
    b: float
    lambda_plus: complex
    lambda_minus: complex
    sigma_mode: np.ndarray
    pressure_amp: complex

    @property
    def unstable(self) -> bool:
        return self.lambda_plus.real > 0


def dispersion_coefficient(a: float, b: float) -> float:
    return (1.0 - 2.0 * a * b) / 2.0


def _ordered(r1: complex, r2: complex) -> tuple[complex, complex]:
    if (r1.real, r1.imag) >= (r2.real, r2.imag):
        return r1, r2
    return r2, r1


def growth_rates(k: float, a: float, b: float, epsilon: float = 1.0, voigt: bool = False) -> tuple[complex, complex]:
    """Roots (lambda_plus, lambda_minus) of the shear-mode dispersion relation."""
    k2 = float(k) ** 2
    qa = 1.0 + (k2 if voigt else 0.0)
    qb = 1.0 / epsilon**2
    qc = 0.5 * k2 * (1.0 / epsilon**2 - 2.0 * a * b)
    sq = cmath.sqrt(qb * qb - 4.0 * qa * qc)
    # avoid cancellation: q = -(qb + sign * sqrt) / 2, roots q/qa and qc/q
    q = -0.5 * (qb + sq) if sq.real >= 0 else -0.5 * (qb - sq)
    r1 = q / qa
    r2 = qc / q if q != 0 else complex(0.0)
    return _ordered(complex(r1), complex(r2))


def dispersion(k: int, a: float, b: float = -1.0) -> DispersionResult:
    if k == 0:
        raise ValueError("k = 0 is degenerate for the shear-mode ansatz")
    lp, lm = growth_rates(k, a, b)
    s12 = -1j * lp / k
    sigma = np.array([[0.0, s12], [s12, 0.0]], dtype=complex)
    return DispersionResult(k=k, a=a, b=b, lambda_plus=lp, lambda_minus=lm, sigma_mode=sigma, pressure_amp=0j)


def unstable_lambda(k: float) -> float:
    """Closed form (-1 + sqrt(1 + 6 k^2)) / 2 for a = -2, b = -1."""
    return (-1.0 + math.sqrt(1.0 + 6.0 * k * k)) / 2.0


@dataclass(frozen=True)
class SlopeResult:
    slope: float
    stable: bool


def growth_slope(a: float, b: float, k_max: int) -> SlopeResult:
    """Re lambda_plus(k_max) / k_max, or 0 when c >= 0."""
    if dispersion_coefficient(a, b) >= 0:
        return SlopeResult(0.0, True)
    lp, _ = growth_rates(k_max, a, b)
    return SlopeResult(lp.real / k_max, False)


# --- per-mode linearized system -------------------------------------------

def linearized_rhs(y: np.ndarray, k: float, a: float, b: float) -> np.ndarray:
    """y = (u2, Sigma12, Sigma11, eta_bar): shear mode plus uniform stress offset."""
    c = dispersion_coefficient(a, b)
    u2, s12, s11, eta = y
    return np.array([
        1j * k * s12,
        1j * k * c * u2 - s12,
        -s11,
        -eta - a,
    ])


def linearized_step(y: np.ndarray, k: float, a: float, b: float, dt: float) -> np.ndarray:
    """One classical RK4 step of the linearized mode ODE."""
    k1 = linearized_rhs(y, k, a, b)
    k2 = linearized_rhs(y + 0.5 * dt * k1, k, a, b)
    k3 = linearized_rhs(y + 0.5 * dt * k2, k, a, b)
    k4 = linearized_rhs(y + dt * k3, k, a, b)
    return y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def eigen_state(k: float, a: float, b: float, amplitude: float = 1.0) -> np.ndarray:
    lp, _ = growth_rates(k, a, b)
    return np.array([amplitude, -1j * lp / k * amplitude, 0.0, 0.0], dtype=complex)


def integrate_linearized(y0, k, a, b, t_end, dt):
    """Return (times, states) from RK4 with a fixed step (last step shortened)."""
    n = int(math.ceil(t_end / dt - 1e-9))
    times = [0.0]
    states = [np.asarray(y0, dtype=complex)]
    y = states[0]
    t = 0.0
    for i in range(n):
        h = min(dt, t_end - t)
        y = linearized_step(y, k, a, b, h)
        t = (i + 1) * dt if i + 1 < n else t_end
        times.append(t)
        states.append(y)
    return np.array(times), np.array(states)


def fit_log_slope(times: np.ndarray, amplitudes: np.ndarray) -> float:
    """Least-squares slope of log(amplitude) against time."""
    return float(np.polyfit(times, np.log(amplitudes), 1)[0])


def linearized_growth_rate(k, a, b, t_end=None, dt=None, init="eigen", seed=0, fit_fraction=1.0):
    """Measured growth rate of |u2| from the RK4 mode integrator.

    ``init="random"`` starts from a seeded random state and fits only the last
    ``fit_fraction`` of the window, where the dominant root has taken over.
    """
    lp = growth_rates(k, a, b)[0].real
    scale = max(abs(lp), 1.0)
    if t_end is None:
        t_end = 2.0 / scale
    if dt is None:
        dt = 0.05 / scale
    if init == "eigen":
        y0 = eigen_state(k, a, b)
    else:
        rng = np.random.default_rng(seed)
        z = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        y0 = z.astype(complex)
    times, states = integrate_linearized(y0, k, a, b, t_end, dt)
    sel = times >= times[-1] * (1.0 - fit_fraction) - 1e-12
    return fit_log_slope(times[sel], np.abs(states[sel, 0]))


# --- norm-inflation ODE ----------------------------------------------------

@dataclass
class InflationTrace:
    k: float
    s: float
    lam: float
    times: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    alpha_comparison: np.ndarray
    beta_comparison: np.ndarray

    @property
    def proxy(self) -> float:
        """k^s alpha(1), the H^s size of the velocity at t = 1."""
        return self.k**self.s * float(self.alpha[-1])

    @property
    def lower_bound(self) -> float:
        return math.exp(self.lam)

    @property
    def comparison_margin(self) -> float:
        return float(np.min(self.alpha - self.alpha_comparison))


def inflation_ode(k: float, s: float = 3.0, dt: float = 1e-4) -> InflationTrace:
    """Integrate alpha' = k beta, beta' + beta = k (2 e^{1-t} - 1/2) alpha on [0, 1].

    Data: alpha(0) = 2 / k^s, beta(0) = 2 lambda / k^{s+1}, where lambda solves
    lambda^2 + lambda - (3/2) k^2 = 0.  The comparison solution is
    alpha_1 = k^{-s} e^{lambda t}, beta_1 = lambda k^{-s-1} e^{lambda t}.
    """
    if not k > 1:
        raise ValueError("inflation ODE needs k > 1")
    if s < 3:
        raise ValueError("inflation ODE needs s >= 3")
    lam = unstable_lambda(k)
    n = int(round(1.0 / dt))
    h = 1.0 / n

    def rhs(t, al, be):
        return k * be, -be + k * (2.0 * math.exp(1.0 - t) - 0.5) * al

    alpha = np.empty(n + 1)
    beta = np.empty(n + 1)
    al, be = 2.0 / k**s, 2.0 * lam / k ** (s + 1)
    alpha[0], beta[0] = al, be
    for i in range(n):
        t = i * h
        a1, b1 = rhs(t, al, be)
        a2, b2 = rhs(t + 0.5 * h, al + 0.5 * h * a1, be + 0.5 * h * b1)
        a3, b3 = rhs(t + 0.5 * h, al + 0.5 * h * a2, be + 0.5 * h * b2)
        a4, b4 = rhs(t + h, al + h * a3, be + h * b3)
        al += h / 6.0 * (a1 + 2 * a2 + 2 * a3 + a4)
        be += h / 6.0 * (b1 + 2 * b2 + 2 * b3 + b4)
        alpha[i + 1], beta[i + 1] = al, be
    if not (np.all(np.isfinite(alpha)) and np.all(alpha > 0) and np.all(beta > 0)):
        raise NumericalError(f"inflation ODE lost positivity for k={k}")
    times = np.linspace(0.0, 1.0, n + 1)
    growth = np.exp(lam * times)
    return InflationTrace(
        k=k, s=s, lam=lam, times=times, alpha=alpha, beta=beta,
        alpha_comparison=growth / k**s,
        beta_comparison=lam * growth / k ** (s + 1),
    )
