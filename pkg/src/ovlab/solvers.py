"""Time integration of the Euler-Oldroyd-B, Voigt-Oldroyd-B and limit Navier-Stokes systems.

All steppers work on raw coefficient arrays: ``u`` is (2, nx, ny), ``tau`` is
(3, nx, ny) in (11, 12, 22) order.  The pressure is never formed; the momentum
right-hand side is Leray-projected instead.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Optional, Protocol

import numpy as np

from .fields import ModelParams, q_form_physical, velocity_gradient_coeffs
from .spectral import ConfigurationError, Grid, SpectralField, fft, ifft, leray_coeffs

log = logging.getLogger(__name__)

SCHEMES = ("explicit-rk4", "expint-imex")
MAX_HALVINGS = 20


class BlowUp(RuntimeError):
    def __init__(self, t: float, reason: str):
        super().__init__(f"blow-up at t={t:.6g}: {reason}")
        self.t = t
        self.reason = reason


class CFLError(RuntimeError):
    pass


@dataclass(frozen=True)
class StepperConfig:
    dt: float = 1e-3
    cfl_safety: float = 0.5
    scheme: str = "expint-imex"
    dealias: bool = True
    # dt <= stiff_cap * eps^2 for the explicit D(u)/eps^2 coupling in the Voigt stepper
    stiff_cap: float = 10.0
    blowup_amplitude: float = 1e8

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigurationError("dt must be positive")
        if not 0 < self.cfl_safety <= 1:
            raise ConfigurationError("cfl_safety must lie in (0, 1]")
        if self.scheme not in SCHEMES:
            raise ConfigurationError(f"unknown scheme {self.scheme!r}")
        if not self.dealias:
            raise ConfigurationError("dealiasing cannot be disabled")


@dataclass
class SimState:
    t: float
    u: SpectralField
    tau: Optional[SpectralField]
    params: ModelParams
    step_count: int = 0

    @property
    def grid(self) -> Grid:
        return self.u.grid

    def copy(self) -> "SimState":
        return SimState(self.t, self.u.copy(), None if self.tau is None else self.tau.copy(),
                        self.params, self.step_count)


# --- right-hand sides -------------------------------------------------------

def _momentum_and_stress_terms(grid: Grid, uc, tc, b):
    """Return (projected momentum rhs, -(u.grad tau + Q) dealiased, D(u))."""
    mask = grid.dealias_mask
    ikx, iky = grid.ikx, grid.iky
    grad_c = velocity_gradient_coeffs(grid, uc)
    up = ifft(uc)
    grad = ifft(grad_c)
    tp = ifft(tc)
    tx = ifft(ikx * tc)
    ty = ifft(iky * tc)

    adv_u = np.stack([up[0] * grad[0] + up[1] * grad[1], up[0] * grad[2] + up[1] * grad[3]])
    stress_nl = up[0] * tx + up[1] * ty + q_form_physical(tp, grad, b)
    nl_u = -fft(adv_u) * mask
    nl_tau = -fft(stress_nl) * mask

    div_tau = np.stack([ikx * tc[0] + iky * tc[1], ikx * tc[1] + iky * tc[2]])
    du = leray_coeffs(grid, nl_u + div_tau)
    du[:, 0, 0] = 0.0
    d = np.stack([grad_c[0], 0.5 * (grad_c[1] + grad_c[2]), grad_c[3]])
    return du, nl_tau, d


def euler_ob_rhs(grid: Grid, uc, tc, params: ModelParams):
    du, nl_tau, d = _momentum_and_stress_terms(grid, uc, tc, params.b)
    return du, nl_tau + (d - tc) / params.epsilon**2


def voigt_nonstiff_rhs(grid: Grid, uc, tc, params: ModelParams):
    """Momentum rhs and the non-stiff part of d tau/dt after inverting (I - Delta)."""
    du, nl_tau, d = _momentum_and_stress_terms(grid, uc, tc, params.b)
    return du, (nl_tau + d / params.epsilon**2) / grid.helmholtz


def ns_nonlinear(grid: Grid, vc):
    up = ifft(vc)
    grad = ifft(velocity_gradient_coeffs(grid, vc))
    adv = np.stack([up[0] * grad[0] + up[1] * grad[1], up[0] * grad[2] + up[1] * grad[3]])
    out = leray_coeffs(grid, -fft(adv) * grid.dealias_mask)
    out[:, 0, 0] = 0.0
    return out


# --- exponential coefficients -----------------------------------------------

def phi1(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 1e-5
    zs = np.where(small, 1.0, z)
    return np.where(small, 1.0 + z / 2.0 + z * z / 6.0, np.expm1(zs) / zs)


def phi2(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 1e-3
    zs = np.where(small, 1.0, z)
    series = 0.5 + z / 6.0 + z * z / 24.0 + z**3 / 120.0
    return np.where(small, series, (np.expm1(zs) - zs) / (zs * zs))


@lru_cache(maxsize=32)
def _etd_coefficients(grid: Grid, epsilon: float, dt: float):
    rate = 1.0 / (epsilon**2 * grid.helmholtz)
    z = -rate * dt
    return np.exp(z), phi1(z), phi2(z)


@lru_cache(maxsize=32)
def _ns_factors(grid: Grid, nu: float, dt: float):
    return np.exp(-nu * grid.k2 * dt / 2.0), np.exp(-nu * grid.k2 * dt)


# --- single steps ------------------------------------------------------------

def _rk4_euler(grid, uc, tc, params, dt):
    k1u, k1t = euler_ob_rhs(grid, uc, tc, params)
    k2u, k2t = euler_ob_rhs(grid, uc + 0.5 * dt * k1u, tc + 0.5 * dt * k1t, params)
    k3u, k3t = euler_ob_rhs(grid, uc + 0.5 * dt * k2u, tc + 0.5 * dt * k2t, params)
    k4u, k4t = euler_ob_rhs(grid, uc + dt * k3u, tc + dt * k3t, params)
    u_new = uc + dt / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u)
    t_new = tc + dt / 6.0 * (k1t + 2.0 * k2t + 2.0 * k3t + k4t)
    return u_new, t_new


def _etd2_voigt(grid, uc, tc, params, dt):
    """ETD2RK: exact decay factor for -tau/(eps^2 (1+|k|^2)), explicit rest."""
    e, p1, p2 = _etd_coefficients(grid, params.epsilon, dt)
    n0u, n0t = voigt_nonstiff_rhs(grid, uc, tc, params)
    au = uc + dt * n0u
    at = e * tc + dt * p1 * n0t
    n1u, n1t = voigt_nonstiff_rhs(grid, au, at, params)
    return au + 0.5 * dt * (n1u - n0u), at + dt * p2 * (n1t - n0t)


def _ifrk4_ns(grid, vc, nu, dt):
    e2, e1 = _ns_factors(grid, nu, dt)
    k1 = ns_nonlinear(grid, vc)
    k2 = ns_nonlinear(grid, e2 * (vc + 0.5 * dt * k1))
    k3 = ns_nonlinear(grid, e2 * vc + 0.5 * dt * k2)
    k4 = ns_nonlinear(grid, e1 * vc + dt * e2 * k3)
    return e1 * vc + dt / 6.0 * (e1 * k1 + 2.0 * e2 * (k2 + k3) + k4)


def max_speed(grid: Grid, uc) -> float:
    up = ifft(uc)
    return float(np.sqrt(np.max(up[0] ** 2 + up[1] ** 2)))


def cfl_substeps(grid: Grid, uc, dt: float, config: StepperConfig) -> int:
    """Number of halvings needed so dt / 2^m respects the CFL bound."""
    umax = max_speed(grid, uc)
    if umax == 0 or not math.isfinite(umax):
        return 0
    limit = config.cfl_safety * grid.spacing / umax
    m = 0
    while dt / 2**m > limit:
        m += 1
        if m > MAX_HALVINGS:
            raise CFLError(f"CFL still violated after {MAX_HALVINGS} halvings (max|u|={umax:.3g})")
    return m


def _finalize(state: SimState, uc, tc, dt, config: StepperConfig) -> SimState:
    grid = state.grid
    uc = leray_coeffs(grid, uc)
    uc[:, 0, 0] = 0.0
    t_new = state.t + dt
    arrays = [uc] if tc is None else [uc, tc]
    for c in arrays:
        if not np.all(np.isfinite(c)):
            raise BlowUp(t_new, "non-finite values")
    amp = max(float(np.max(np.abs(ifft(c)))) for c in arrays)
    if amp > config.blowup_amplitude:
        raise BlowUp(t_new, f"amplitude {amp:.3g} exceeds {config.blowup_amplitude:.3g}")
    return SimState(t_new, SpectralField(grid, uc), None if tc is None else SpectralField(grid, tc),
                    state.params, state.step_count + 1)


def _advance(state: SimState, config: StepperConfig, dt: float, kernel) -> SimState:
    grid = state.grid
    uc = state.u.coeffs
    tc = None if state.tau is None else state.tau.coeffs
    m = cfl_substeps(grid, uc, dt, config)
    h = dt / 2**m
    for _ in range(2**m):
        uc, tc = kernel(grid, uc, tc, h)
    return _finalize(state, uc, tc, dt, config)


def euler_ob_step(state: SimState, config: StepperConfig, dt: Optional[float] = None) -> SimState:
    """Advance the unregularized system by classical RK4."""
    if config.scheme != "explicit-rk4":
        raise ConfigurationError("the Euler-Oldroyd-B stepper uses scheme 'explicit-rk4'")
    dt = config.dt if dt is None else dt
    p = state.params
    return _advance(state, config, dt, lambda g, u, t, h: _rk4_euler(g, u, t, p, h))


def voigt_dt_cap(params: ModelParams, config: StepperConfig) -> float:
    return config.stiff_cap * params.epsilon**2


def voigt_ob_step(state: SimState, config: StepperConfig, dt: Optional[float] = None) -> SimState:
    """Advance the Voigt-regularized system by the exponential ETD2 rule."""
    if config.scheme != "expint-imex":
        raise ConfigurationError("the Voigt stepper uses scheme 'expint-imex'")
    dt = config.dt if dt is None else dt
    p = state.params
    if dt > voigt_dt_cap(p, config) * (1 + 1e-12):
        raise ConfigurationError(f"dt={dt} exceeds stiff_cap*eps^2={voigt_dt_cap(p, config)}")
    return _advance(state, config, dt, lambda g, u, t, h: _etd2_voigt(g, u, t, p, h))


def ns_step(state: SimState, config: StepperConfig, dt: Optional[float] = None) -> SimState:
    """Advance 2-D Navier-Stokes with viscosity nu_limit = 1/2 (integrating-factor RK4)."""
    dt = config.dt if dt is None else dt
    nu = state.params.nu_limit
    return _advance(state, config, dt, lambda g, u, t, h: (_ifrk4_ns(g, u, nu, h), None))


def stepper_for(state: SimState, config: StepperConfig):
    if state.tau is None:
        return ns_step
    if state.params.voigt:
        return voigt_ob_step
    return euler_ob_step


# --- driver ------------------------------------------------------------------

class DiagnosticsSink(Protocol):
    def diagnostics(self, row: dict) -> None: ...

    def snapshot(self, state: SimState) -> None: ...


@dataclass
class Trajectory:
    grid: Grid
    times: list = field(default_factory=list)
    u: list = field(default_factory=list)
    tau: list = field(default_factory=list)

    def record(self, state: SimState):
        self.times.append(state.t)
        self.u.append(state.u.coeffs.copy())
        self.tau.append(None if state.tau is None else state.tau.coeffs.copy())


@dataclass
class RunResult:
    state: SimState
    ledger: object
    status: str = "ok"
    blowup_time: Optional[float] = None
    blowup_reason: str = ""
    trajectory: Optional[Trajectory] = None


def run(initial: SimState, config: StepperConfig, t_end: float, sink: Optional[DiagnosticsSink] = None,
        diagnostics_every: int = 1, snapshot_every: int = 0, trajectory_every: int = 0,
        step_fn=None) -> RunResult:
    """Step ``initial`` to ``t_end``; steps land on t0 + n dt, the last one is shortened."""
    from .diagnostics import EnergyLedger, ledger_update

    if t_end < 0:
        raise ConfigurationError("t_end must be non-negative")
    step = step_fn or stepper_for(initial, config)
    ledger = EnergyLedger()
    traj = Trajectory(initial.grid) if trajectory_every else None
    state = initial
    t0 = initial.t
    dt = config.dt

    def observe(s: SimState, final: bool):
        n = s.step_count - initial.step_count
        if final or n % diagnostics_every == 0:
            ledger_update(ledger, s)
            if sink is not None:
                sink.diagnostics(ledger.samples[-1])
        if sink is not None and snapshot_every and (final or n % snapshot_every == 0):
            sink.snapshot(s)
        if traj is not None and (final or n % trajectory_every == 0):
            traj.record(s)

    observe(state, final=t_end <= 0)
    if t_end <= 0:
        return RunResult(state, ledger, trajectory=traj)
    n_steps = max(1, int(math.ceil((t_end - 1e-12 * max(1.0, t_end)) / dt)))
    try:
        for n in range(1, n_steps + 1):
            target = t_end if n == n_steps else t0 + n * dt
            state = step(state, config, target - state.t)
            state.t = target
            observe(state, final=n == n_steps)
    except BlowUp as exc:
        log.warning("run halted: %s", exc)
        return RunResult(state, ledger, "blowup", exc.t, exc.reason, traj)
    return RunResult(state, ledger, trajectory=traj)
