"""Spectral Sobolev norms and the two-tier energy functionals.

Norms use the Bessel multiplier ``(1 + |k|^2)^s`` and the integral
normalization over the torus, so ``||f||_{H^0}`` is the usual L^2 norm.  Tensor
norms are Frobenius (the stored off-diagonal component counts twice).  A list
norm such as ``||u, sigma, grad sigma||^2`` is the sum of the squared norms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .fields import frobenius_weights
from .spectral import TWO_PI, ConfigurationError, Grid, SpectralField

U_ORDERS = (1, 2, 3, 4, 5, 6)
CSV_COLUMNS = (
    ["t"] + [f"u_H{s}" for s in U_ORDERS]
    + ["tau_H2", "tau_H6", "sigma_H2", "E_low", "E_high", "E_total"]
)


def _sobolev_sq(grid: Grid, coeffs: np.ndarray, s: float, weights=None, grad: bool = False) -> float:
    power = np.abs(coeffs) ** 2
    if weights is not None:
        power = power * np.asarray(weights, dtype=float)[:, None, None]
    mult = grid.bessel(s)
    if grad:
        mult = mult * grid.k2 * grid.nyquist_free
    return float(TWO_PI**2 * np.sum(power.sum(axis=0) * mult))


def sobolev_norm(f: SpectralField, s: float) -> float:
    """sqrt((2 pi)^2 sum_k (1 + |k|^2)^s sum_c |f_c(k)|^2)."""
    if s < 0:
        raise ValueError("Sobolev index must be nonnegative")
    return math.sqrt(_sobolev_sq(f.grid, f.coeffs, s))


def tensor_sobolev_norm(t: SpectralField, s: float) -> float:
    """Frobenius H^s norm of a stored symmetric tensor."""
    return math.sqrt(_sobolev_sq(t.grid, t.coeffs, s, frobenius_weights()))


def sym_gradient_coeffs(grid: Grid, uc: np.ndarray) -> np.ndarray:
    return np.stack([grid.ikx * uc[0], 0.5 * (grid.iky * uc[0] + grid.ikx * uc[1]), grid.iky * uc[1]])


def instantaneous(grid: Grid, uc: np.ndarray, tc: Optional[np.ndarray], epsilon: float) -> dict:
    """Norms and energy integrands at one instant.

    A missing stress (Navier-Stokes run) is replaced by its limit D(u).
    """
    w = frobenius_weights()
    d = sym_gradient_coeffs(grid, uc)
    if tc is None:
        tc = d
    sig = tc - d
    out = {f"u_H{s}": math.sqrt(_sobolev_sq(grid, uc, s)) for s in U_ORDERS}
    tau_h2 = _sobolev_sq(grid, tc, 2, w)
    tau_h6 = _sobolev_sq(grid, tc, 6, w)
    sig_h2 = _sobolev_sq(grid, sig, 2, w)
    out["tau_H2"] = math.sqrt(tau_h2)
    out["tau_H6"] = math.sqrt(tau_h6)
    out["sigma_H2"] = math.sqrt(sig_h2)
    u_h2 = out["u_H2"] ** 2
    u_h6 = out["u_H6"] ** 2
    out["low_sup"] = u_h2 + sig_h2 + _sobolev_sq(grid, sig, 2, w, grad=True)
    out["low_int"] = _sobolev_sq(grid, uc, 2, grad=True) + sig_h2 / epsilon**2
    out["high_sup"] = u_h6 + epsilon**2 * (tau_h6 + _sobolev_sq(grid, tc, 6, w, grad=True))
    out["high_int"] = tau_h6
    return out


@dataclass
class EnergyLedger:
    """Running sups and trapezoidal time integrals composing E_low and E_high."""

    sup_low: float = 0.0
    int_low: float = 0.0
    sup_high: float = 0.0
    int_high: float = 0.0
    last_t: Optional[float] = None
    last_low_int: float = 0.0
    last_high_int: float = 0.0
    samples: list = field(default_factory=list)

    @property
    def e_low(self) -> float:
        return self.sup_low + self.int_low

    @property
    def e_high(self) -> float:
        return self.sup_high + self.int_high

    @property
    def e_total(self) -> float:
        return self.e_low + self.e_high

    def series(self, key: str) -> np.ndarray:
        return np.array([row[key] for row in self.samples])

    def add(self, t: float, inst: dict, dt: Optional[float] = None) -> dict:
        if self.last_t is not None:
            h = (t - self.last_t) if dt is None else dt
            self.int_low += 0.5 * h * (self.last_low_int + inst["low_int"])
            self.int_high += 0.5 * h * (self.last_high_int + inst["high_int"])
        self.sup_low = max(self.sup_low, inst["low_sup"])
        self.sup_high = max(self.sup_high, inst["high_sup"])
        self.last_t = t
        self.last_low_int = inst["low_int"]
        self.last_high_int = inst["high_int"]
        row = {"t": t}
        row.update({k: inst[k] for k in CSV_COLUMNS if k in inst})
        row.update(E_low=self.e_low, E_high=self.e_high, E_total=self.e_total)
        row.update({k: inst[k] for k in ("low_sup", "low_int", "high_sup", "high_int")})
        self.samples.append(row)
        return row


def ledger_update(ledger: EnergyLedger, state, dt: Optional[float] = None) -> EnergyLedger:
    """Fold the state's instantaneous energies into the ledger.

    ``dt`` defaults to the time elapsed since the previous sample.
    """
    tc = None if state.tau is None else state.tau.coeffs
    inst = instantaneous(state.grid, state.u.coeffs, tc, state.params.epsilon)
    ledger.add(state.t, inst, dt)
    return ledger


# --- decay fit ---------------------------------------------------------------

@dataclass(frozen=True)
class DecayFit:
    rate: float
    floor: float
    decaying: bool


def decay_fit(times, values, plateau_fraction: float = 0.25, window_ratio: float = 0.05) -> DecayFit:
    """Fit values ~ A e^{-rate t} + floor.

    The floor is the median of the last ``plateau_fraction`` of the samples; the
    rate is a least-squares fit of log(values - floor) over the early window,
    i.e. while values - floor stays above ``window_ratio`` of its initial size.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if len(times) < 10 or len(times) != len(values):
        raise ValueError("decay_fit needs at least 10 matching samples")
    n_tail = max(1, int(round(plateau_fraction * len(values))))
    floor = float(np.median(values[-n_tail:]))
    excess = values - floor
    head = excess[0]
    scale = max(abs(floor), float(np.max(np.abs(values))), 1e-300)
    if head <= 1e-12 * scale:
        return DecayFit(0.0, floor, False)
    window = np.flatnonzero(excess >= window_ratio * head)
    # contiguous early window
    stop = int(np.argmax(np.diff(window) != 1)) + 1 if np.any(np.diff(window) != 1) else len(window)
    window = window[:stop]
    if len(window) < 3:
        return DecayFit(0.0, floor, False)
    rate = -float(np.polyfit(times[window], np.log(excess[window]), 1)[0])
    if not rate > 0:
        return DecayFit(0.0, floor, False)
    return DecayFit(rate, floor, True)


# --- high-Weissenberg limit metrics -------------------------------------------

@dataclass(frozen=True)
class LimitMetrics:
    sup_h2_gap: float
    sup_h5_gap: float
    l2t_h2_sigma: float


def _trapezoid(t, y) -> float:
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    return float(np.sum(0.5 * np.diff(t) * (y[1:] + y[:-1]))) if len(t) > 1 else 0.0


def limit_metrics(run_eps, run_ns) -> LimitMetrics:
    """Distance of a Voigt run from the Navier-Stokes reference.

    Returns sup_t ||u_eps - v||_{H^2}, sup_t ||u_eps - v||_{H^5} and
    (int_0^T ||tau_eps - D(u_eps)||_{H^2}^2 dt)^{1/2}.  Arguments are either
    RunResults carrying a trajectory, or bare Trajectories.  The velocity gaps
    use the trajectory samples, which must share grid and times.  For a
    RunResult the time integral uses the ledger's sigma_H2 series (every
    diagnostics sample); for a Trajectory it uses the trajectory's stress.
    """
    traj_e = getattr(run_eps, "trajectory", run_eps)
    traj_n = getattr(run_ns, "trajectory", run_ns)
    if traj_e is None or traj_n is None:
        raise ConfigurationError("limit_metrics needs runs recorded with a trajectory")
    if traj_e.grid != traj_n.grid:
        raise ConfigurationError("limit_metrics needs identical grids")
    te = np.asarray(traj_e.times, dtype=float)
    tn = np.asarray(traj_n.times, dtype=float)
    if te.shape != tn.shape or not np.allclose(te, tn, rtol=0, atol=1e-12):
        raise ConfigurationError("limit_metrics needs shared sample times")
    grid = traj_e.grid
    h2, h5 = [], []
    for ue, un in zip(traj_e.u, traj_n.u):
        gap = ue - un
        h2.append(math.sqrt(_sobolev_sq(grid, gap, 2)))
        h5.append(math.sqrt(_sobolev_sq(grid, gap, 5)))

    ledger = getattr(run_eps, "ledger", None)
    if ledger is not None and ledger.samples:
        l2t_sq = _trapezoid(ledger.series("t"), ledger.series("sigma_H2") ** 2)
    else:
        w = frobenius_weights()
        sig = [0.0 if tc is None else _sobolev_sq(grid, tc - sym_gradient_coeffs(grid, uc), 2, w)
               for uc, tc in zip(traj_e.u, traj_e.tau)]
        l2t_sq = _trapezoid(te, sig)
    return LimitMetrics(max(h2), max(h5), math.sqrt(l2t_sq))
