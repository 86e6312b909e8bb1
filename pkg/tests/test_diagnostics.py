import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_field, random_velocity
from ovlab.diagnostics import (CSV_COLUMNS, EnergyLedger, decay_fit, instantaneous, ledger_update, limit_metrics,
                               sobolev_norm, tensor_sobolev_norm)
from ovlab.fields import ModelParams
from ovlab.initial import make_initial
from ovlab.solvers import SimState, StepperConfig, Trajectory, run
from ovlab.spectral import ConfigurationError, Grid, SpectralField, derivative, transform

seeds = st.integers(min_value=0, max_value=2**31 - 1)
PI2 = math.pi**2


def test_sobolev_examples(grid):
    x, y = grid.xy
    sx = transform(np.sin(x), grid)
    assert sobolev_norm(sx, 0) ** 2 == pytest.approx(2 * PI2, rel=1e-14)
    assert sobolev_norm(sx, 1) ** 2 == pytest.approx(4 * PI2, rel=1e-14)
    two = transform(np.sin(x) + np.sin(3 * y), grid)
    assert sobolev_norm(two, 2) ** 2 == pytest.approx(208 * PI2, rel=1e-14)
    assert sobolev_norm(sx, 0) == pytest.approx(sx.l2_norm(), rel=1e-14)
    with pytest.raises(ValueError):
        sobolev_norm(sx, -1)


def test_tensor_norm_counts_off_diagonal_twice(grid):
    x, _ = grid.xy
    zero = np.zeros(grid.shape)
    off = transform(np.stack([zero, np.sin(x), zero]), grid)
    assert tensor_sobolev_norm(off, 0) ** 2 == pytest.approx(4 * PI2, rel=1e-14)


@settings(max_examples=25, deadline=None)
@given(seeds, st.floats(0, 4), st.floats(0, 4))
def test_norms_are_monotone_in_s(seed, s1, s2):
    f = random_field(Grid(16, 16), 2, seed)
    lo, hi = sorted((s1, s2))
    assert sobolev_norm(f, lo) <= sobolev_norm(f, hi) * (1 + 1e-14)


def test_poincare_on_mean_zero_fields():
    grid = Grid(16, 16)
    for seed in range(100):
        f = random_field(grid, 1, seed)
        f.coeffs[0, 0, 0] = 0
        grad = math.hypot(derivative(f, 0).l2_norm(), derivative(f, 1).l2_norm())
        # Nyquist lines carry no derivative, so compare on the Nyquist-free part
        f_free = SpectralField(grid, f.coeffs * grid.nyquist_free)
        assert f_free.l2_norm() <= grad * (1 + 1e-14)


def zero_state(grid, eps=0.1):
    z2 = SpectralField(grid, np.zeros((2,) + grid.shape, dtype=complex))
    z3 = SpectralField(grid, np.zeros((3,) + grid.shape, dtype=complex))
    return SimState(0.0, z2, z3, ModelParams(epsilon=eps))


def test_zero_state_keeps_ledger_zero(grid):
    ledger = EnergyLedger()
    s = zero_state(grid)
    for t in (0.0, 0.5, 1.0):
        s.t = t
        ledger_update(ledger, s)
    assert ledger.e_total == 0
    assert all(ledger.samples[-1][c] == 0 for c in CSV_COLUMNS if c != "t")


def test_trapezoid_is_exact_on_constants():
    ledger = EnergyLedger()
    inst = dict(low_sup=0.0, low_int=1.0, high_sup=0.0, high_int=0.0)
    for t in np.linspace(0, 1, 11):
        ledger.add(float(t), inst)
    assert ledger.int_low == pytest.approx(1.0, abs=1e-12)


def test_ledger_explicit_dt():
    ledger = EnergyLedger()
    inst = dict(low_sup=0.0, low_int=2.0, high_sup=0.0, high_int=3.0)
    ledger.add(0.0, inst)
    ledger.add(5.0, inst, dt=0.5)
    assert ledger.int_low == 1.0 and ledger.int_high == 1.5


def test_instantaneous_composition(grid):
    u = random_velocity(grid, seed=1, k_cut=4)
    tau = random_field(grid, 3, seed=2, k_cut=4)
    eps = 0.2
    inst = instantaneous(grid, u.coeffs, tau.coeffs, eps)
    sig = tau.coeffs - np.stack([grid.ikx * u.coeffs[0],
                                 0.5 * (grid.iky * u.coeffs[0] + grid.ikx * u.coeffs[1]),
                                 grid.iky * u.coeffs[1]])
    sig_f = SpectralField(grid, sig)
    grad_sig_sq = sum(tensor_sobolev_norm(derivative(sig_f, ax), 2) ** 2 for ax in (0, 1))
    assert inst["sigma_H2"] == pytest.approx(tensor_sobolev_norm(sig_f, 2), rel=1e-12)
    assert inst["low_sup"] == pytest.approx(sobolev_norm(u, 2) ** 2 + inst["sigma_H2"] ** 2 + grad_sig_sq, rel=1e-12)
    grad_u_sq = sum(sobolev_norm(derivative(u, ax), 2) ** 2 for ax in (0, 1))
    assert inst["low_int"] == pytest.approx(grad_u_sq + inst["sigma_H2"] ** 2 / eps**2, rel=1e-12)
    tau_f = SpectralField(grid, tau.coeffs)
    grad_tau_sq = sum(tensor_sobolev_norm(derivative(tau_f, ax), 6) ** 2 for ax in (0, 1))
    expected_high = sobolev_norm(u, 6) ** 2 + eps**2 * (tensor_sobolev_norm(tau_f, 6) ** 2 + grad_tau_sq)
    assert inst["high_sup"] == pytest.approx(expected_high, rel=1e-12)
    assert inst["high_int"] == pytest.approx(tensor_sobolev_norm(tau_f, 6) ** 2, rel=1e-12)


def test_ledger_monotone_and_deterministic():
    grid = Grid(32, 32)
    s0 = make_initial("random-smooth", grid, ModelParams(epsilon=0.1), amplitude=100.0, seed=5)
    first = run(s0, StepperConfig(dt=0.01), 1.0).ledger
    second = run(s0, StepperConfig(dt=0.01), 1.0).ledger
    assert first.samples == second.samples
    e = first.series("E_total")
    assert np.all(np.diff(e) >= 0)
    for key in ("E_low", "E_high"):
        assert np.all(np.diff(first.series(key)) >= 0)
    assert math.isfinite(first.e_total)
    assert first.e_total == first.e_low + first.e_high


def test_decay_fit_synthetic():
    t = np.linspace(0, 5, 200)
    fit = decay_fit(t, np.exp(-2 * t) + 0.01)
    assert fit.decaying
    assert fit.rate == pytest.approx(2.0, rel=0.05)
    assert fit.floor == pytest.approx(0.01, rel=0.1)


def test_decay_fit_constant_series():
    fit = decay_fit(np.linspace(0, 1, 20), np.full(20, 3.0))
    assert not fit.decaying and fit.rate == 0


def test_decay_fit_needs_samples():
    with pytest.raises(ValueError):
        decay_fit([0, 1, 2], [3, 2, 1])


def test_decay_floor_scales_with_eps_squared():
    grid = Grid(32, 32)
    eps = 0.05
    s0 = make_initial("random-smooth", grid, ModelParams(epsilon=eps), amplitude=1.0, seed=0)
    res = run(s0, StepperConfig(dt=0.01), 6.0)
    t = res.ledger.series("t")
    h1_sq = res.ledger.series("u_H1") ** 2
    assert math.log(h1_sq[0] / h1_sq[-1]) >= 2
    fit = decay_fit(t, h1_sq)
    assert fit.decaying
    assert fit.floor <= eps**2 * res.ledger.e_low


def ns_double(grid, seed=0):
    s0 = make_initial("random-smooth", grid, ModelParams(epsilon=0.1), amplitude=20.0, seed=seed)
    return SimState(0.0, s0.u, None, s0.params)


def test_limit_metrics_vanish_on_identical_runs():
    grid = Grid(16, 16)
    res = run(ns_double(grid), StepperConfig(dt=0.01), 0.2, trajectory_every=2)
    m = limit_metrics(res, res)
    assert (m.sup_h2_gap, m.sup_h5_gap, m.l2t_h2_sigma) == (0.0, 0.0, 0.0)
    m = limit_metrics(res.trajectory, res.trajectory)
    assert m.l2t_h2_sigma == 0.0


def test_limit_metrics_trajectory_and_ledger_agree():
    grid = Grid(16, 16)
    s0 = make_initial("taylor-green", grid, ModelParams(epsilon=0.2), tau_init="zero")
    res = run(s0, StepperConfig(dt=0.01), 0.3, trajectory_every=1)
    ref = run(SimState(0.0, s0.u, None, s0.params), StepperConfig(dt=0.01), 0.3, trajectory_every=1)
    a = limit_metrics(res, ref)
    b = limit_metrics(res.trajectory, ref.trajectory)
    assert a.l2t_h2_sigma == pytest.approx(b.l2t_h2_sigma, rel=1e-12)
    assert a.sup_h2_gap == b.sup_h2_gap > 0


def test_limit_metrics_rejects_mismatches():
    g16, g32 = Grid(16, 16), Grid(32, 32)
    a = Trajectory(g16, [0.0], [np.zeros((2, 16, 16))], [None])
    with pytest.raises(ConfigurationError):
        limit_metrics(a, Trajectory(g32, [0.0], [np.zeros((2, 32, 32))], [None]))
    with pytest.raises(ConfigurationError):
        limit_metrics(a, Trajectory(g16, [0.1], [np.zeros((2, 16, 16))], [None]))
