import math

import numpy as np
import pytest

from conftest import random_field, random_velocity
from ovlab.diagnostics import EnergyLedger, sobolev_norm
from ovlab.fields import ModelParams, frobenius_weights
from ovlab.initial import make_initial, probe_amplitude
from ovlab.linear import growth_rates
from ovlab.solvers import (BlowUp, CFLError, SimState, StepperConfig, cfl_substeps, euler_ob_step, ns_step, run,
                           voigt_ob_step)
from ovlab.spectral import ConfigurationError, Grid, SpectralField, transform

RK4 = StepperConfig(dt=1e-3, scheme="explicit-rk4")
ETD = StepperConfig(dt=1e-3, scheme="expint-imex")


def zeros(grid, ncomp):
    return SpectralField(grid, np.zeros((ncomp,) + grid.shape, dtype=complex))


def state(grid, u, tau, **params):
    return SimState(0.0, u, tau, ModelParams(**params))


def advance(s, step, config, n):
    for _ in range(n):
        t = s.t
        s = step(s, config)
        s.t = t + config.dt
    return s


def test_euler_background_relaxes_exactly(grid):
    a = -2.0
    tau = zeros(grid, 3)
    tau.coeffs[0, 0, 0] = tau.coeffs[2, 0, 0] = a
    s = advance(state(grid, zeros(grid, 2), tau, epsilon=1.0, a=a, voigt=False), euler_ob_step, RK4, 1000)
    assert s.tau.coeffs[0, 0, 0].real == pytest.approx(a / math.e, abs=1e-8)
    assert s.tau.coeffs[2, 0, 0].real == pytest.approx(a / math.e, abs=1e-8)
    assert np.max(np.abs(s.u.coeffs)) == 0


@pytest.mark.parametrize("voigt", [False, True])
def test_zero_is_a_fixed_point(grid, voigt):
    step, cfg = (voigt_ob_step, ETD) if voigt else (euler_ob_step, RK4)
    s = advance(state(grid, zeros(grid, 2), zeros(grid, 3), epsilon=0.5, voigt=voigt), step, cfg, 5)
    assert np.max(np.abs(s.u.coeffs)) == 0 and np.max(np.abs(s.tau.coeffs)) == 0
    v = advance(state(grid, zeros(grid, 2), None), ns_step, ETD, 5)
    assert np.max(np.abs(v.u.coeffs)) == 0


def test_scheme_mismatch_is_rejected(grid):
    s = state(grid, zeros(grid, 2), zeros(grid, 3), epsilon=0.5)
    with pytest.raises(ConfigurationError):
        euler_ob_step(s, ETD)
    with pytest.raises(ConfigurationError):
        voigt_ob_step(s, RK4)


def test_voigt_dt_cap(grid):
    s = state(grid, zeros(grid, 2), zeros(grid, 3), epsilon=0.01)
    with pytest.raises(ConfigurationError):
        voigt_ob_step(s, StepperConfig(dt=2e-3))


@pytest.mark.parametrize("bad", [dict(dt=0.0), dict(cfl_safety=1.5), dict(scheme="euler"), dict(dealias=False)])
def test_stepper_config_validation(bad):
    with pytest.raises(ConfigurationError):
        StepperConfig(**bad)


@pytest.mark.parametrize("eps", [0.3, 0.05])
def test_voigt_frozen_relaxation_matches_per_mode_exponential(grid, eps):
    # phi Id and tau22(x) have gradient divergence, which the projection removes, so u stays 0
    phi = random_field(grid, 1, seed=2).coeffs[0]
    tau0 = SpectralField(grid, np.stack([phi, np.zeros_like(phi), phi]))
    tau0.coeffs[2, 1, 0] += 0.35
    tau0.coeffs[2, -1, 0] += 0.35
    s = state(grid, zeros(grid, 2), tau0.copy(), epsilon=eps)
    n = 20
    cfg = StepperConfig(dt=eps**2 / n)
    s = advance(s, voigt_ob_step, cfg, n)
    exact = tau0.coeffs * np.exp(-(eps**2) / (eps**2 * grid.helmholtz))
    rel = np.abs(s.tau.coeffs - exact) / np.maximum(np.abs(exact), 1e-300)
    assert np.max(np.abs(s.u.coeffs)) < 1e-15
    assert np.max(rel[np.abs(exact) > 0]) < 1e-8
    mode = tau0.coeffs[2, 1, 0]
    assert abs(s.tau.coeffs[2, 1, 0] - mode * math.exp(-0.5)) < 1e-8 * abs(mode)


def taylor_green_velocity(grid, amplitude=1.0):
    x, y = grid.xy
    return transform(amplitude * np.stack([np.sin(x) * np.cos(y), -np.cos(x) * np.sin(y)]), grid)


def test_ns_taylor_green_decay():
    grid = Grid(64, 64)
    v0 = taylor_green_velocity(grid)
    s = advance(state(grid, v0.copy(), None), ns_step, StepperConfig(dt=1e-3), 1000)
    assert s.t == pytest.approx(1.0)
    assert np.max(np.abs(s.u.to_physical() - v0.to_physical() * math.exp(-1.0))) < 1e-6


def test_ns_energy_law():
    grid = Grid(32, 32)
    v = random_velocity(grid, seed=4, k_cut=4)
    v = v * (2.0 / v.l2_norm())
    s = state(grid, v, None)
    cfg = StepperConfig(dt=2e-3)

    def energy(u):
        return 0.5 * u.l2_norm() ** 2

    def dissipation(u):
        return (2 * np.pi) ** 2 * np.sum(grid.k2 * np.abs(u.coeffs) ** 2)

    e0 = energy(s.u)
    integral, prev = 0.0, dissipation(s.u)
    for _ in range(500):
        s = ns_step(s, cfg)
        cur = dissipation(s.u)
        integral += 0.5 * cfg.dt * (prev + cur)
        prev = cur
    decrement = e0 - energy(s.u)
    assert decrement == pytest.approx(0.5 * integral, rel=1e-3)


def test_run_with_zero_t_end_returns_initial(grid):
    s0 = make_initial("random-smooth", grid, ModelParams(epsilon=0.2), amplitude=10.0)
    res = run(s0, ETD, 0.0)
    assert res.state is s0
    assert res.status == "ok"
    assert len(res.ledger.samples) == 1


def test_run_lands_on_t_end(grid):
    s0 = make_initial("taylor-green", grid, ModelParams(epsilon=0.2))
    res = run(s0, StepperConfig(dt=0.03), 0.1)
    assert res.state.t == 0.1
    assert res.state.step_count == 4
    assert [row["t"] for row in res.ledger.samples] == pytest.approx([0, 0.03, 0.06, 0.09, 0.1])


def _check_invariants(s):
    g = s.grid
    uc = s.u.coeffs
    assert np.max(np.abs(uc[:, 0, 0])) < 1e-13
    assert np.max(np.abs(g.kx * uc[0] + g.ky * uc[1])) < 1e-10 * s.u.l2_norm()
    assert np.all(np.isfinite(uc)) and np.all(np.isfinite(s.tau.coeffs))
    assert s.u.hermitian_defect() < 1e-12 and s.tau.hermitian_defect() < 1e-12


def test_voigt_long_window_keeps_invariants():
    grid = Grid(32, 32)
    params = ModelParams(epsilon=0.1)
    s0 = make_initial("random-smooth", grid, params, amplitude=200.0, seed=1)
    t_end = 0.1 ** (-2 / 3)
    res = run(s0, StepperConfig(dt=0.01), t_end)
    assert res.status == "ok"
    assert res.state.t == pytest.approx(4.6416, abs=1e-4)
    _check_invariants(res.state)
    assert math.isfinite(res.ledger.e_total)


def test_voigt_energy_balance():
    grid = Grid(32, 32)
    params = ModelParams(epsilon=0.2)
    s = make_initial("random-smooth", grid, params, amplitude=100.0, seed=2, tau_init="zero")
    cfg = StepperConfig(dt=2e-3)
    w = frobenius_weights()[:, None, None]

    def power(st):
        d = np.stack([grid.ikx * st.u.coeffs[0], 0.5 * (grid.iky * st.u.coeffs[0] + grid.ikx * st.u.coeffs[1]),
                      grid.iky * st.u.coeffs[1]])
        return -(2 * np.pi) ** 2 * np.sum(w * st.tau.coeffs * np.conj(d)).real

    e0 = 0.5 * s.u.l2_norm() ** 2
    work, prev = 0.0, power(s)
    energies = [e0]
    for _ in range(250):
        s = voigt_ob_step(s, cfg)
        cur = power(s)
        work += 0.5 * cfg.dt * (prev + cur)
        prev = cur
        energies.append(0.5 * s.u.l2_norm() ** 2)
    variation = np.sum(np.abs(np.diff(energies)))
    assert abs((energies[-1] - e0) - work) < 0.01 * variation


def test_voigt_second_order_in_time():
    grid = Grid(32, 32)
    params = ModelParams(epsilon=0.3)
    s0 = make_initial("random-smooth", grid, params, amplitude=50.0, seed=3, tau_init="zero")
    t_end = 0.2

    def solve(dt):
        return run(s0, StepperConfig(dt=dt), t_end, diagnostics_every=10**9).state

    ref = solve(0.0025 / 8)
    errs = []
    for dt in (0.01, 0.005, 0.0025):
        s = solve(dt)
        errs.append(np.sqrt(np.sum(np.abs(s.u.coeffs - ref.u.coeffs) ** 2) + np.sum(np.abs(s.tau.coeffs - ref.tau.coeffs) ** 2)))
    assert errs[0] / errs[1] >= 3.5
    assert errs[1] / errs[2] >= 3.5


def test_sigma_integral_decreases_with_eps():
    grid = Grid(32, 32)
    totals = []
    for eps in (0.2, 0.1, 0.05):
        s0 = make_initial("taylor-green", grid, ModelParams(epsilon=eps))
        ledger = run(s0, StepperConfig(dt=1e-3), 0.5).ledger
        t = ledger.series("t")
        sig = ledger.series("sigma_H2") ** 2
        totals.append(float(np.sum(0.5 * np.diff(t) * (sig[1:] + sig[:-1]))))
    assert totals[0] > totals[1] > totals[2]


def test_cfl_halving(grid):
    u = taylor_green_velocity(grid, amplitude=100.0)
    cfg = StepperConfig(dt=0.01, cfl_safety=0.5)
    m = cfl_substeps(grid, u.coeffs, cfg.dt, cfg)
    limit = 0.5 * grid.spacing / 100.0
    assert cfg.dt / 2**m <= limit < cfg.dt / 2 ** (m - 1)
    with pytest.raises(CFLError):
        cfl_substeps(grid, u.coeffs * 1e9, 1.0, cfg)


def test_non_finite_state_halts_with_blowup(grid):
    u = taylor_green_velocity(grid)
    u.coeffs[0, 1, 1] = np.nan
    s = state(grid, u, None)
    with pytest.raises(BlowUp):
        ns_step(s, ETD)


def test_euler_probe_grows_at_the_linear_rate():
    grid = Grid(32, 32)
    params = ModelParams(epsilon=1.0, a=-2.0, voigt=False)
    s0 = make_initial("mode-probe", grid, params, amplitude=1e-6, k=2)
    res = run(s0, StepperConfig(dt=1e-3, scheme="explicit-rk4"), 0.05, trajectory_every=5)
    amps = [abs(u[1, 2, 0]) for u in res.trajectory.u]
    rate = np.polyfit(res.trajectory.times, np.log(amps), 1)[0]
    assert rate == pytest.approx(growth_rates(2, -2.0, -1.0)[0].real, rel=0.05)
    assert probe_amplitude(res.state, 2) == pytest.approx(amps[-1])


def test_euler_probe_reaches_large_amplitude_before_t2():
    grid = Grid(64, 64)
    params = ModelParams(epsilon=10.0, a=-2.0, voigt=False)
    s0 = make_initial("mode-probe", grid, params, amplitude=1e-3, k=8)
    res = run(s0, StepperConfig(dt=1e-3, scheme="explicit-rk4", blowup_amplitude=1e3), 2.0, diagnostics_every=100)
    assert res.status == "blowup"
    assert res.blowup_time < 2.0
