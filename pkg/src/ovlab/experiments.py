"""Packaged experiments driven by a RunConfig.

Each ``cmd_*`` writes its outputs under the configured output directory and
returns a process exit code:

    0 success, 1 audit invariant failure, 2 configuration error,
    3 integrator failure, 4 blow-up, 5 I/O error, 6 checksum mismatch.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig
from .diagnostics import CSV_COLUMNS, EnergyLedger, instantaneous, limit_metrics
from .fields import ModelParams
from .initial import make_initial
from .io import (RunDirectory, read_csv_rows, read_fld, read_manifest, verify_manifest,
                 write_csv, write_manifest)
from .linear import growth_rates, growth_slope, inflation_ode, linearized_growth_rate
from .solvers import RunResult, SimState, StepperConfig, run, voigt_dt_cap
from .spectral import ConfigurationError, Grid, SpectralField, fft

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_AUDIT_FAIL = 1
EXIT_CONFIG = 2
EXIT_INTEGRATOR = 3
EXIT_BLOWUP = 4
EXIT_IO = 5
EXIT_CHECKSUM = 6

DISPERSION_COLUMNS = ["k", "re_lambda_plus", "im_lambda_plus", "re_lambda_minus", "im_lambda_minus",
                      "slope", "stepper_rate", "rel_err"]
INFLATE_COLUMNS = ["k", "s", "lambda_plus", "alpha_1", "lower_bound", "ratio", "comparison_margin"]
SWEEP_COLUMNS = ["eps", "t_end", "status", "sup_H2_gap", "sup_H5_gap", "L2t_H2_sigma", "E_total_end",
                 "slope_L2t_H2_sigma", "slope_sup_H2_gap", "uniform_ratio", "uniform_ok"]


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _prepare_dir(path: Path) -> Path:
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {path}: {exc}") from exc
    return path


# --- builders ----------------------------------------------------------------

def model_params(cfg: RunConfig, epsilon=None) -> ModelParams:
    p = cfg.params
    return ModelParams(epsilon=p.epsilon if epsilon is None else epsilon, b=p.b, a=p.a, voigt=p.voigt)


def stepper_config(cfg: RunConfig, voigt=None) -> StepperConfig:
    s = cfg.stepper
    voigt = cfg.params.voigt if voigt is None else voigt
    scheme = s.scheme or ("expint-imex" if voigt else "explicit-rk4")
    return StepperConfig(dt=s.dt, cfl_safety=s.cfl_safety, scheme=scheme, dealias=s.dealias,
                         stiff_cap=s.stiff_cap, blowup_amplitude=s.blowup_amplitude)


def initial_state(cfg: RunConfig, params: ModelParams) -> SimState:
    ic = cfg.initial_condition
    kwargs = dict(amplitude=ic.amplitude, seed=ic.seed, k=ic.k, k_cut=ic.k_cut)
    if ic.tau_init is not None:
        kwargs["tau_init"] = ic.tau_init
    return make_initial(ic.name, Grid(cfg.grid.nx, cfg.grid.ny), params, **kwargs)


def execute_run(cfg: RunConfig, initial: SimState, stepper: StepperConfig, out_dir: Path, t_end: float,
                trajectory_every: int = 0, extra: dict | None = None) -> RunResult:
    """Run one simulation into ``out_dir`` and seal it with a manifest."""
    started = _now()
    _prepare_dir(out_dir)
    with RunDirectory(out_dir) as sink:
        result = run(initial, stepper, t_end, sink=sink, diagnostics_every=cfg.diagnostics_every,
                     snapshot_every=cfg.snapshot_every, trajectory_every=trajectory_every)
        if result.status == "blowup" and cfg.snapshot_every:
            sink.snapshot(result.state)
    ledger = result.ledger
    payload = {
        "config": cfg.to_dict(),
        "code_version": __version__,
        "started": started,
        "finished": _now(),
        "exit_status": EXIT_BLOWUP if result.status == "blowup" else EXIT_OK,
        "status": result.status,
        "blowup_time": result.blowup_time,
        "blowup_reason": result.blowup_reason,
        "t_end": t_end,
        "t_final": result.state.t,
        "steps": result.state.step_count,
        "system": "ns" if initial.tau is None else ("voigt" if initial.params.voigt else "euler-ob"),
        "epsilon": initial.params.epsilon,
        "ledger": {"E_low": ledger.e_low, "E_high": ledger.e_high, "E_total": ledger.e_total},
    }
    if extra:
        payload.update(extra)
    write_manifest(out_dir, payload)
    return result


# --- experiments -----------------------------------------------------------------

def cmd_dispersion(cfg: RunConfig) -> int:
    d = cfg.dispersion
    a = cfg.params.a if d.a is None else d.a
    b = cfg.params.b if d.b is None else d.b
    if d.k_max < 1:
        raise ConfigurationError("dispersion.k_max must be >= 1")
    out = _prepare_dir(cfg.resolved_output_dir())
    started = _now()
    rows = []
    for k in range(1, d.k_max + 1):
        lp, lm = growth_rates(k, a, b)
        rate = linearized_growth_rate(k, a, b)
        rows.append({
            "k": k, "re_lambda_plus": lp.real + 0.0, "im_lambda_plus": lp.imag + 0.0,
            "re_lambda_minus": lm.real + 0.0, "im_lambda_minus": lm.imag + 0.0,
            "slope": growth_slope(a, b, k).slope, "stepper_rate": rate,
            "rel_err": abs(rate - lp.real) / max(abs(lp.real), 1.0),
        })
    write_csv(out / "dispersion.csv", DISPERSION_COLUMNS, rows)
    write_manifest(out, {"config": cfg.to_dict(), "code_version": __version__, "started": started,
                         "finished": _now(), "exit_status": EXIT_OK, "a": a, "b": b})
    return EXIT_OK


def cmd_inflate(cfg: RunConfig) -> int:
    f = cfg.inflate
    out = _prepare_dir(cfg.resolved_output_dir())
    started = _now()
    rows = []
    for k in f.k_list:
        try:
            trace = inflation_ode(k, f.s, f.dt)
        except ValueError as exc:
            raise ConfigurationError(str(exc)) from exc
        rows.append({
            "k": k, "s": float(f.s), "lambda_plus": trace.lam, "alpha_1": float(trace.alpha[-1]),
            "lower_bound": trace.lower_bound, "ratio": trace.proxy / trace.lower_bound,
            "comparison_margin": trace.comparison_margin,
        })
    write_csv(out / "inflate.csv", INFLATE_COLUMNS, rows)
    write_manifest(out, {"config": cfg.to_dict(), "code_version": __version__, "started": started,
                         "finished": _now(), "exit_status": EXIT_OK})
    return EXIT_OK


def cmd_simulate(cfg: RunConfig) -> int:
    params = model_params(cfg)
    stepper = stepper_config(cfg)
    state = initial_state(cfg, params)
    result = execute_run(cfg, state, stepper, cfg.resolved_output_dir(), cfg.resolved_t_end())
    if result.status == "blowup":
        log.warning("blow-up at t=%.6g (%s)", result.blowup_time, result.blowup_reason)
        return EXIT_BLOWUP
    return EXIT_OK


def _loglog_slope(eps, values) -> float:
    pts = [(e, v) for e, v in zip(eps, values) if v > 0 and math.isfinite(v)]
    if len(pts) < 2:
        return float("nan")
    x = np.log([p[0] for p in pts])
    y = np.log([p[1] for p in pts])
    return float(np.polyfit(x, y, 1)[0])


def _as_ns(state: SimState) -> SimState:
    return SimState(state.t, state.u.copy(), None, state.params, state.step_count)


def cmd_sweep(cfg: RunConfig, threads: int = 1) -> int:
    """Voigt runs over eps_list plus a Navier-Stokes reference from the same u0.

    ``sweep.system = "ns"`` replaces the members by Navier-Stokes runs, a test
    double for which every gap vanishes.
    """
    member_system = cfg.sweep.system
    eps_list = list(cfg.sweep.eps_list)
    if not cfg.params.voigt:
        raise ConfigurationError("sweep runs the Voigt system; set params.voigt = true")
    stepper = stepper_config(cfg, voigt=True)
    for eps in eps_list:
        cap = voigt_dt_cap(ModelParams(epsilon=eps), stepper)
        if stepper.dt > cap:
            raise ConfigurationError(f"stepper.dt={stepper.dt} exceeds stiff_cap*eps^2={cap:g} for eps={eps}")
    root = _prepare_dir(cfg.resolved_output_dir())
    started = _now()
    t_ends = {eps: cfg.resolved_t_end(eps) for eps in eps_list}

    references = {}
    for i, t_end in enumerate(sorted(set(t_ends.values()), reverse=True)):
        name = "ns_reference" if len(set(t_ends.values())) == 1 else f"ns_reference_{i}"
        ns0 = _as_ns(initial_state(cfg, model_params(cfg, epsilon=eps_list[-1])))
        references[t_end] = execute_run(cfg, ns0, stepper, root / name, t_end,
                                        trajectory_every=cfg.trajectory_every, extra={"role": "reference"})

    def member(eps):
        state = initial_state(cfg, model_params(cfg, epsilon=eps))
        if member_system == "ns":
            state = _as_ns(state)
        result = execute_run(cfg, state, stepper, root / f"eps_{eps:g}", t_ends[eps],
                             trajectory_every=cfg.trajectory_every, extra={"role": "member"})
        row = {"eps": eps, "t_end": t_ends[eps], "status": result.status,
               "E_total_end": result.ledger.e_total}
        if result.status == "ok":
            m = limit_metrics(result, references[t_ends[eps]])
            row.update(sup_H2_gap=m.sup_h2_gap, sup_H5_gap=m.sup_h5_gap, L2t_H2_sigma=m.l2t_h2_sigma)
        else:
            row.update(sup_H2_gap=float("nan"), sup_H5_gap=float("nan"), L2t_H2_sigma=float("nan"))
        result.trajectory = None
        return row

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(member, eps_list))
    else:
        rows = [member(eps) for eps in eps_list]

    ok = [r for r in rows if r["status"] == "ok"]
    slope_sigma = _loglog_slope([r["eps"] for r in ok], [r["L2t_H2_sigma"] for r in ok])
    slope_gap = _loglog_slope([r["eps"] for r in ok], [r["sup_H2_gap"] for r in ok])
    energies = [r["E_total_end"] for r in rows]
    ratio = max(energies) / min(energies) if min(energies) > 0 else float("nan")
    uniform_ok = len(ok) == len(rows) and ratio <= cfg.sweep.uniform_factor
    for r in rows:
        r.update(slope_L2t_H2_sigma=slope_sigma, slope_sup_H2_gap=slope_gap, uniform_ratio=ratio,
                 uniform_ok=str(uniform_ok).lower())
    write_csv(root / "sweep_summary.csv", SWEEP_COLUMNS, rows)
    status = EXIT_OK if len(ok) == len(rows) else EXIT_BLOWUP
    write_manifest(root, {"config": cfg.to_dict(), "code_version": __version__, "started": started,
                          "finished": _now(), "exit_status": status, "member_system": member_system,
                          "uniform_ratio": ratio, "uniform_ok": uniform_ok})
    return status


# --- audit ---------------------------------------------------------------------

@dataclasses.dataclass
class AuditReport:
    checks: list = dataclasses.field(default_factory=list)
    checksum_failure: bool = False

    def add(self, name: str, ok: bool, detail: str = "", advisory: bool = False):
        self.checks.append((name, bool(ok), detail, advisory))

    @property
    def passed(self) -> bool:
        return not self.checksum_failure and all(ok for _, ok, _, advisory in self.checks if not advisory)

    def exit_code(self) -> int:
        if self.checksum_failure:
            return EXIT_CHECKSUM
        return EXIT_OK if self.passed else EXIT_AUDIT_FAIL

    def lines(self) -> list[str]:
        out = []
        for name, ok, detail, advisory in self.checks:
            tag = "PASS" if ok else ("WARN" if advisory else "FAIL")
            out.append(f"{tag} {name}" + (f": {detail}" if detail else ""))
        return out


def audit_run(run_dir, rel_tol: float = 1e-9, cadence_tol: float = 0.05) -> AuditReport:
    """Re-verify a run directory from its manifest and stored snapshots."""
    root = Path(run_dir)
    report = AuditReport()
    try:
        manifest = read_manifest(root)
    except (OSError, ValueError) as exc:
        raise OSError(f"cannot read manifest in {root}: {exc}") from exc
    problems = verify_manifest(root, manifest)
    report.add("manifest checksums", not problems, "; ".join(problems))
    if problems:
        report.checksum_failure = True
        return report
    if not (root / "snapshots.csv").exists():
        report.add("snapshots present", False, "not a simulation run directory")
        return report

    cfg = manifest["config"]
    nx, ny = cfg["grid"]["nx"], cfg["grid"]["ny"]
    grid = Grid(nx, ny)
    epsilon = manifest.get("epsilon", cfg["params"]["epsilon"])
    diag = {float(r["t"]): r for r in read_csv_rows(root / "diagnostics.csv")}
    snaps = read_csv_rows(root / "snapshots.csv")
    div_ok = mean_ok = sym_ok = herm_ok = diag_ok = True
    worst_div = worst_diag = 0.0
    coarse = EnergyLedger()
    for row in snaps:
        values = read_fld(root / row["file"])
        if values.shape[-2:] != (nx, ny):
            report.add(f"snapshot grid {row['file']}", False, f"shape {values.shape}")
            return report
        coeffs = fft(values) * grid.dealias_mask
        uc = coeffs[:2]
        tc = coeffs[2:] if values.shape[0] == 5 else None
        u_norm = SpectralField(grid, uc).l2_norm()
        div = np.max(np.abs(grid.kx * uc[0] + grid.ky * uc[1]) * grid.nyquist_free) * 2 * np.pi
        worst_div = max(worst_div, div / max(u_norm, 1e-300))
        div_ok &= bool(div <= 1e-10 * max(u_norm, 1e-300))
        # snapshots are physical values, so the re-transform carries roundoff of the field size
        mean_ok &= bool(np.max(np.abs(uc[:, 0, 0])) < 1e-13 * max(1.0, float(np.max(np.abs(values[:2])))))
        sym_ok &= bool(np.all(np.isfinite(values)))
        herm_ok &= SpectralField(grid, coeffs).hermitian_defect() < 1e-12
        inst = instantaneous(grid, uc, tc, epsilon)
        coarse.add(float(row["t"]), inst)
        stored = diag.get(float(row["t"]))
        if stored is not None:
            for key in [c for c in CSV_COLUMNS if c not in ("t", "E_low", "E_high", "E_total")]:
                ref = float(stored[key])
                gap = abs(inst[key] - ref) / max(abs(ref), 1e-300) if ref else abs(inst[key])
                worst_diag = max(worst_diag, gap)
                diag_ok &= gap <= rel_tol or abs(inst[key] - ref) < 1e-12
    report.add("divergence-free", div_ok, f"max relative divergence {worst_div:.3e}")
    report.add("mean-zero velocity", mean_ok)
    report.add("stress symmetric and finite", sym_ok)
    report.add("hermitian symmetry", herm_ok)
    report.add("diagnostics recomputed from snapshots", diag_ok, f"max relative gap {worst_diag:.3e}")
    if len(snaps) >= 2 and diag:
        final = diag[max(diag)]
        stored_total = float(final["E_total"])
        gap = abs(coarse.e_total - stored_total) / max(abs(stored_total), 1e-300)
        # quadrature at the snapshot cadence only approximates the stored ledger, so this never fails the audit
        report.add("ledger at snapshot cadence", gap < cadence_tol, f"relative gap {gap:.3e}", advisory=True)
    return report


def cmd_audit(run_dir) -> int:
    report = audit_run(run_dir)
    for line in report.lines():
        print(line)
    print("AUDIT", "PASS" if report.passed else "FAIL")
    return report.exit_code()
