"""TOML run configuration.

Top-level keys::

    experiment        dispersion | inflate | simulate | sweep | audit
    name              label used for the default output directory
    output_dir        run directory (default: $OV_LAB_OUTPUT_ROOT/<name>)
    t_end             float, or "auto" for eps^(-2/3)
    snapshot_every    steps between FLD1 snapshots (0 disables)
    diagnostics_every steps between diagnostics rows
    trajectory_every  steps between velocity samples used by sweep metrics
    run_dir           directory inspected by the audit experiment

Tables: [grid] nx, ny; [params] epsilon, b, a, voigt; [stepper] dt, cfl_safety,
scheme, dealias, stiff_cap, blowup_amplitude; [initial_condition] name,
amplitude, seed, k, k_cut, tau_init; [dispersion] k_max, a, b;
[inflate] k_list, s, dt; [sweep] eps_list, uniform_factor, system.

Unknown keys anywhere raise ConfigurationError.
"""

from __future__ import annotations

import dataclasses
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .spectral import ConfigurationError

EXPERIMENTS = ("dispersion", "inflate", "simulate", "sweep", "audit")
OUTPUT_ROOT_ENV = "OV_LAB_OUTPUT_ROOT"
# "ns" swaps every sweep member for a Navier-Stokes run (a zero-gap test double)
SWEEP_SYSTEMS = ("voigt", "ns")


@dataclass
class GridConfig:
    nx: int = 64
    ny: int = 64


@dataclass
class ParamsConfig:
    epsilon: float = 0.1
    b: float = -1.0
    a: float = 0.0
    voigt: bool = True


@dataclass
class StepperSection:
    dt: float = 1e-3
    cfl_safety: float = 0.5
    scheme: Optional[str] = None
    dealias: bool = True
    stiff_cap: float = 10.0
    blowup_amplitude: float = 1e8


@dataclass
class InitialConfig:
    name: str = "random-smooth"
    amplitude: float = 1000.0
    seed: int = 0
    k: int = 2
    k_cut: float = 4.0
    tau_init: Optional[str] = None


@dataclass
class DispersionConfig:
    k_max: int = 64
    a: Optional[float] = None
    b: Optional[float] = None


@dataclass
class InflateConfig:
    k_list: list = field(default_factory=lambda: [2, 4, 8, 16])
    s: float = 3.0
    dt: float = 1e-4


@dataclass
class SweepConfig:
    eps_list: list = field(default_factory=lambda: [0.2, 0.1, 0.05])
    uniform_factor: float = 2.0
    system: str = "voigt"


@dataclass
class RunConfig:
    experiment: str = "simulate"
    name: Optional[str] = None
    output_dir: Optional[str] = None
    t_end: Union[float, str] = 1.0
    snapshot_every: int = 100
    diagnostics_every: int = 1
    trajectory_every: int = 10
    run_dir: Optional[str] = None
    grid: GridConfig = field(default_factory=GridConfig)
    params: ParamsConfig = field(default_factory=ParamsConfig)
    stepper: StepperSection = field(default_factory=StepperSection)
    initial_condition: InitialConfig = field(default_factory=InitialConfig)
    dispersion: DispersionConfig = field(default_factory=DispersionConfig)
    inflate: InflateConfig = field(default_factory=InflateConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)

    def resolved_t_end(self, epsilon: Optional[float] = None) -> float:
        if self.t_end == "auto":
            eps = self.params.epsilon if epsilon is None else epsilon
            return eps ** (-2.0 / 3.0)
        return float(self.t_end)

    def resolved_output_dir(self) -> Path:
        if self.output_dir:
            return Path(self.output_dir)
        root = os.environ.get(OUTPUT_ROOT_ENV, "runs")
        return Path(root) / (self.name or self.experiment)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_SECTIONS = {f.name: f.type for f in dataclasses.fields(RunConfig)}
_SECTION_TYPES = {
    "grid": GridConfig, "params": ParamsConfig, "stepper": StepperSection,
    "initial_condition": InitialConfig, "dispersion": DispersionConfig,
    "inflate": InflateConfig, "sweep": SweepConfig,
}


def _build(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigurationError(f"[{where}] must be a table")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigurationError(f"unknown key(s) in [{where}]: {', '.join(unknown)}")
    return cls(**data)


def from_dict(data: dict) -> RunConfig:
    known = set(_SECTIONS)
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigurationError(f"unknown top-level key(s): {', '.join(unknown)}")
    kwargs = {}
    for key, value in data.items():
        if key in _SECTION_TYPES:
            kwargs[key] = _build(_SECTION_TYPES[key], value, key)
        else:
            kwargs[key] = value
    cfg = RunConfig(**kwargs)
    validate(cfg)
    return cfg


def load(path) -> RunConfig:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"{path}: {exc}") from exc
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    return from_dict(data)


def loads(text: str) -> RunConfig:
    try:
        return from_dict(tomllib.loads(text))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(str(exc)) from exc


def validate(cfg: RunConfig) -> None:
    from .initial import GENERATORS

    if cfg.experiment not in EXPERIMENTS:
        raise ConfigurationError(f"unknown experiment {cfg.experiment!r}")
    if cfg.t_end != "auto":
        try:
            t = float(cfg.t_end)
        except (TypeError, ValueError):
            raise ConfigurationError(f"t_end must be a number or 'auto', got {cfg.t_end!r}") from None
        if t < 0:
            raise ConfigurationError("t_end must be non-negative")
    if cfg.initial_condition.name not in GENERATORS:
        raise ConfigurationError(f"unknown initial condition {cfg.initial_condition.name!r}")
    for key in ("snapshot_every", "diagnostics_every", "trajectory_every"):
        v = getattr(cfg, key)
        if not isinstance(v, int) or v < 0 or (key != "snapshot_every" and v == 0):
            raise ConfigurationError(f"{key} must be a {'non-negative' if key == 'snapshot_every' else 'positive'} integer")
    eps = cfg.sweep.eps_list
    if not eps or any(e <= 0 for e in eps):
        raise ConfigurationError("sweep.eps_list must hold positive values")
    if list(eps) != sorted(eps, reverse=True) or len(set(eps)) != len(eps):
        raise ConfigurationError("sweep.eps_list must be strictly descending")
    if cfg.sweep.system not in SWEEP_SYSTEMS:
        raise ConfigurationError(f"sweep.system must be one of {SWEEP_SYSTEMS}")
    if cfg.params.epsilon <= 0:
        raise ConfigurationError("params.epsilon must be positive")
