"""Run configuration: a small JSON file with sections.

The file is a single JSON object.  Top-level keys name the run kind, the
grid, the boundary condition, solver settings, the initial profile, check
toggles, the output directory, and a seed.  Unknown keys anywhere are hard
parse errors so a typo cannot silently disable a check.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

import numpy as np

from . import flow, grids
from .errors import ParseError, ValidationError

KINDS = ("simulate", "verify", "barrier", "flatness", "rescale", "refine")
PROFILES = ("flat", "bump", "wrinkled", "ramp")

_GRID_KEYS = {"mode", "dimension", "extent", "resolution"}
_FLOW_KEYS = {
    "integrator",
    "cfl_safety",
    "s_end",
    "max_steps",
    "snapshot_stride",
    "margin_floor",
    "blowup_cap",
    "dt_max",
    "dt_fixed",
}
_INITIAL_KEYS = {"profile", "amplitude", "width", "height", "tilt"}
_CHECK_KEYS = {
    "tilt_evolution",
    "tilt_gradient",
    "tilt_bounds",
    "curvature_evolution",
    "coordinate_laplacians",
    "restriction_gradients",
    "weight_evolution",
    "weight_gradient",
    "jet_sampling",
    "delta",
    "alpha",
    "epsilon",
    "t_min",
    "weight_radius",
    "dt",
    "jet_count",
}
_EXPERIMENT_KEYS = {"disk_radius", "theta", "alpha", "region", "lambdas", "rho"}
_TOP_KEYS = {"kind", "grid", "bc", "flow", "initial", "checks", "experiment", "out", "seed"}


@dataclass(frozen=True)
class GridSpec:
    mode: str = grids.RADIAL
    dimension: int = 3
    extent: float = 3.0
    resolution: int = 1024

    def build(self) -> grids.Grid:
        return grids.Grid(self.mode, self.dimension, extent=self.extent, resolution=self.resolution)


@dataclass(frozen=True)
class InitialSpec:
    """Named initial profile, evaluated on the grid at build time.

    flat      u = height
    bump      u = height + amplitude * exp(-(r/width)^2)
    wrinkled  u = height + oscillation normalized to peak amplitude
    ramp      constant-tilt profile u = -log(1 - c r), c from the tilt value
    """

    profile: str = "flat"
    amplitude: float = 0.2
    width: float = 1.0
    height: float = 0.0
    tilt: float = 2.0

    def build(self, grid: grids.Grid) -> np.ndarray:
        rsq = grid.radius_squared()
        r = np.sqrt(rsq)
        if self.profile == "flat":
            return np.full(grid.shape, self.height)
        if self.profile == "bump":
            return self.height + self.amplitude * np.exp(-rsq / self.width**2)
        if self.profile == "wrinkled":
            shape = np.sin(3.0 * r) * np.exp(-rsq / self.width**2)
            peak = np.max(np.abs(shape))
            return self.height + self.amplitude * shape / peak
        c = np.sqrt(1.0 - 1.0 / self.tilt**2)
        reach = c * np.max(r)
        if reach >= 1.0:
            raise ValidationError(
                f"ramp tilt {self.tilt:g} is not spacelike out to radius {np.max(r):g}"
            )
        return self.height - np.log(1.0 - c * r)


@dataclass(frozen=True)
class CheckSpec:
    """Which oracle checks a verify run enables, and their knobs."""

    tilt_evolution: bool = True
    tilt_gradient: bool = True
    tilt_bounds: bool = True
    curvature_evolution: bool = True
    coordinate_laplacians: bool = True
    restriction_gradients: bool = True
    weight_evolution: bool = False
    weight_gradient: bool = False
    jet_sampling: bool = False
    delta: float = 1.0 / 6.0
    alpha: float = 0.5
    epsilon: float = 0.1
    t_min: float = 10.0
    weight_radius: float = 100.0
    dt: float = 1e-4
    jet_count: int = 20_000

    def enabled(self) -> list[str]:
        names = []
        for f in dataclasses.fields(self):
            if f.type == "bool" and getattr(self, f.name):
                names.append(f.name)
        return names


@dataclass(frozen=True)
class ExperimentSpec:
    disk_radius: float = 4.0
    theta: float = 0.05
    alpha: float = 0.5
    region: float = 1.0
    lambdas: tuple[float, ...] = (0.35, 0.5, 0.65)
    rho: float = 1.0


@dataclass(frozen=True)
class RunConfig:
    kind: str = "simulate"
    grid: GridSpec = field(default_factory=GridSpec)
    bc: str = flow.SLICING
    flow: flow.FlowConfig = field(default_factory=flow.FlowConfig)
    initial: InitialSpec = field(default_factory=InitialSpec)
    checks: CheckSpec = field(default_factory=CheckSpec)
    experiment: ExperimentSpec = field(default_factory=ExperimentSpec)
    out: str = "dsmcf-out"
    seed: int = 0

    def initial_state(self) -> flow.GraphState:
        grid = self.grid.build()
        return flow.GraphState(
            u=grids.Field(grid, self.initial.build(grid)),
            s=0.0,
            bc=flow.BoundaryCondition(self.bc),
        )

    def as_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["flow"] = {k: v for k, v in out["flow"].items() if k in _FLOW_KEYS}
        out["experiment"]["lambdas"] = list(self.experiment.lambdas)
        return out


def _key_line(text: str, key: str) -> int | None:
    for n, line in enumerate(text.splitlines(), start=1):
        if f'"{key}"' in line:
            return n
    return None


def _reject_unknown(section: str, data: dict, allowed: set[str], text: str) -> None:
    for key in data:
        if key not in allowed:
            line = _key_line(text, key)
            where = f" (line {line})" if line else ""
            raise ParseError(f"unknown key '{key}' in {section}{where}")


def _section(raw: dict, name: str, allowed: set[str], text: str) -> dict:
    data = raw.get(name, {})
    if not isinstance(data, dict):
        raise ParseError(f"section '{name}' must be an object")
    _reject_unknown(name, data, allowed, text)
    return data


def _validate(config: RunConfig) -> RunConfig:
    if config.kind not in KINDS:
        raise ValidationError(f"kind must be one of {KINDS}, got '{config.kind}'")
    if config.bc not in (flow.SLICING, flow.PINNED, flow.FROZEN):
        raise ValidationError(f"unknown boundary kind '{config.bc}'")
    if config.initial.profile not in PROFILES:
        raise ValidationError(f"profile must be one of {PROFILES}, got '{config.initial.profile}'")
    if config.grid.resolution < 5:
        raise ValidationError(f"resolution ≥ 5 violated: got {config.grid.resolution}")
    if config.initial.width <= 0.0:
        raise ValidationError(f"profile width must be positive, got {config.initial.width}")
    for label, alpha in (("checks.alpha", config.checks.alpha), ("experiment.alpha", config.experiment.alpha)):
        if not 0.0 < alpha < 2.0:
            raise ValidationError(f"alpha ∈ (0,2) violated: {label} = {alpha}")
    if not 0.0 <= config.checks.delta <= 1.0 / 3.0:
        raise ValidationError(f"delta ∈ [0,1/3] violated: got {config.checks.delta}")
    if not 0.0 < config.experiment.theta < 1.0:
        raise ValidationError(f"theta ∈ (0,1) violated: got {config.experiment.theta}")
    if config.initial.profile == "ramp" and config.initial.tilt <= 1.0:
        raise ValidationError(f"ramp tilt must exceed 1, got {config.initial.tilt}")
    return config


def parse_config(text: str) -> RunConfig:
    """Parse and validate config text; see load_config for the file form."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"config is not valid JSON: {exc.msg} (line {exc.lineno})") from exc
    if not isinstance(raw, dict):
        raise ParseError("config must be a JSON object")
    _reject_unknown("config", raw, _TOP_KEYS, text)

    grid_data = _section(raw, "grid", _GRID_KEYS, text)
    flow_data = _section(raw, "flow", _FLOW_KEYS, text)
    initial_data = _section(raw, "initial", _INITIAL_KEYS, text)
    checks_data = _section(raw, "checks", _CHECK_KEYS, text)
    experiment_data = _section(raw, "experiment", _EXPERIMENT_KEYS, text)
    if "lambdas" in experiment_data:
        experiment_data = dict(experiment_data)
        experiment_data["lambdas"] = tuple(experiment_data["lambdas"])

    try:
        config = RunConfig(
            kind=raw.get("kind", "simulate"),
            grid=GridSpec(**grid_data),
            bc=raw.get("bc", flow.SLICING),
            flow=flow.FlowConfig(**flow_data),
            initial=InitialSpec(**initial_data),
            checks=CheckSpec(**checks_data),
            experiment=ExperimentSpec(**experiment_data),
            out=raw.get("out", "dsmcf-out"),
            seed=int(raw.get("seed", 0)),
        )
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc
    return _validate(config)


def load_config(path) -> RunConfig:
    """Read, parse, and range-check a config file."""
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def save_config(config: RunConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config.as_dict(), fh, indent=2)
        fh.write("\n")
