"""Experiment configuration: a two-level YAML file of sections and keys.

Example (every key is optional, defaults are the baseline experiment)::

    array:
      num_layers: 4           # M
      antennas_per_layer: 4   # N
      radius: 0.5             # metres
      carrier_frequency: 3.0e9
      layer_spacing: 1.0      # initial vertical spacing, in wavelengths
    scenario:
      num_users: 4
      num_paths: 11
      power: 1.0
      snr_db: 0.0             # noise variance = power * 10^(-snr_db/10)
      azimuth_max: 3.141592653589793
    solver:
      max_outer_iterations: 30
      rate_tol: 1.0e-6
      alternations: 1
    position:
      sweeps: 3
      adam_steps: 100
      num_candidates: 64
      z_window: 1.0           # wavelengths
      z_points: 21
      psi_step: 0.01
      z_step: 0.005
      tol: 1.0e-6
    experiment:
      variants: [FixedFP, FpMaAdam, FpMaGrid]
      trials: 100
      seed: 0
      jobs: 1
      out: results
      sweep_axis: null        # snr_db | num_paths | radius | layer_spacing | num_users
      sweep_values: []
"""

from __future__ import annotations

import dataclasses
import math
import typing
from dataclasses import dataclass, field

import yaml

from .geometry import ArrayConfig, InfeasibleConfigError
from .orchestrator import SWEEP_AXES, SolverOptions, SystemSetup, Variant
from .position import PositionOptions


class ConfigError(ValueError):
    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("; ".join(problems))


@dataclass
class ArraySection:
    num_layers: int = 4
    antennas_per_layer: int = 4
    radius: float = 0.5
    carrier_frequency: float = 3e9
    layer_spacing: float = 1.0


@dataclass
class ScenarioSection:
    num_users: int = 4
    num_paths: int = 11
    power: float = 1.0
    snr_db: float = 0.0
    azimuth_max: float = math.pi


@dataclass
class SolverSection:
    max_outer_iterations: int = 30
    rate_tol: float = 1e-6
    alternations: int = 1


@dataclass
class PositionSection:
    sweeps: int = 3
    adam_steps: int = 100
    num_candidates: int = 64
    z_window: float = 1.0
    z_points: int = 21
    psi_step: float = 0.01
    z_step: float = 0.005
    beta1: float = 0.9
    beta2: float = 0.999
    eta: float = 1e-8
    tol: float = 1e-6


@dataclass
class ExperimentSection:
    variants: list = field(default_factory=lambda: ["FixedFP", "FpMaAdam", "FpMaGrid"])
    trials: int = 100
    seed: int = 0
    jobs: int = 1
    out: str = "results"
    sweep_axis: typing.Optional[str] = None
    sweep_values: list = field(default_factory=list)


SECTIONS = {
    "array": ArraySection,
    "scenario": ScenarioSection,
    "solver": SolverSection,
    "position": PositionSection,
    "experiment": ExperimentSection,
}


@dataclass
class ExperimentConfig:
    array: ArraySection = field(default_factory=ArraySection)
    scenario: ScenarioSection = field(default_factory=ScenarioSection)
    solver: SolverSection = field(default_factory=SolverSection)
    position: PositionSection = field(default_factory=PositionSection)
    experiment: ExperimentSection = field(default_factory=ExperimentSection)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict | None, lines: dict | None = None) -> ExperimentConfig:
        """Build a config, rejecting unknown sections/keys and mistyped values."""
        data = data or {}
        lines = lines or {}
        problems = []
        if not isinstance(data, dict):
            raise ConfigError(["top level must be a mapping of sections"])
        sections = {}
        for name, body in data.items():
            where = _where(lines, name)
            if name not in SECTIONS:
                problems.append(f"{where}{name}: unknown section")
                continue
            if body is None:
                body = {}
            if not isinstance(body, dict):
                problems.append(f"{where}{name}: expected a mapping")
                continue
            section_cls = SECTIONS[name]
            hints = typing.get_type_hints(section_cls)
            values = {}
            for key, value in body.items():
                path = f"{name}.{key}"
                kwhere = _where(lines, path)
                if key not in hints:
                    problems.append(f"{kwhere}{path}: unknown key")
                    continue
                try:
                    values[key] = _coerce(value, hints[key])
                except (TypeError, ValueError) as exc:
                    problems.append(f"{kwhere}{path}: {exc}")
            sections[name] = section_cls(**values)
        if problems:
            raise ConfigError(problems)
        return cls(**sections)

    def set(self, dotted: str, raw, parse: bool = True) -> None:
        """Apply a ``section.key=value`` override; string values are parsed as YAML unless ``parse`` is off."""
        if "." not in dotted:
            raise ConfigError([f"{dotted}: override keys look like section.key"])
        section, key = dotted.split(".", 1)
        data = self.to_dict()
        if section not in data:
            raise ConfigError([f"{dotted}: unknown section"])
        if key not in data[section]:
            raise ConfigError([f"{dotted}: unknown key"])
        data[section][key] = yaml.safe_load(raw) if parse and isinstance(raw, str) else raw
        new = ExperimentConfig.from_dict(data)
        self.__dict__.update(new.__dict__)

    # -- domain objects -------------------------------------------------

    def array_config(self, radius: float | None = None) -> ArrayConfig:
        a = self.array
        return ArrayConfig(a.num_layers, a.antennas_per_layer,
                           a.radius if radius is None else radius, a.carrier_frequency)

    def system_setup(self) -> SystemSetup:
        s = self.scenario
        return SystemSetup(self.array_config(), s.num_users, s.num_paths, s.power, s.snr_db,
                           self.array.layer_spacing, s.azimuth_max)

    def position_options(self) -> PositionOptions:
        return PositionOptions(**dataclasses.asdict(self.position))

    def solver_options(self) -> SolverOptions:
        s = self.solver
        return SolverOptions(s.max_outer_iterations, s.rate_tol, s.alternations,
                             position=self.position_options())

    def sweep(self):
        e = self.experiment
        return None if e.sweep_axis is None else (e.sweep_axis, list(e.sweep_values))


def _where(lines, path):
    return f"line {lines[path]}: " if path in lines else ""


def _coerce(value, hint):
    origin = typing.get_origin(hint)
    if origin is typing.Union:
        args = [a for a in typing.get_args(hint) if a is not type(None)]
        if value is None:
            return None
        return _coerce(value, args[0])
    if hint is bool or isinstance(value, bool):
        if hint is not bool:
            raise TypeError(f"expected {hint.__name__}, got a boolean")
        return value
    if hint is int:
        if isinstance(value, float) and value.is_integer():
            return int(value)
        if not isinstance(value, int):
            raise TypeError(f"expected an integer, got {value!r}")
        return value
    if hint is float:
        if isinstance(value, str):
            # YAML 1.1 reads 1e-6 (no dot) as a string
            try:
                return float(value)
            except ValueError:
                raise TypeError(f"expected a number, got {value!r}") from None
        if not isinstance(value, (int, float)):
            raise TypeError(f"expected a number, got {value!r}")
        return float(value)
    if hint is str:
        if not isinstance(value, str):
            raise TypeError(f"expected a string, got {value!r}")
        return value
    if hint is list or origin is list:
        if not isinstance(value, list):
            raise TypeError(f"expected a list, got {value!r}")
        return value
    return value


def _key_lines(text: str) -> dict:
    """Map 'section' and 'section.key' to 1-based source lines."""
    lines = {}
    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return lines
    if not isinstance(root, yaml.MappingNode):
        return lines
    for knode, vnode in root.value:
        lines[str(knode.value)] = knode.start_mark.line + 1
        if isinstance(vnode, yaml.MappingNode):
            for k2, _ in vnode.value:
                lines[f"{knode.value}.{k2.value}"] = k2.start_mark.line + 1
    return lines


def parse_config(text: str) -> ExperimentConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError([f"YAML syntax error: {exc}"]) from None
    return ExperimentConfig.from_dict(data, _key_lines(text))


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def dump_config(config: ExperimentConfig) -> str:
    return yaml.safe_dump(config.to_dict(), sort_keys=False)


def validate(config: ExperimentConfig) -> tuple[list[str], list[str]]:
    """Check a config without running it. Returns ``(errors, warnings)``."""
    errors, warnings = [], []
    a, s, e = config.array, config.scenario, config.experiment

    def positive(path, value):
        if not value > 0:
            errors.append(f"{path}: must be positive, got {value}")

    for path, value in [("array.num_layers", a.num_layers),
                        ("array.antennas_per_layer", a.antennas_per_layer),
                        ("array.radius", a.radius), ("array.carrier_frequency", a.carrier_frequency),
                        ("array.layer_spacing", a.layer_spacing),
                        ("scenario.num_users", s.num_users), ("scenario.num_paths", s.num_paths),
                        ("scenario.power", s.power), ("scenario.azimuth_max", s.azimuth_max),
                        ("experiment.trials", e.trials), ("experiment.jobs", e.jobs)]:
        positive(path, value)
    for v in e.variants:
        try:
            Variant(v)
        except ValueError:
            errors.append(f"experiment.variants: unknown variant {v!r}; "
                          f"choose from {[x.value for x in Variant]}")
    if not e.variants:
        errors.append("experiment.variants: at least one variant is required")
    try:
        config.solver_options()
    except ValueError as exc:
        errors.append(f"solver/position: {exc}")
    if e.sweep_axis is not None:
        if e.sweep_axis not in SWEEP_AXES:
            errors.append(f"experiment.sweep_axis: {e.sweep_axis!r} is not one of {SWEEP_AXES}")
        if not e.sweep_values:
            errors.append("experiment.sweep_values: a sweep needs at least one value")
    if errors:
        return errors, warnings

    radii = [a.radius]
    spacings = [a.layer_spacing]
    if e.sweep_axis == "radius":
        radii = list(e.sweep_values)
    if e.sweep_axis == "layer_spacing":
        spacings = list(e.sweep_values)
    wavelength = 299_792_458.0 / a.carrier_frequency
    for r in radii:
        if a.antennas_per_layer < 2:
            break
        ratio = wavelength / (4.0 * r) if r > 0 else math.inf
        if ratio > 1:
            warnings.append(f"R={r}: lambda/(4R)={ratio:.4f} > 1, two antennas cannot share a ring")
            continue
        pmin = 2.0 * math.asin(ratio)
        need = a.antennas_per_layer * pmin
        if need > 2 * math.pi + 1e-12:
            warnings.append(f"R={r}: {a.antennas_per_layer}*{pmin:.4f} = {need:.4f} > 2*pi, "
                            "default ring infeasible")
    if a.num_layers > 1:
        for sp in spacings:
            if sp < 0.5 - 1e-12:
                warnings.append(f"layer_spacing={sp} wavelengths is below the 0.5 wavelength minimum, "
                                "default layout infeasible")
    return errors, warnings
