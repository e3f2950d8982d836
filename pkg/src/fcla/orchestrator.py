"""Alternating FP / antenna-position optimisation and Monte Carlo comparison."""

from __future__ import annotations

import dataclasses
import hashlib
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import fp
from .channel import Scenario, build_channel, sample_scenario
from .geometry import AntennaLayout, ArrayConfig, InfeasibleConfigError, default_layout
from .position import PositionOptions, cgs_adam_psi, cgs_adam_z

log = logging.getLogger(__name__)


class Variant(str, Enum):
    FIXED_FP = "FixedFP"
    FP_MA_ADAM = "FpMaAdam"
    FP_MA_GRID = "FpMaGrid"
    HORIZONTAL_ONLY = "HorizontalOnly"
    VERTICAL_ONLY = "VerticalOnly"

    @property
    def moves_psi(self) -> bool:
        return self in (Variant.FP_MA_ADAM, Variant.FP_MA_GRID, Variant.HORIZONTAL_ONLY)

    @property
    def moves_z(self) -> bool:
        return self in (Variant.FP_MA_ADAM, Variant.FP_MA_GRID, Variant.VERTICAL_ONLY)

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class SolverOptions:
    max_outer_iterations: int = 30
    rate_tol: float = 1e-6
    alternations: int = 1
    variant: Variant = Variant.FP_MA_ADAM
    position: PositionOptions = PositionOptions()

    def __post_init__(self):
        if self.max_outer_iterations < 1:
            raise ValueError("max_outer_iterations must be >= 1")
        if not self.rate_tol > 0:
            raise ValueError("rate_tol must be positive")
        if self.alternations < 1:
            raise ValueError("alternations must be >= 1")
        object.__setattr__(self, "variant", Variant(self.variant))


@dataclass
class IterationTrace:
    """Per outer iteration; index 0 holds the initial point (no lambda yet)."""

    sum_rate: list = field(default_factory=list)
    lagrangian: list = field(default_factory=list)
    lam: list = field(default_factory=list)
    layout_hash: list = field(default_factory=list)

    def record(self, rate, lagrangian, lam, layout: AntennaLayout):
        self.sum_rate.append(float(rate))
        self.lagrangian.append(float(lagrangian))
        self.lam.append(None if lam is None else float(lam))
        self.layout_hash.append(layout.fingerprint())

    def __len__(self):
        return len(self.sum_rate)


@dataclass
class FpResult:
    trace: IterationTrace
    F: np.ndarray
    layout: AntennaLayout
    H: np.ndarray


def run_fp_loop(config: ArrayConfig, scenario: Scenario, options: SolverOptions = SolverOptions(),
                *, power: float = 1.0, layout: AntennaLayout | None = None) -> FpResult:
    """Alternate auxiliary, beamformer and (optionally) position updates.

    Starts from ``layout`` (uniform rings by default) and the matched-filter
    beamformer, and stops once the sum rate changes by less than
    ``options.rate_tol`` or after ``options.max_outer_iterations`` rounds.
    """
    variant = options.variant
    pos = options.position
    if variant is Variant.FP_MA_GRID:
        pos = dataclasses.replace(pos, adam_steps=0)
    noise = scenario.noise_variances

    if layout is None:
        layout = default_layout(config)
    H = build_channel(config, layout, scenario)
    F = fp.matched_filter(H, power)
    trace = IterationTrace()
    rate = fp.sum_rate(H, F, noise)
    trace.record(rate, math.log(2.0) * rate, None, layout)

    for _ in range(options.max_outer_iterations):
        eps = fp.update_epsilon(H, F, noise)
        mu = fp.update_mu(H, F, noise)
        F, lam = fp.solve_beamformer(fp.build_surrogates(H, eps, mu, noise), power)
        if variant.moves_psi or variant.moves_z:
            for _ in range(options.alternations):
                if variant.moves_psi:
                    layout = cgs_adam_psi(config, layout, scenario, F, eps, mu, pos).layout
                if variant.moves_z:
                    layout = cgs_adam_z(config, layout, scenario, F, eps, mu, pos).layout
            H = build_channel(config, layout, scenario)
        lagrangian = fp.lagrangian_value(H, F, eps, mu, noise)
        previous, rate = rate, fp.sum_rate(H, F, noise)
        trace.record(rate, lagrangian, lam, layout)
        if abs(rate - previous) < options.rate_tol:
            break
    return FpResult(trace, F, layout, H)


# ---------------------------------------------------------------------------
# Monte Carlo


SWEEP_AXES = ("snr_db", "num_paths", "radius", "layer_spacing", "num_users")


@dataclass(frozen=True)
class SystemSetup:
    """Everything that defines one random trial apart from its seed.

    ``layer_spacing`` is the initial vertical spacing in wavelengths and the
    noise variance follows from ``snr_db = 10 log10(power / noise)``.
    """

    array: ArrayConfig
    num_users: int = 4
    num_paths: int = 11
    power: float = 1.0
    snr_db: float = 0.0
    layer_spacing: float = 1.0
    azimuth_max: float = math.pi

    @property
    def noise_variance(self) -> float:
        return self.power * 10.0 ** (-self.snr_db / 10.0)

    def scenario(self, seed: int) -> Scenario:
        return sample_scenario(seed, self.num_users, self.num_paths, self.noise_variance,
                               azimuth_max=self.azimuth_max)

    def initial_layout(self) -> AntennaLayout:
        layout = default_layout(self.array, self.layer_spacing * self.array.wavelength)
        if self.array.num_layers > 1 and self.layer_spacing * self.array.wavelength < self.array.z_min - 1e-12:
            raise InfeasibleConfigError(
                f"initial layer spacing {self.layer_spacing} wavelengths is below the half-wavelength minimum"
            )
        return layout

    def with_value(self, axis: str, value) -> SystemSetup:
        if axis == "radius":
            return dataclasses.replace(self, array=dataclasses.replace(self.array, radius=float(value)))
        if axis in ("num_paths", "num_users"):
            return dataclasses.replace(self, **{axis: int(value)})
        if axis in ("snr_db", "layer_spacing"):
            return dataclasses.replace(self, **{axis: float(value)})
        raise ValueError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")


@dataclass
class TrialRecord:
    seed: int
    scenario_hash: str
    trace: IterationTrace
    final_layout: AntennaLayout


@dataclass
class VariantSummary:
    variant: Variant
    sweep_value: object
    trials: list = field(default_factory=list)
    failures: list = field(default_factory=list)  # (seed, message)

    @property
    def seeds(self) -> list:
        return [t.seed for t in self.trials]

    @property
    def sample_count(self) -> int:
        return len(self.trials)

    def padded_traces(self, length: int | None = None) -> np.ndarray:
        """Sum-rate traces, each extended with its final value to a common length."""
        if not self.trials:
            return np.empty((0, length or 0))
        traces = [t.trace.sum_rate for t in self.trials]
        length = length or max(map(len, traces))
        return np.array([tr + [tr[-1]] * (length - len(tr)) for tr in traces])

    def mean_trace(self, length: int | None = None) -> np.ndarray:
        return self.padded_traces(length).mean(axis=0)

    @property
    def final_rates(self) -> np.ndarray:
        return np.array([t.trace.sum_rate[-1] for t in self.trials])

    @property
    def final_mean(self) -> float:
        return float(self.final_rates.mean()) if self.trials else math.nan


@dataclass
class MonteCarloReport:
    axis: str | None
    sweep_values: list
    variants: list
    seeds: list
    summaries: dict = field(default_factory=dict)  # (sweep_value, variant) -> VariantSummary

    def get(self, variant, sweep_value=None) -> VariantSummary:
        return self.summaries[(sweep_value, Variant(variant))]

    @property
    def failure_count(self) -> int:
        return sum(len(s.failures) for s in self.summaries.values())


def _scenario_hash(scenario: Scenario) -> str:
    h = hashlib.sha256()
    for a in (scenario.gains, scenario.elevation, scenario.azimuth, scenario.noise_variances):
        h.update(np.ascontiguousarray(a).tobytes())
    return h.hexdigest()[:16]


NUMERICAL_ERRORS = (fp.NumericalFailure, np.linalg.LinAlgError, FloatingPointError)


def run_trial(setup: SystemSetup, variants, options: SolverOptions, seed: int):
    """Run every variant on one seeded scenario; returns a list of (variant, record or error)."""
    scenario = setup.scenario(seed)
    digest = _scenario_hash(scenario)
    layout = setup.initial_layout()
    out = []
    for variant in variants:
        opts = dataclasses.replace(options, variant=Variant(variant))
        try:
            res = run_fp_loop(setup.array, scenario, opts, power=setup.power, layout=layout)
        except NUMERICAL_ERRORS as exc:
            out.append((Variant(variant), f"{type(exc).__name__}: {exc}"))
            continue
        out.append((Variant(variant), TrialRecord(seed, digest, res.trace, res.layout)))
    return out


def _run_task(args):
    return run_trial(*args)


def monte_carlo(setup: SystemSetup, variants, num_trials: int, base_seed: int = 0,
                options: SolverOptions = SolverOptions(), sweep: tuple | None = None,
                jobs: int = 1) -> MonteCarloReport:
    """Paired Monte Carlo comparison of ``variants``.

    Trial ``i`` uses seed ``base_seed + i`` for every variant and every sweep
    value, so all schemes see the same scenarios.  ``sweep`` is
    ``(axis, values)`` with ``axis`` one of ``SWEEP_AXES``.  Trials that hit a
    numerical failure are excluded and listed in the summaries.
    """
    if num_trials < 1:
        raise ValueError("num_trials must be >= 1")
    variants = [Variant(v) for v in variants]
    seeds = [base_seed + i for i in range(num_trials)]
    axis, values = (None, [None]) if sweep is None else (sweep[0], list(sweep[1]))
    setups = [setup if axis is None else setup.with_value(axis, v) for v in values]
    for s in setups:
        s.initial_layout()  # fail fast on an infeasible configuration

    report = MonteCarloReport(axis, values, variants, seeds)
    for v in values:
        for var in variants:
            report.summaries[(v, var)] = VariantSummary(var, v)

    tasks = [(s, variants, options, seed) for s in setups for seed in seeds]
    labels = [(v, seed) for v in values for seed in seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_task, tasks, chunksize=1))
    else:
        results = [_run_task(t) for t in tasks]

    # reduction in task order, independent of completion order
    for (value, seed), outcome in zip(labels, results):
        for variant, rec in outcome:
            summary = report.summaries[(value, variant)]
            if isinstance(rec, str):
                summary.failures.append((seed, rec))
            else:
                summary.trials.append(rec)
    if report.failure_count:
        log.warning("%d trial(s) failed numerically and were excluded", report.failure_count)
    return report
