"""Far-field multipath channels for the cylindrical array."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import ArrayConfig, AntennaLayout, flat_index, positions


@dataclass(frozen=True)
class PathParameters:
    gain: complex
    elevation: float
    azimuth: float

    @property
    def phi_x(self) -> float:
        return math.sin(self.elevation) * math.cos(self.azimuth)

    @property
    def phi_y(self) -> float:
        return math.sin(self.elevation) * math.sin(self.azimuth)

    @property
    def theta(self) -> float:
        return math.cos(self.elevation)

    @property
    def direction(self) -> np.ndarray:
        return np.array([self.phi_x, self.phi_y, self.theta])


@dataclass(frozen=True, eq=False)
class Scenario:
    """K users with L paths each, stored as (K, L) arrays."""

    gains: np.ndarray
    elevation: np.ndarray
    azimuth: np.ndarray
    noise_variances: np.ndarray

    def __post_init__(self):
        gains = np.array(self.gains, dtype=complex, ndmin=2)
        elevation = np.array(self.elevation, dtype=float, ndmin=2)
        azimuth = np.array(self.azimuth, dtype=float, ndmin=2)
        if not gains.shape == elevation.shape == azimuth.shape:
            raise ValueError("gains, elevation and azimuth must share one (K, L) shape")
        noise = np.broadcast_to(
            np.asarray(self.noise_variances, dtype=float), (gains.shape[0],)
        ).copy()
        if np.any(noise <= 0):
            raise ValueError("noise variances must be positive")
        for name, value in [("gains", gains), ("elevation", elevation),
                            ("azimuth", azimuth), ("noise_variances", noise)]:
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @property
    def num_users(self) -> int:
        return self.gains.shape[0]

    @property
    def num_paths(self) -> int:
        return self.gains.shape[1]

    @property
    def phi_x(self) -> np.ndarray:
        return np.sin(self.elevation) * np.cos(self.azimuth)

    @property
    def phi_y(self) -> np.ndarray:
        return np.sin(self.elevation) * np.sin(self.azimuth)

    @property
    def theta(self) -> np.ndarray:
        return np.cos(self.elevation)

    def directions(self) -> np.ndarray:
        """Unit direction vectors, shape (K, L, 3)."""
        return np.stack([self.phi_x, self.phi_y, self.theta], axis=-1)

    def paths(self, k: int) -> list[PathParameters]:
        return [
            PathParameters(complex(g), float(e), float(a))
            for g, e, a in zip(self.gains[k], self.elevation[k], self.azimuth[k])
        ]

    def to_dict(self) -> dict:
        return {
            "gains": [[[g.real, g.imag] for g in row] for row in self.gains.tolist()],
            "elevation": self.elevation.tolist(),
            "azimuth": self.azimuth.tolist(),
            "noise_variances": self.noise_variances.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> Scenario:
        g = np.array(data["gains"], dtype=float)
        return cls(g[..., 0] + 1j * g[..., 1], data["elevation"], data["azimuth"],
                   data["noise_variances"])

    def __eq__(self, other):
        if not isinstance(other, Scenario):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, f), getattr(other, f))
            for f in ("gains", "elevation", "azimuth", "noise_variances")
        )

    __hash__ = None


def sample_scenario(
    rng,
    num_users: int,
    num_paths: int,
    noise_variance: float,
    azimuth_max: float = math.pi,
    elevation_max: float = math.pi,
) -> Scenario:
    """Draw a random scenario.

    ``rng`` is a seed or a ``numpy.random.Generator``.  Draw order is users
    outer, paths inner and, per path: elevation, azimuth, Re(gain), Im(gain).
    Gains are CN(0, 1); both angles are uniform from 0 to their maximum.
    """
    if num_users < 1 or num_paths < 1:
        raise ValueError("need at least one user and one path")
    rng = np.random.default_rng(rng)
    gains = np.empty((num_users, num_paths), dtype=complex)
    elevation = np.empty((num_users, num_paths))
    azimuth = np.empty((num_users, num_paths))
    scale = math.sqrt(0.5)
    for k in range(num_users):
        for l in range(num_paths):
            elevation[k, l] = rng.uniform(0.0, elevation_max)
            azimuth[k, l] = rng.uniform(0.0, azimuth_max)
            re = rng.normal(0.0, scale)
            im = rng.normal(0.0, scale)
            gains[k, l] = complex(re, im)
    return Scenario(gains, elevation, azimuth, np.full(num_users, float(noise_variance)))


def steering_entry(config: ArrayConfig, layout: AntennaLayout, m: int, n: int,
                   path: PathParameters) -> complex:
    flat_index(m, n, config.antennas_per_layer, config.num_layers)
    psi = layout.psi[m, n]
    R = config.radius
    phase = path.phi_x * R * math.cos(psi) + path.phi_y * R * math.sin(psi) + layout.z[m] * path.theta
    return complex(np.exp(-1j * config.wavenumber * phase))


def path_phases(config: ArrayConfig, layout: AntennaLayout, scenario: Scenario) -> np.ndarray:
    """Projections t_s . Xi_{k,l} in metres, shape (MN, K, L)."""
    return np.einsum("sd,kld->skl", positions(config, layout), scenario.directions())


def build_channel(config: ArrayConfig, layout: AntennaLayout, scenario: Scenario) -> np.ndarray:
    """MN x K channel matrix, column k is user k's channel."""
    if layout.shape != (config.num_layers, config.antennas_per_layer):
        raise ValueError(f"layout shape {layout.shape} does not match the array config")
    phase = path_phases(config, layout, scenario)
    terms = scenario.gains[None] * np.exp(-1j * config.wavenumber * phase)
    return terms.sum(axis=-1) / math.sqrt(scenario.num_paths)


def channel_entry(config: ArrayConfig, layout: AntennaLayout, scenario: Scenario,
                  k: int, s: int, psi: float | None = None, z: float | None = None) -> complex:
    """h_{k,s} evaluated with antenna s moved to (psi, z); the layout is untouched."""
    N = config.antennas_per_layer
    m, n = divmod(s, N)
    flat_index(m, n, N, config.num_layers)
    if psi is None:
        psi = layout.psi[m, n]
    if z is None:
        z = layout.z[m]
    R = config.radius
    phase = (scenario.phi_x[k] * R * math.cos(psi) + scenario.phi_y[k] * R * math.sin(psi)
             + z * scenario.theta[k])
    value = np.sum(scenario.gains[k] * np.exp(-1j * config.wavenumber * phase))
    return complex(value / math.sqrt(scenario.num_paths))
