"""Cylindrical array configuration, antenna indexing and spacing constraints.

The array is a stack of ``M`` circular layers of radius ``R``.  Each layer
carries ``N`` antennas that revolve along the ring (angle ``psi``) and every
layer moves vertically as a whole (height ``z``).  Indices are 0-based
throughout: antenna ``(m, n)`` sits in row ``m`` and column ``n`` of ``psi``
and has flat index ``s = m * N + n``.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0
TWO_PI = 2.0 * math.pi

# slack used when comparing distances against the spacing minima
SPACING_ATOL = 1e-12


class InfeasibleConfigError(ValueError):
    """Raised when no antenna layout can satisfy the spacing constraints."""


@dataclass(frozen=True)
class ArrayConfig:
    num_layers: int
    antennas_per_layer: int
    radius: float
    carrier_frequency: float = 3e9

    def __post_init__(self):
        if self.num_layers < 1 or self.antennas_per_layer < 1:
            raise ValueError("num_layers and antennas_per_layer must be >= 1")
        if not self.radius > 0:
            raise ValueError(f"radius must be positive, got {self.radius}")
        if not self.carrier_frequency > 0:
            raise ValueError("carrier_frequency must be positive")
        if self.antennas_per_layer > 1:
            ring = self.antennas_per_layer * self.psi_min
            if ring > TWO_PI + SPACING_ATOL:
                raise InfeasibleConfigError(
                    f"{self.antennas_per_layer} antennas need {ring:.4f} rad of "
                    f"ring but only 2*pi is available at R={self.radius}"
                )

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_frequency

    @property
    def wavenumber(self) -> float:
        return TWO_PI / self.wavelength

    @property
    def num_antennas(self) -> int:
        return self.num_layers * self.antennas_per_layer

    @property
    def psi_min(self) -> float:
        return psi_min(self)

    @property
    def z_min(self) -> float:
        return self.wavelength / 2.0


def psi_min(config: ArrayConfig) -> float:
    """Smallest allowed angular gap between two antennas on one ring.

    This is the central angle whose chord equals half a wavelength.
    """
    ratio = config.wavelength / (4.0 * config.radius)
    if ratio > 1.0:
        raise InfeasibleConfigError(
            f"lambda/(4R) = {ratio:.4f} > 1: two antennas cannot share a ring"
        )
    return 2.0 * math.asin(ratio)


def flat_index(m: int, n: int, antennas_per_layer: int, num_layers: int | None = None) -> int:
    if not 0 <= n < antennas_per_layer:
        raise IndexError(f"antenna index n={n} outside [0, {antennas_per_layer})")
    if m < 0 or (num_layers is not None and m >= num_layers):
        raise IndexError(f"layer index m={m} out of range")
    return m * antennas_per_layer + n


def wrapped_angular_distance(a, b):
    """Circular distance between angles, in ``[0, pi]``. Broadcasts over arrays."""
    d = np.mod(np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)), TWO_PI)
    d = np.minimum(d, TWO_PI - d)
    if np.ndim(d) == 0:
        return float(d)
    return d


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class AntennaLayout:
    """Revolving angles ``psi`` (M x N, wrapped to [0, 2pi)) and layer heights ``z`` (M)."""

    psi: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        psi = np.mod(np.array(self.psi, dtype=float, ndmin=2), TWO_PI)
        # mod can return exactly 2pi for tiny negative inputs
        psi[psi >= TWO_PI] = 0.0
        z = np.array(self.z, dtype=float).reshape(-1)
        if psi.shape[0] != z.shape[0]:
            raise ValueError(f"psi has {psi.shape[0]} layers but z has {z.shape[0]}")
        object.__setattr__(self, "psi", _frozen(psi))
        object.__setattr__(self, "z", _frozen(z))

    @property
    def shape(self) -> tuple[int, int]:
        return self.psi.shape

    def with_psi(self, psi) -> AntennaLayout:
        return AntennaLayout(psi, self.z)

    def with_z(self, z) -> AntennaLayout:
        return AntennaLayout(self.psi, z)

    def fingerprint(self) -> str:
        """Short stable hash of the layout, used to tag trace snapshots."""
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.psi).tobytes())
        h.update(np.ascontiguousarray(self.z).tobytes())
        return h.hexdigest()[:16]

    def to_dict(self) -> dict:
        return {"psi": self.psi.tolist(), "z": self.z.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> AntennaLayout:
        return cls(np.array(data["psi"], dtype=float), np.array(data["z"], dtype=float))

    def __eq__(self, other):
        if not isinstance(other, AntennaLayout):
            return NotImplemented
        return np.array_equal(self.psi, other.psi) and np.array_equal(self.z, other.z)

    __hash__ = None


@dataclass(frozen=True)
class AntennaPosition:
    x: float
    y: float
    z: float

    @property
    def t(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])


def position_of(config: ArrayConfig, layout: AntennaLayout, m: int, n: int) -> AntennaPosition:
    flat_index(m, n, config.antennas_per_layer, config.num_layers)
    psi = layout.psi[m, n]
    return AntennaPosition(
        config.radius * math.cos(psi), config.radius * math.sin(psi), float(layout.z[m])
    )


def positions(config: ArrayConfig, layout: AntennaLayout) -> np.ndarray:
    """Cartesian positions of all antennas as an (MN, 3) array in flat-index order."""
    psi = layout.psi.reshape(-1)
    z = np.repeat(layout.z, layout.psi.shape[1])
    return np.column_stack(
        [config.radius * np.cos(psi), config.radius * np.sin(psi), z]
    )


def default_layout(config: ArrayConfig, layer_spacing: float | None = None) -> AntennaLayout:
    """Uniform rings with layers stacked ``layer_spacing`` metres apart (one wavelength by default)."""
    if layer_spacing is None:
        layer_spacing = config.wavelength
    M, N = config.num_layers, config.antennas_per_layer
    row = TWO_PI * np.arange(N) / N
    return AntennaLayout(np.tile(row, (M, 1)), layer_spacing * np.arange(M))


class Feasibility(NamedTuple):
    feasible: bool
    violations: list

    def __bool__(self):
        return self.feasible


def check_feasible(
    config: ArrayConfig, layout: AntennaLayout, atol: float = SPACING_ATOL
) -> Feasibility:
    """Check both spacing constraints.

    Violations are reported as ``("psi", m, i, j)`` for two antennas on layer
    ``m`` that are too close and ``("z", i, j)`` for two layers.
    """
    M, N = config.num_layers, config.antennas_per_layer
    if layout.shape != (M, N):
        raise ValueError(f"layout shape {layout.shape} does not match config ({M}, {N})")
    violations: list = []
    if N > 1:
        pmin = config.psi_min
        for m in range(M):
            row = layout.psi[m]
            dist = wrapped_angular_distance(row[:, None], row[None, :])
            for i, j in zip(*np.triu_indices(N, k=1)):
                if dist[i, j] < pmin - atol:
                    violations.append(("psi", m, int(i), int(j)))
    zmin = config.z_min
    for i, j in zip(*np.triu_indices(M, k=1)):
        if abs(layout.z[i] - layout.z[j]) < zmin - atol:
            violations.append(("z", int(i), int(j)))
    return Feasibility(not violations, violations)
