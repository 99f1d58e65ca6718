"""Grid and time-series containers shared by every channel model."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ResourceError

MAX_CELLS = 10**8


def _axis_centers(start: float, stop: float, step: float) -> np.ndarray:
    if not (math.isfinite(start) and math.isfinite(stop) and math.isfinite(step)):
        raise ConfigError("grid range must be finite")
    if step <= 0:
        raise ConfigError(f"grid spacing must be positive, got {step}")
    if stop < start:
        return np.empty(0)
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return start + step * np.arange(n)


@dataclass(frozen=True, eq=False)
class GridSpec:
    """Cell-centred rectilinear grid with uniform spacing per axis.

    ``x``, ``y`` and ``z`` hold the cell centres; ``dx``, ``dy`` and ``dz``
    are the cell widths (a single-plane grid still has a finite ``dz``,
    which sets the slab thickness when particles are binned into it).
    """

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    dx: float
    dy: float
    dz: float

    @classmethod
    def from_ranges(cls, x, y, z) -> "GridSpec":
        """Build from ``(start, stop, step)`` triples of cell centres.

        ``stop`` is inclusive (to within rounding). A range with
        ``stop < start`` yields an empty axis.
        """
        axes = [_axis_centers(*map(float, r)) for r in (x, y, z)]
        return cls(*axes, float(x[2]), float(y[2]), float(z[2]))

    @classmethod
    def plane(cls, x, y, z: float, dz: float = 1e-3) -> "GridSpec":
        """Horizontal slice at height ``z`` with slab thickness ``dz``."""
        return cls(
            _axis_centers(*map(float, x)),
            _axis_centers(*map(float, y)),
            np.array([float(z)]),
            float(x[2]),
            float(y[2]),
            float(dz),
        )

    @classmethod
    def centered(cls, center, half_widths, spacing) -> "GridSpec":
        """Grid whose node lattice passes through ``center``."""
        axes = []
        for c, hw, h in zip(center, half_widths, spacing):
            n = int(math.floor(hw / h + 1e-9))
            axes.append(c + h * np.arange(-n, n + 1))
        return cls(*axes, *map(float, spacing))

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.x.size, self.y.size, self.z.size)

    @property
    def size(self) -> int:
        return self.x.size * self.y.size * self.z.size

    @property
    def cell_volume(self) -> float:
        return self.dx * self.dy * self.dz

    def check_size(self, cap: int = MAX_CELLS) -> None:
        if self.size > cap:
            raise ResourceError(f"grid has {self.size} cells, cap is {cap}")

    def mesh(self):
        return np.meshgrid(self.x, self.y, self.z, indexing="ij")

    def edges(self):
        return tuple(
            np.concatenate([c - h / 2, c[-1:] + h / 2]) if c.size else np.empty(0)
            for c, h in ((self.x, self.dx), (self.y, self.dy), (self.z, self.dz))
        )

    def coarsen(self, factor: int) -> "GridSpec":
        """Merge ``factor`` cells per axis (axes of length 1 are kept)."""
        out = []
        for c, h in ((self.x, self.dx), (self.y, self.dy), (self.z, self.dz)):
            if c.size == 1:
                out.append((c.copy(), h))
                continue
            n = c.size // factor
            blocks = c[: n * factor].reshape(n, factor).mean(axis=1)
            out.append((blocks, h * factor))
        (x, dx), (y, dy), (z, dz) = out
        return GridSpec(x, y, z, dx, dy, dz)


@dataclass(eq=False)
class ConcentrationField:
    """Concentration values (particles/m^3) on a grid at one instant.

    ``meta`` carries model-specific side information, for example the
    number of particles that fell outside the grid when binning, or a
    domain-size warning from the grid solver.
    """

    grid: GridSpec
    values: np.ndarray
    time_stamp: float
    species: str = "virus"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ConfigError(
                f"values shape {self.values.shape} does not match grid {self.grid.shape}"
            )

    def total(self) -> float:
        """Particle count held in the grid (sum of value x cell volume)."""
        return float(self.values.sum() * self.grid.cell_volume)

    def peak(self) -> tuple[float, tuple[float, float, float]]:
        """Largest cell value and the centre of the cell holding it."""
        if self.values.size == 0:
            return 0.0, (math.nan, math.nan, math.nan)
        i, j, k = np.unravel_index(int(np.argmax(self.values)), self.values.shape)
        return float(self.values[i, j, k]), (
            float(self.grid.x[i]),
            float(self.grid.y[j]),
            float(self.grid.z[k]),
        )

    def coarsen(self, factor: int) -> "ConcentrationField":
        """Block-average onto ``grid.coarsen(factor)``; leftover cells are dropped."""
        g = self.grid.coarsen(factor)
        v = self.values
        for ax in range(3):
            if v.shape[ax] == 1:
                continue
            n = v.shape[ax] // factor
            v = np.take(v, np.arange(n * factor), axis=ax)
            new_shape = v.shape[:ax] + (n, factor) + v.shape[ax + 1 :]
            v = v.reshape(new_shape).mean(axis=ax + 1)
        return ConcentrationField(g, v, self.time_stamp, self.species, dict(self.meta))


@dataclass(eq=False)
class ConcentrationSeries:
    """Concentration at a fixed probe point sampled over time."""

    times: np.ndarray
    values: np.ndarray
    position: tuple[float, float, float] = (0.0, 0.0, 0.0)
    species: str = "virus"

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.shape != self.values.shape or self.times.ndim != 1:
            raise ConfigError("series times and values must be 1-D and equal length")
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise ConfigError("series times must be strictly increasing")

    def __add__(self, other: "ConcentrationSeries") -> "ConcentrationSeries":
        if not np.array_equal(self.times, other.times):
            raise ConfigError("cannot add series sampled at different times")
        return ConcentrationSeries(
            self.times, self.values + other.values, self.position, self.species
        )

    def scaled(self, factor: float) -> "ConcentrationSeries":
        return ConcentrationSeries(
            self.times, self.values * factor, self.position, self.species
        )


def relative_rmse(estimate: np.ndarray, reference: np.ndarray, floor: float = 0.01) -> float:
    """RMS error over cells where ``reference >= floor * max(reference)``,
    normalised by the RMS of the reference over the same cells."""
    estimate = np.asarray(estimate, dtype=float)
    reference = np.asarray(reference, dtype=float)
    mask = reference >= floor * reference.max()
    err = estimate[mask] - reference[mask]
    return float(np.sqrt(np.mean(err**2) / np.mean(reference[mask] ** 2)))
