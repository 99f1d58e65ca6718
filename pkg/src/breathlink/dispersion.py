"""Closed-form Gaussian puff and plume channels.

Both solve the constant-coefficient advection-diffusion equation

    dC/dt + u dC/dx = K laplacian(C)

with wind ``u`` along +x and one isotropic eddy diffusivity ``K``. The
optional ground image source (mirror at z = -H) makes z = 0 a zero-flux
plane. Units are particles, metres and seconds; concentrations are
particles/m^3.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np
from scipy.special import erf

from .errors import ConfigError, InvalidTimeError, ModelInapplicableError, OutOfPlumeError
from .fields import ConcentrationField, ConcentrationSeries, GridSpec, MAX_CELLS

# typical adult breathing height
DEFAULT_HEIGHT = 1.7


def _finite(name, value):
    arr = np.asarray(value, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ConfigError(f"{name} must be finite")
    return arr


@dataclass(frozen=True)
class MediumParams:
    """Wind speed along +x (m/s), eddy diffusivity (m^2/s), ground mirror flag.

    ``diffusivity_K == 0`` is accepted so that the particle and grid engines
    can run pure advection; the closed forms reject it.
    """

    wind_u: float = 1.0
    diffusivity_K: float = 0.03
    reflect_ground: bool = False

    def __post_init__(self):
        _finite("wind_u", self.wind_u)
        _finite("diffusivity_K", self.diffusivity_K)
        if self.wind_u < 0:
            raise ConfigError("wind_u must be >= 0 (wind blows along +x)")
        if self.diffusivity_K < 0:
            raise ConfigError("diffusivity_K must be >= 0")


@dataclass(frozen=True)
class Impulse:
    """Instantaneous release of ``Q`` particles at time ``t0``."""

    Q: float
    t0: float = 0.0

    def __post_init__(self):
        _finite("Q", self.Q)
        _finite("t0", self.t0)
        if self.Q <= 0:
            raise ConfigError("impulse strength Q must be > 0")


@dataclass(frozen=True)
class Continuous:
    """Steady emission at ``Qdot`` particles/s."""

    Qdot: float

    def __post_init__(self):
        _finite("Qdot", self.Qdot)
        if self.Qdot <= 0:
            raise ConfigError("emission rate Qdot must be > 0")


@dataclass(frozen=True)
class Schedule:
    """Train of impulses given as ``(t0, Q)`` pairs with increasing ``t0``."""

    events: tuple = ()

    def __post_init__(self):
        events = tuple((float(t), float(q)) for t, q in self.events)
        object.__setattr__(self, "events", events)
        for t, q in events:
            _finite("schedule time", t)
            _finite("schedule Q", q)
            if q <= 0:
                raise ConfigError("schedule Q values must be > 0")
        times = [t for t, _ in events]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ConfigError("schedule times must be strictly increasing")

    def impulses(self) -> list[Impulse]:
        return [Impulse(q, t) for t, q in self.events]


Emission = Union[Impulse, Continuous, Schedule]


@dataclass(frozen=True)
class SourceSpec:
    emission: Emission
    origin: tuple = (0.0, 0.0)
    height_H: float = DEFAULT_HEIGHT
    species: str = "virus"

    def __post_init__(self):
        object.__setattr__(self, "origin", tuple(float(v) for v in self.origin))
        if len(self.origin) != 2:
            raise ConfigError("source origin is an (x, y) pair")
        _finite("origin", self.origin)
        _finite("height_H", self.height_H)
        if self.height_H < 0:
            raise ConfigError("height_H must be >= 0")
        if not isinstance(self.emission, (Impulse, Continuous, Schedule)):
            raise ConfigError(f"unknown emission type {type(self.emission).__name__}")

    def impulses(self) -> list[Impulse]:
        if isinstance(self.emission, Impulse):
            return [self.emission]
        if isinstance(self.emission, Schedule):
            return self.emission.impulses()
        return []


@dataclass(frozen=True)
class Probe:
    position: tuple
    sample_times: Sequence[float] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "position", tuple(float(v) for v in self.position))
        times = np.asarray(self.sample_times, dtype=float)
        _finite("sample_times", times)
        if times.size and (times[0] < 0 or np.any(np.diff(times) <= 0)):
            raise ConfigError("probe times must be non-negative and strictly increasing")
        object.__setattr__(self, "sample_times", times)


def _puff_kernel(Q, dx, dy, z, tau, u, K, H, reflect):
    """Puff value; ``dx``/``dy`` are offsets from the source origin, ``tau > 0``."""
    s = 4.0 * K * tau
    norm = Q / (np.pi * s) ** 1.5
    xr = dx - u * tau
    vertical = np.exp(-((z - H) ** 2) / s)
    if reflect:
        vertical = vertical + np.exp(-((z + H) ** 2) / s)
    return norm * np.exp(-(xr**2 + dy**2) / s) * vertical


def _plume_kernel(Qdot, dx, dy, z, u, K, H, reflect):
    """Plume value; returns 0 where ``dx <= 0``."""
    dx = np.asarray(dx, dtype=float)
    downwind = dx > 0
    safe_x = np.where(downwind, dx, 1.0)
    var = 2.0 * K * safe_x / u
    vertical = np.exp(-((z - H) ** 2) / (2 * var))
    if reflect:
        vertical = vertical + np.exp(-((z + H) ** 2) / (2 * var))
    c = Qdot / (2 * np.pi * u * var) * np.exp(-(dy**2) / (2 * var)) * vertical
    return np.where(downwind, c, 0.0)


def _point(p):
    if len(p) != 3:
        raise ConfigError("point must be (x, y, z)")
    return tuple(_finite("point", v) for v in p)


def _require_diffusive(med):
    if med.diffusivity_K <= 0:
        raise ModelInapplicableError("closed-form models need diffusivity_K > 0")


def _scalar_or_array(v):
    return float(v) if np.ndim(v) == 0 else v


def puff_concentration(src: SourceSpec, med: MediumParams, p, t):
    """Concentration of an impulse source at point ``p = (x, y, z)`` and time ``t``.

    Coordinates and ``t`` broadcast against each other. ``t`` is absolute
    time; the elapsed time ``t - t0`` must be positive everywhere.
    """
    if not isinstance(src.emission, Impulse):
        raise ConfigError("puff_concentration needs an Impulse source")
    _require_diffusive(med)
    x, y, z = _point(p)
    tau = _finite("t", t) - src.emission.t0
    if np.any(tau <= 0):
        raise InvalidTimeError("puff is undefined at or before the release time")
    c = _puff_kernel(
        src.emission.Q,
        x - src.origin[0],
        y - src.origin[1],
        z,
        tau,
        med.wind_u,
        med.diffusivity_K,
        src.height_H,
        med.reflect_ground,
    )
    return _scalar_or_array(c)


def plume_concentration(src: SourceSpec, med: MediumParams, p):
    """Steady-state concentration of a continuous source at ``p``.

    Lateral and vertical widths are both sqrt(2 K x / u) at downwind
    distance ``x``.
    """
    if not isinstance(src.emission, Continuous):
        raise ConfigError("plume_concentration needs a Continuous source")
    _require_diffusive(med)
    if med.wind_u <= 0:
        raise ModelInapplicableError("plume model needs wind_u > 0")
    x, y, z = _point(p)
    dx = x - src.origin[0]
    if np.any(dx <= 0):
        raise OutOfPlumeError("plume is only defined strictly downwind of the source")
    c = _plume_kernel(
        src.emission.Qdot,
        dx,
        y - src.origin[1],
        z,
        med.wind_u,
        med.diffusivity_K,
        src.height_H,
        med.reflect_ground,
    )
    return _scalar_or_array(c)


def plume_sigma(med: MediumParams, x) -> np.ndarray:
    """Plume width at downwind distance ``x``."""
    return np.sqrt(2.0 * med.diffusivity_K * np.asarray(x, dtype=float) / med.wind_u)


def source_concentration(src: SourceSpec, med: MediumParams, p, t):
    """Causal concentration of any source type at ``p`` and time(s) ``t``.

    Impulses released at or after ``t`` contribute nothing. Continuous
    sources use the steady plume and contribute nothing upwind.
    """
    _require_diffusive(med)
    x, y, z = _point(p)
    t = _finite("t", t)
    dx = x - src.origin[0]
    dy = y - src.origin[1]
    H = src.height_H
    u, K, refl = med.wind_u, med.diffusivity_K, med.reflect_ground
    if isinstance(src.emission, Continuous):
        if u <= 0:
            raise ModelInapplicableError("plume model needs wind_u > 0")
        out = _plume_kernel(src.emission.Qdot, dx, dy, z, u, K, H, refl)
        return _scalar_or_array(out * np.ones(np.broadcast(out, t).shape))
    total = np.zeros(np.broadcast(dx, dy, z, t).shape)
    for imp in src.impulses():
        tau = t - imp.t0
        live = tau > 0
        if not np.any(live):
            continue
        tau_safe = np.where(live, tau, 1.0)
        c = _puff_kernel(imp.Q, dx, dy, z, tau_safe, u, K, H, refl)
        total = total + np.where(live, c, 0.0)
    return _scalar_or_array(total)


def superpose(sources: Iterable[SourceSpec], med: MediumParams, p, t) -> dict:
    """Per-species sum of the causal contributions of every source."""
    sources = list(sources)
    if not sources:
        raise ConfigError("superpose needs at least one source")
    out: dict = defaultdict(float)
    for src in sources:
        out[src.species] = out[src.species] + source_concentration(src, med, p, t)
    return dict(out)


def receive_series(
    sources: Iterable[SourceSpec], med: MediumParams, position, times
) -> dict:
    """Per-species concentration series at ``position`` (causal superposition).

    Species with no source are absent from the result.
    """
    times = np.asarray(times, dtype=float)
    position = tuple(float(v) for v in position)
    out = {}
    for src in sources:
        vals = np.asarray(source_concentration(src, med, position, times), dtype=float)
        if src.species in out:
            out[src.species] = out[src.species] + ConcentrationSeries(
                times, vals, position, src.species
            )
        else:
            out[src.species] = ConcentrationSeries(times, vals, position, src.species)
    return out


def impulse_response(src: SourceSpec, med: MediumParams, probe: Probe) -> ConcentrationSeries:
    """Sample the puff at a fixed probe over ``probe.sample_times``."""
    times = probe.sample_times
    values = puff_concentration(src, med, probe.position, times)
    return ConcentrationSeries(times, np.atleast_1d(values), probe.position, src.species)


def field_snapshot(
    src: SourceSpec, med: MediumParams, grid: GridSpec, t: float, max_cells: int = MAX_CELLS
) -> ConcentrationField:
    """Evaluate the source on every cell centre of ``grid`` at time ``t``.

    Continuous sources ignore ``t`` and are zero upwind of the origin.
    """
    if not math.isfinite(t) or t <= 0:
        raise InvalidTimeError("snapshot time must be > 0")
    grid.check_size(max_cells)
    if grid.size == 0:
        return ConcentrationField(grid, np.zeros(grid.shape), t, src.species)
    X, Y, Z = grid.mesh()
    values = source_concentration(src, med, (X, Y, Z), t)
    return ConcentrationField(grid, np.asarray(values), t, src.species)


def puff_cell_average(src: SourceSpec, med: MediumParams, grid: GridSpec, t: float) -> ConcentrationField:
    """Exact cell averages of an impulse puff over ``grid`` (erf products).

    This is the fair analytic reference for binned particle counts, which
    estimate cell averages rather than point values.
    """
    if not isinstance(src.emission, Impulse):
        raise ConfigError("puff_cell_average needs an Impulse source")
    _require_diffusive(med)
    tau = t - src.emission.t0
    if tau <= 0:
        raise InvalidTimeError("puff is undefined at or before the release time")
    grid.check_size()
    ex, ey, ez = grid.edges()
    sig = math.sqrt(2 * med.diffusivity_K * tau)
    xc = src.origin[0] + med.wind_u * tau
    yc = src.origin[1]
    H = src.height_H

    def mass(edges, centre):
        c = 0.5 * erf((edges - centre) / (sig * math.sqrt(2)))
        return np.diff(c)

    mx = mass(ex, xc)
    my = mass(ey, yc)
    mz = mass(ez, H)
    if med.reflect_ground:
        mz = mz + mass(ez, -H)
    values = src.emission.Q * np.einsum("i,j,k->ijk", mx, my, mz) / grid.cell_volume
    return ConcentrationField(grid, values, t, src.species)


def total_mass(src: SourceSpec, med: MediumParams, t: float, box=None) -> float:
    """Analytic particle count of a puff at time ``t``.

    With no ``box`` the integral runs over all space, or over the half-space
    z >= 0 when the ground mirror is on; both equal ``Q``. ``box`` is
    ``((x0, x1), (y0, y1), (z0, z1))``; with the mirror on only its part
    above the ground counts.
    """
    if not isinstance(src.emission, Impulse):
        raise ConfigError("total_mass needs an Impulse source")
    _require_diffusive(med)
    tau = t - src.emission.t0
    if not math.isfinite(t) or tau <= 0:
        raise InvalidTimeError("puff is undefined at or before the release time")
    Q = src.emission.Q
    if box is None:
        return float(Q)
    sig = math.sqrt(2 * med.diffusivity_K * tau)

    def frac(lo, hi, centre):
        r2 = sig * math.sqrt(2)
        return 0.5 * (math.erf((hi - centre) / r2) - math.erf((lo - centre) / r2))

    (x0, x1), (y0, y1), (z0, z1) = box
    H = src.height_H
    fx = frac(x0, x1, src.origin[0] + med.wind_u * tau)
    fy = frac(y0, y1, src.origin[1])
    if med.reflect_ground:
        z0 = max(z0, 0.0)
        fz = frac(z0, z1, H) + frac(z0, z1, -H) if z1 > z0 else 0.0
    else:
        fz = frac(z0, z1, H)
    return float(Q * fx * fy * fz)


def steady_point_source(Qdot: float, med: MediumParams, dx, dy, dz):
    """Exact steady concentration of a continuous point source in free space.

    This is the time integral of the puff (no slender-plume approximation):
    Qdot / (4 pi K r) * exp(u (dx - r) / (2 K)).
    """
    _require_diffusive(med)
    r = np.sqrt(np.asarray(dx) ** 2 + np.asarray(dy) ** 2 + np.asarray(dz) ** 2)
    K, u = med.diffusivity_K, med.wind_u
    return Qdot / (4 * np.pi * K * r) * np.exp(u * (dx - r) / (2 * K))
