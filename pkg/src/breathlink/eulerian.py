"""Explicit finite-volume solver for dC/dt + u dC/dx = K laplacian(C).

First-order upwind advection and second-order central diffusion, forward
Euler in time. The update is written in flux form, so a box whose faces
all block flux conserves the discrete mass to rounding error.

Face types: ``open`` faces see a zero ghost cell just outside the domain;
``wall`` faces carry no flux at all. ``boundary="reflect_ground"`` makes the
bottom z face a wall and the rest open; ``"closed"`` makes every face a wall.

The puff's t -> 0 delta is never stepped directly: runs start from the
analytic puff at a small positive time (``DEFAULT_T0``).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numba
import numpy as np

from .dispersion import Impulse, MediumParams, SourceSpec, field_snapshot
from .errors import ConfigError, StabilityError
from .fields import ConcentrationField, GridSpec

DEFAULT_T0 = 0.01
BOUNDARIES = ("open", "reflect_ground", "closed")
SCHEMES = ("upwind-central",)


@numba.njit(cache=True, inline="always")
def _cell_update(c, i, j, k, ax, kx, ky, kz, walls):
    # walls: west, east, south, north, bottom, top (1 = no flux).
    # Written as a weighted sum with non-negative weights so rounding can
    # never push a cell below zero.
    nx, ny, nz = c.shape
    keep = 1.0
    gain = 0.0
    if i > 0:
        gain += (ax + kx) * c[i - 1, j, k]
        keep -= kx
    elif walls[0] == 0:
        keep -= kx
    if i < nx - 1:
        gain += kx * c[i + 1, j, k]
        keep -= ax + kx
    elif walls[1] == 0:
        keep -= ax + kx
    if j > 0:
        gain += ky * c[i, j - 1, k]
        keep -= ky
    elif walls[2] == 0:
        keep -= ky
    if j < ny - 1:
        gain += ky * c[i, j + 1, k]
        keep -= ky
    elif walls[3] == 0:
        keep -= ky
    if k > 0:
        gain += kz * c[i, j, k - 1]
        keep -= kz
    elif walls[4] == 0:
        keep -= kz
    if k < nz - 1:
        gain += kz * c[i, j, k + 1]
        keep -= kz
    elif walls[5] == 0:
        keep -= kz
    return max(keep, 0.0) * c[i, j, k] + gain


@numba.njit(cache=True)
def _step_kernel(c, out, ax, kx, ky, kz, walls):
    nx, ny, nz = c.shape
    keep = max(1.0 - ax - 2.0 * (kx + ky + kz), 0.0)
    west = ax + kx
    for i in range(nx):
        for j in range(ny):
            if 0 < i < nx - 1 and 0 < j < ny - 1 and nz > 2:
                out[i, j, 0] = _cell_update(c, i, j, 0, ax, kx, ky, kz, walls)
                for k in range(1, nz - 1):
                    out[i, j, k] = (
                        keep * c[i, j, k]
                        + west * c[i - 1, j, k]
                        + kx * c[i + 1, j, k]
                        + ky * (c[i, j - 1, k] + c[i, j + 1, k])
                        + kz * (c[i, j, k - 1] + c[i, j, k + 1])
                    )
                out[i, j, nz - 1] = _cell_update(c, i, j, nz - 1, ax, kx, ky, kz, walls)
            else:
                for k in range(nz):
                    out[i, j, k] = _cell_update(c, i, j, k, ax, kx, ky, kz, walls)


@dataclass(frozen=True)
class GridSolverConfig:
    """Grid, time step, medium and boundary for one solve.

    Construction fails with ``StabilityError`` unless the scheme stays
    stable and positive:

    * u dt / dx <= 1
    * K dt (1/dx^2 + 1/dy^2 + 1/dz^2) <= 1/2
    * u dt / dx + 2 K dt (1/dx^2 + 1/dy^2 + 1/dz^2) <= 1
    """

    grid: GridSpec
    dt: float
    med: MediumParams
    boundary: str = "open"
    scheme: str = "upwind-central"

    def __post_init__(self):
        if self.boundary not in BOUNDARIES:
            raise ConfigError(f"boundary must be one of {BOUNDARIES}")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}")
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ConfigError("dt must be > 0")
        courant, diff = stability_numbers(self.grid, self.dt, self.med)
        if courant > 1 + 1e-12:
            raise StabilityError(f"CFL number u*dt/dx = {courant:.4g} exceeds 1")
        if diff > 0.5 + 1e-12:
            raise StabilityError(f"diffusion number K*dt*sum(1/h^2) = {diff:.4g} exceeds 1/2")
        if courant + 2 * diff > 1 + 1e-12:
            raise StabilityError(
                f"u*dt/dx + 2*K*dt*sum(1/h^2) = {courant + 2 * diff:.4g} exceeds 1; "
                "the update would not preserve positivity"
            )

    @property
    def walls(self) -> np.ndarray:
        if self.boundary == "closed":
            return np.ones(6, dtype=np.int64)
        w = np.zeros(6, dtype=np.int64)
        if self.boundary == "reflect_ground":
            w[4] = 1
        return w


def stability_numbers(grid: GridSpec, dt: float, med: MediumParams) -> tuple[float, float]:
    courant = med.wind_u * dt / grid.dx
    diff = med.diffusivity_K * dt * (1 / grid.dx**2 + 1 / grid.dy**2 + 1 / grid.dz**2)
    return courant, diff


def max_stable_dt(grid: GridSpec, med: MediumParams) -> float:
    """Largest dt that satisfies every condition checked by ``GridSolverConfig``."""
    inv = med.wind_u / grid.dx + 2 * med.diffusivity_K * (
        1 / grid.dx**2 + 1 / grid.dy**2 + 1 / grid.dz**2
    )
    return math.inf if inv == 0 else 1.0 / inv


def _moments(field: ConcentrationField):
    v = field.values
    m = v.sum()
    if m <= 0:
        return None
    X, Y, Z = field.grid.mesh()
    centre = [float((v * A).sum() / m) for A in (X, Y, Z)]
    var = [float((v * (A - c) ** 2).sum() / m) for A, c in zip((X, Y, Z), centre)]
    return centre, var


def _domain_too_small(initial: ConcentrationField, cfg: GridSolverConfig, elapsed: float) -> bool:
    """True when the advected, spread cloud comes within 4 sigma of an open face."""
    mom = _moments(initial)
    if mom is None:
        return False
    (cx, cy, cz), (vx, vy, vz) = mom
    grow = 2 * cfg.med.diffusivity_K * elapsed
    cx += cfg.med.wind_u * elapsed
    g = cfg.grid
    walls = cfg.walls
    checks = (
        (cx, vx + grow, g.x[0] - g.dx / 2, g.x[-1] + g.dx / 2, walls[0], walls[1]),
        (cy, vy + grow, g.y[0] - g.dy / 2, g.y[-1] + g.dy / 2, walls[2], walls[3]),
        (cz, vz + grow, g.z[0] - g.dz / 2, g.z[-1] + g.dz / 2, walls[4], walls[5]),
    )
    for c, var, lo, hi, wlo, whi in checks:
        s = 4 * math.sqrt(var)
        if (not wlo and c - s < lo) or (not whi and c + s > hi):
            return True
    return False


def solve(
    initial: ConcentrationField, cfg: GridSolverConfig, t_end: float, check_positive: bool = False
) -> ConcentrationField:
    """Step ``initial`` from its time stamp to ``t_end``.

    The step count is ``ceil(elapsed / cfg.dt)`` with the step shrunk so the
    run ends exactly at ``t_end``. ``meta`` reports ``steps``, ``dt`` and
    ``domain_warning``.
    """
    if initial.grid.shape != cfg.grid.shape:
        raise ConfigError("initial field and solver grid differ")
    if np.any(initial.values < 0) or not np.all(np.isfinite(initial.values)):
        raise ConfigError("initial field must be finite and non-negative")
    elapsed = t_end - initial.time_stamp
    if elapsed < 0:
        raise ConfigError("t_end precedes the initial field's time stamp")
    n = math.ceil(elapsed / cfg.dt - 1e-9) if elapsed > 0 else 0
    dt = elapsed / n if n else cfg.dt
    small = _domain_too_small(initial, cfg, elapsed)
    if small:
        warnings.warn("cloud reaches within 4 sigma of an open boundary", RuntimeWarning, stacklevel=2)
    c = np.ascontiguousarray(initial.values, dtype=float).copy()
    if n:
        g, med = cfg.grid, cfg.med
        ax = med.wind_u * dt / g.dx
        kx = med.diffusivity_K * dt / g.dx**2
        ky = med.diffusivity_K * dt / g.dy**2
        kz = med.diffusivity_K * dt / g.dz**2
        out = np.empty_like(c)
        walls = cfg.walls
        for _ in range(n):
            _step_kernel(c, out, ax, kx, ky, kz, walls)
            c, out = out, c
            if check_positive:
                assert c.min() >= 0.0, "positivity lost"
    return ConcentrationField(
        cfg.grid,
        c,
        float(t_end),
        initial.species,
        {"steps": n, "dt": dt, "domain_warning": small},
    )


def puff_domain(
    src: SourceSpec, med: MediumParams, t0: float, t_end: float, spacing: float, n_sigma: float = 4.5
) -> GridSpec:
    """Cubic-cell grid covering the puff from ``t0`` to ``t_end`` with
    ``n_sigma`` standard deviations of margin at ``t_end``.

    The cell lattice passes through the release point, so the puff centre
    sits on a cell centre whenever ``u t`` is a multiple of ``spacing``.
    """
    sig = math.sqrt(2 * med.diffusivity_K * (t_end - src.emission.t0))
    margin = n_sigma * sig
    h = spacing
    x0, y0 = src.origin
    u = med.wind_u
    lo = math.floor((u * (t0 - src.emission.t0) - margin) / h)
    hi = math.ceil((u * (t_end - src.emission.t0) + margin) / h)
    x = x0 + h * np.arange(lo, hi + 1)
    m = math.ceil(margin / h)
    y = y0 + h * np.arange(-m, m + 1)
    if med.reflect_ground:
        top = src.height_H + margin
        z = h / 2 + h * np.arange(math.ceil(top / h))
    else:
        z = src.height_H + h * np.arange(-m, m + 1)
    return GridSpec(x, y, z, h, h, h)


def solve_puff(
    src: SourceSpec,
    med: MediumParams,
    t_end: float,
    spacing: float,
    t0: float = DEFAULT_T0,
    dt: float | None = None,
    safety: float = 1.0,
    n_sigma: float = 4.5,
    grid: GridSpec | None = None,
) -> ConcentrationField:
    """Start from the analytic puff at ``t0`` and step it to ``t_end``."""
    if not isinstance(src.emission, Impulse):
        raise ConfigError("solve_puff needs an Impulse source")
    if grid is None:
        grid = puff_domain(src, med, t0, t_end, spacing, n_sigma)
    if dt is None:
        dt = safety * max_stable_dt(grid, med)
    boundary = "reflect_ground" if med.reflect_ground else "open"
    cfg = GridSolverConfig(grid, dt, med, boundary)
    initial = field_snapshot(src, med, grid, t0)
    return solve(initial, cfg, t_end)


@dataclass(frozen=True)
class ConvergenceRow:
    dx: float
    dt: float
    steps: int
    l2_error: float
    order: float  # versus the previous (coarser) row; nan on the first


def l2_relative_error(estimate, reference) -> float:
    reference = np.asarray(reference)
    denom = math.sqrt(float(np.sum(reference**2)))
    if denom == 0:
        return 0.0
    return math.sqrt(float(np.sum((np.asarray(estimate) - reference) ** 2))) / denom


def convergence_report(
    src: SourceSpec,
    med: MediumParams,
    spacings,
    t0: float,
    t_end: float,
    dt: float | None = None,
) -> list[ConvergenceRow]:
    """Solve the same puff on successively finer grids and compare each
    result with the analytic puff at ``t_end``.

    ``dt=None`` picks the largest stable step per level; a fixed ``dt`` is
    validated per level and raises ``StabilityError`` when a finer grid
    cannot take it.
    """
    spacings = list(spacings)
    if len(spacings) < 3:
        raise ConfigError("convergence_report needs at least three refinement levels")
    rows: list[ConvergenceRow] = []
    for h in spacings:
        grid = puff_domain(src, med, t0, t_end, h)
        step_dt = dt if dt is not None else max_stable_dt(grid, med)
        GridSolverConfig(grid, step_dt, med)
    for h in spacings:
        field = solve_puff(src, med, t_end, h, t0=t0, dt=dt)
        if t_end > t0:
            ref = field_snapshot(src, med, field.grid, t_end).values
        else:
            ref = field_snapshot(src, med, field.grid, t0).values
        err = l2_relative_error(field.values, ref)
        if rows and rows[-1].l2_error > 0 and err > 0:
            order = math.log(rows[-1].l2_error / err) / math.log(rows[-1].dx / h)
        else:
            order = math.nan
        rows.append(ConvergenceRow(h, field.meta["dt"], field.meta["steps"], err, order))
    return rows


def observed_order(rows: list[ConvergenceRow]) -> float:
    """Order of accuracy between the two finest levels."""
    return rows[-1].order
