"""Random-walk particle transport.

Each particle carries ``Q / N`` physical aerosols and moves per step by

    dx = u dt + sqrt(2 K dt) xi_x,   dy = sqrt(2 K dt) xi_y,   dz = sqrt(2 K dt) xi_z

with independent standard normal ``xi``. For constant ``u`` and ``K`` the
increments are exactly Gaussian, so the step size only matters for how
finely ground crossings are resolved.

Random numbers
--------------
Particles are split into fixed blocks of ``CHUNK`` consecutive indices. The
normals for block ``b`` at step ``s`` come from a Philox generator seeded by
``SeedSequence(seed, spawn_key=(s, b))``. The block layout never depends on
the worker count, so a run gives bit-identical positions however many
threads execute it.
"""

from __future__ import annotations

import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .dispersion import Impulse, MediumParams, SourceSpec
from .errors import ConfigError, ResourceError
from .fields import ConcentrationField, ConcentrationSeries, GridSpec

CHUNK = 1 << 16
MAX_PARTICLE_STEPS = 10**10

BOUNDARIES = ("none", "reflect_ground", "absorb_ground")


@dataclass(frozen=True, eq=False)
class ParticleEnsemble:
    """Particle positions plus the state needed to continue the walk.

    ``species`` holds one integer code per particle indexing into
    ``species_labels``. ``steps_taken`` is the stream counter: together with
    ``seed`` it fixes every future random draw.
    """

    positions: np.ndarray
    alive: np.ndarray
    species: np.ndarray
    species_labels: tuple
    weight: float
    seed: int
    steps_taken: int = 0
    sim_time: float = 0.0

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def n_alive(self) -> int:
        return int(np.count_nonzero(self.alive))

    @property
    def n_absorbed(self) -> int:
        return self.n - self.n_alive

    def checksum(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.positions).tobytes())
        h.update(self.alive.tobytes())
        return h.hexdigest()


@dataclass(frozen=True)
class StepParams:
    dt: float
    med: MediumParams
    boundary: str = "none"

    def __post_init__(self):
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ConfigError("dt must be > 0")
        if self.boundary not in BOUNDARIES:
            raise ConfigError(f"boundary must be one of {BOUNDARIES}")


def seed_ensemble(src: SourceSpec, n_particles: int, seed: int) -> ParticleEnsemble:
    """Place ``n_particles`` at the release point of an impulse source."""
    if not isinstance(src.emission, Impulse):
        raise ConfigError("seed_ensemble needs an Impulse source")
    n_particles = int(n_particles)
    if n_particles < 1:
        raise ConfigError("n_particles must be >= 1")
    pos = np.empty((n_particles, 3))
    pos[:, 0] = src.origin[0]
    pos[:, 1] = src.origin[1]
    pos[:, 2] = src.height_H
    return ParticleEnsemble(
        positions=pos,
        alive=np.ones(n_particles, dtype=bool),
        species=np.zeros(n_particles, dtype=np.int32),
        species_labels=(src.species,),
        weight=src.emission.Q / n_particles,
        seed=int(seed),
        steps_taken=0,
        sim_time=0.0,
    )


def _chunk_normals(seed: int, step_index: int, chunk: int, n: int) -> np.ndarray:
    ss = np.random.SeedSequence(seed, spawn_key=(step_index, chunk))
    return np.random.Generator(np.random.Philox(ss)).standard_normal((n, 3))


def _advance_chunk(pos, alive, seed, step_index, chunk, sp: StepParams):
    lo = chunk * CHUNK
    hi = min(lo + CHUNK, pos.shape[0])
    p = pos[lo:hi]
    a = alive[lo:hi]
    xi = _chunk_normals(seed, step_index, chunk, hi - lo)
    scale = math.sqrt(2.0 * sp.med.diffusivity_K * sp.dt)
    disp = xi * scale
    disp[:, 0] += sp.med.wind_u * sp.dt
    # absorbed particles stay where they landed
    disp[~a] = 0.0
    p += disp
    if sp.boundary == "reflect_ground":
        below = p[:, 2] < 0
        p[below, 2] = -p[below, 2]
    elif sp.boundary == "absorb_ground":
        a &= ~(p[:, 2] < 0)


def _advance(pos, alive, seed, step_index, sp, pool):
    n_chunks = -(-pos.shape[0] // CHUNK)
    if pool is None:
        for c in range(n_chunks):
            _advance_chunk(pos, alive, seed, step_index, c, sp)
    else:
        list(pool.map(lambda c: _advance_chunk(pos, alive, seed, step_index, c, sp), range(n_chunks)))


def step(ens: ParticleEnsemble, sp: StepParams) -> ParticleEnsemble:
    """Advance the ensemble by one step; the input is left untouched."""
    pos = ens.positions.copy()
    alive = ens.alive.copy()
    _advance(pos, alive, ens.seed, ens.steps_taken, sp, None)
    return replace(
        ens,
        positions=pos,
        alive=alive,
        steps_taken=ens.steps_taken + 1,
        sim_time=ens.sim_time + sp.dt,
    )


def n_steps_for(t_end: float, dt: float) -> int:
    return max(1, math.ceil(t_end / dt - 1e-9))


def simulate(
    src: SourceSpec,
    med: MediumParams,
    n_particles: int,
    seed: int,
    dt: float,
    t_end: float,
    boundary: str = "none",
    record_times=None,
    workers: int = 1,
    max_particle_steps: int = MAX_PARTICLE_STEPS,
) -> list[ParticleEnsemble]:
    """Release an impulse and walk it for ``ceil(t_end / dt)`` steps.

    Returns ensemble snapshots taken at the first step boundary at or after
    each entry of ``record_times`` (times since release); by default only
    the final state is returned. ``workers`` threads share the work but
    never change the result.
    """
    sp = StepParams(dt, med, boundary)
    if not (math.isfinite(t_end) and t_end >= dt * (1 - 1e-9)):
        raise ConfigError("t_end must be >= dt")
    n_steps = n_steps_for(t_end, dt)
    if int(n_particles) * n_steps > max_particle_steps:
        raise ResourceError(
            f"{n_particles} particles x {n_steps} steps exceeds cap {max_particle_steps}"
        )
    ens = seed_ensemble(src, n_particles, seed)
    if record_times is None:
        record_steps = {n_steps}
    else:
        record_steps = {min(n_steps, n_steps_for(t, dt)) if t > 0 else 0 for t in record_times}
    pos = ens.positions
    alive = ens.alive
    snapshots = []

    def snap(k):
        return replace(ens, positions=pos.copy(), alive=alive.copy(), steps_taken=k, sim_time=k * dt)

    if 0 in record_steps:
        snapshots.append(snap(0))
    pool = ThreadPoolExecutor(workers) if workers > 1 else None
    try:
        for k in range(n_steps):
            _advance(pos, alive, ens.seed, k, sp, pool)
            if k + 1 in record_steps:
                snapshots.append(snap(k + 1))
    finally:
        if pool is not None:
            pool.shutdown()
    return snapshots


def bin_concentration(
    ens: ParticleEnsemble, grid: GridSpec, physical_Q: float, species: str | None = None
) -> ConcentrationField:
    """Histogram alive particles into ``grid`` cells as a concentration.

    Each particle weighs ``physical_Q / N``. Particles outside the grid are
    tallied in ``meta["outside"]``; absorbed ones in ``meta["absorbed"]``.
    """
    nx, ny, nz = grid.shape
    label = species if species is not None else ens.species_labels[0]
    if grid.size == 0 or ens.n_alive == 0:
        return ConcentrationField(
            grid, np.zeros(grid.shape), ens.sim_time, label,
            {"outside": ens.n_alive, "absorbed": ens.n_absorbed},
        )
    mask = ens.alive
    if species is not None:
        code = ens.species_labels.index(species)
        mask = mask & (ens.species == code)
    p = ens.positions[mask]
    idx = []
    inside = np.ones(p.shape[0], dtype=bool)
    for axis, (c, h, n) in enumerate(
        ((grid.x, grid.dx, nx), (grid.y, grid.dy, ny), (grid.z, grid.dz, nz))
    ):
        i = np.floor((p[:, axis] - (c[0] - h / 2)) / h).astype(np.int64)
        inside &= (i >= 0) & (i < n)
        idx.append(i)
    flat = np.ravel_multi_index([i[inside] for i in idx], (nx, ny, nz))
    counts = np.bincount(flat, minlength=nx * ny * nz).reshape(nx, ny, nz)
    weight = physical_Q / ens.n
    values = counts * (weight / grid.cell_volume)
    return ConcentrationField(
        grid,
        values,
        ens.sim_time,
        label,
        {"outside": int(p.shape[0] - np.count_nonzero(inside)), "absorbed": ens.n_absorbed},
    )


def probe_response(
    src: SourceSpec,
    med: MediumParams,
    position,
    times,
    n_particles: int,
    seed: int,
    dt: float,
    box: float = 0.1,
    boundary: str = "none",
    workers: int = 1,
    max_particle_steps: int = MAX_PARTICLE_STEPS,
) -> ConcentrationSeries:
    """Stochastic impulse response: concentration in a cubic box of side
    ``box`` centred at ``position``, sampled at ``times`` after release.

    Sample times are rounded up to the step lattice. Box counts are taken
    as the walk proceeds, so memory does not grow with the number of samples.
    """
    times = np.asarray(times, dtype=float)
    if times.size == 0:
        return ConcentrationSeries(times, times.copy(), tuple(position), src.species)
    sp = StepParams(dt, med, boundary)
    steps = np.array([n_steps_for(t, dt) if t > 0 else 0 for t in times])
    n_steps = int(steps.max())
    if int(n_particles) * n_steps > max_particle_steps:
        raise ResourceError(
            f"{n_particles} particles x {n_steps} steps exceeds cap {max_particle_steps}"
        )
    ens = seed_ensemble(src, n_particles, seed)
    pos, alive = ens.positions, ens.alive
    lo = np.asarray(position, dtype=float) - box / 2
    hi = lo + box
    wanted = set(steps.tolist())
    counts = {}

    def count():
        inside = alive & np.all((pos >= lo) & (pos < hi), axis=1)
        return int(np.count_nonzero(inside))

    if 0 in wanted:
        counts[0] = count()
    pool = ThreadPoolExecutor(workers) if workers > 1 else None
    try:
        for k in range(n_steps):
            _advance(pos, alive, ens.seed, k, sp, pool)
            if k + 1 in wanted:
                counts[k + 1] = count()
    finally:
        if pool is not None:
            pool.shutdown()
    vals = np.array([counts[k] for k in steps.tolist()]) * (ens.weight / box**3)
    return ConcentrationSeries(times, vals, tuple(position), src.species)
