"""End-to-end link experiments built on the channel and receiver models.

Transmitters are ``(SourceSpec, program)`` pairs, where the program is an
``EmissionSchedule`` (breaths, coughs, sneezes) or a ``SymbolFrame``
(on-off keyed bits). The source's own emission is replaced by the impulse
train the program produces; its position, height and species are kept.

The receiver integrates the superposed concentration over consecutive
windows of length ``rx.window_T`` starting at ``sync_offset`` and makes a
hard decision per window; window ``k`` decodes bit ``k``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import trapezoid

from . import lagrangian
from .dispersion import (
    Impulse,
    MediumParams,
    Schedule,
    SourceSpec,
    receive_series,
    source_concentration,
    steady_point_source,
)
from .errors import ConfigError, CoverageError
from .fields import ConcentrationSeries
from .receiver import (
    DetectionReport,
    ReceiverSpec,
    detect,
    expected_captured,
    ml_threshold,
    poisson_tails,
    sample_count,
)

# reference cough from the Fig.-4-style case study; breath is 1 %, sneeze 2x
COUGH_Q = 40000.0
DEFAULT_Q = {"breath": 0.01 * COUGH_Q, "cough": COUGH_Q, "sneeze": 2.0 * COUGH_Q}
BREATH_PERIOD = 5.0


@dataclass(frozen=True)
class EmissionSchedule:
    """Exhalation events ``(t0, kind, Q)`` with strictly increasing ``t0``."""

    events: tuple = ()

    def __post_init__(self):
        events = tuple((float(t), str(k), float(q)) for t, k, q in self.events)
        for _, kind, q in events:
            if kind not in DEFAULT_Q:
                raise ConfigError(f"unknown exhalation kind {kind!r}")
            if not q > 0:
                raise ConfigError("event Q must be > 0")
        times = [e[0] for e in events]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ConfigError("event times must be strictly increasing")
        object.__setattr__(self, "events", events)

    @classmethod
    def from_kinds(cls, timed_kinds, q_overrides=None, jitter=None, seed=None) -> "EmissionSchedule":
        """Events from ``(t0, kind)`` pairs using per-kind default strengths.

        ``jitter`` is the sigma of a multiplicative log-normal factor applied
        per event (off by default).
        """
        q_table = {**DEFAULT_Q, **(q_overrides or {})}
        rng = np.random.default_rng(seed)
        events = []
        for t, kind in timed_kinds:
            if kind not in q_table:
                raise ConfigError(f"unknown exhalation kind {kind!r}")
            q = q_table[kind]
            if jitter:
                q *= float(rng.lognormal(0.0, jitter))
            events.append((t, kind, q))
        return cls(tuple(events))

    @classmethod
    def breathing(cls, n_breaths: int, period: float = BREATH_PERIOD, start: float = 0.0, **kw):
        return cls.from_kinds([(start + i * period, "breath") for i in range(n_breaths)], **kw)

    def impulses(self) -> list[tuple[float, float]]:
        return [(t, q) for t, _, q in self.events]

    @property
    def span(self) -> float:
        return self.events[-1][0] if self.events else 0.0


@dataclass(frozen=True)
class SymbolFrame:
    """On-off keying: bit 1 releases ``Q`` at the start of its symbol slot."""

    bits: tuple
    symbol_duration: float
    Q: float = COUGH_Q
    t_start: float = 0.0

    def __post_init__(self):
        bits = tuple(int(b) for b in self.bits)
        if any(b not in (0, 1) for b in bits):
            raise ConfigError("bits must be 0 or 1")
        if not self.symbol_duration > 0:
            raise ConfigError("symbol_duration must be > 0")
        if not self.Q > 0:
            raise ConfigError("Q must be > 0")
        object.__setattr__(self, "bits", bits)

    def impulses(self) -> list[tuple[float, float]]:
        return [
            (self.t_start + k * self.symbol_duration, self.Q)
            for k, b in enumerate(self.bits)
            if b
        ]

    @property
    def span(self) -> float:
        return self.t_start + len(self.bits) * self.symbol_duration


def programmed_source(src: SourceSpec, program) -> SourceSpec:
    """``src`` with its emission replaced by the program's impulse train."""
    return replace(src, emission=Schedule(tuple(program.impulses())))


@dataclass
class ScenarioResult:
    reports: list
    decoded_bits: list
    sent_bits: list | None
    bit_errors: int | None
    window_lambdas: list
    lambda0: float
    lambda1: float
    threshold: float
    isi: "ISIProfile | None"
    timing: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "decoded_bits": list(self.decoded_bits),
            "sent_bits": None if self.sent_bits is None else list(self.sent_bits),
            "bit_errors": self.bit_errors,
            "lambda0": self.lambda0,
            "lambda1": self.lambda1,
            "threshold": self.threshold,
            "window_lambdas": list(self.window_lambdas),
            "isi": None if self.isi is None else self.isi.as_dict(),
            "timing": dict(self.timing),
            "reports": [r.as_dict() for r in self.reports],
        }


def _window_grid(edges, dt_sample):
    """Sample times covering every window edge plus a uniform fill."""
    lo, hi = float(edges[0]), float(edges[-1])
    n = max(2, int(math.ceil((hi - lo) / dt_sample)) + 1)
    return np.unique(np.concatenate([np.linspace(lo, hi, n), edges]))


def _lagrangian_series(src, med, rx, times, opts):
    """Superpose a particle-estimated unit response shifted to each impulse."""
    first = min((imp.t0 for imp in src.impulses()), default=0.0)
    horizon = float(times.max() - first)
    if horizon <= 0:
        return np.zeros_like(times)
    dt = opts.get("dt", 0.01)
    rel = np.arange(dt, horizon + dt, dt)
    unit = replace(src, emission=Impulse(1.0))
    h = lagrangian.probe_response(
        unit, med, rx.position, rel,
        n_particles=opts.get("n_particles", 10**5),
        seed=opts.get("seed", 0),
        dt=dt,
        box=opts.get("box", 0.1),
        workers=opts.get("workers", 1),
    ).values
    rel = np.concatenate([[0.0], rel])
    h = np.concatenate([[0.0], h])
    total = np.zeros_like(times)
    for imp in src.impulses():
        tau = times - imp.t0
        total += imp.Q * np.where(tau > 0, np.interp(tau, rel, h, right=0.0), 0.0)
    return total


def run_scenario(
    transmitters,
    med: MediumParams,
    rx: ReceiverSpec,
    sync_offset: float = 0.0,
    seed: int = 0,
    n_windows: int | None = None,
    background: float = 0.0,
    lambda1: float | None = None,
    tau: float | None = None,
    target_pfa: float | None = None,
    species: str | None = None,
    dt_sample: float | None = None,
    channel: str = "analytic",
    lagrangian_opts: dict | None = None,
) -> ScenarioResult:
    """Simulate the link and decode one hard decision per receiver window.

    ``background`` is the mean count per window with no transmitter (the
    null hypothesis). The signal hypothesis ``lambda1`` defaults to the
    background plus the capture from one isolated emission of the first
    transmitter of the target species, aligned with its window. Only
    transmitters of the target ``species`` (default: the first
    transmitter's) reach the detector.
    """
    if channel not in ("analytic", "lagrangian"):
        raise ConfigError("channel must be 'analytic' or 'lagrangian'")
    if background < 0:
        raise ConfigError("background must be >= 0")
    transmitters = list(transmitters)
    sources = [programmed_source(s, p) for s, p in transmitters]
    if species is None:
        species = sources[0].species if sources else "virus"
    target = [(s, p) for s, (_, p) in zip(sources, transmitters) if s.species == species]
    frames = [p for _, p in target if isinstance(p, SymbolFrame)]
    T = rx.window_T
    if n_windows is None:
        if frames:
            n_windows = max(len(f.bits) for f in frames)
        else:
            span = max((p.span for _, p in transmitters), default=0.0)
            n_windows = max(1, math.ceil(span / T))
    edges = sync_offset + T * np.arange(n_windows + 1)
    dt_sample = dt_sample or min(T / 200.0, 0.01)
    times = _window_grid(edges, dt_sample)

    conc = np.zeros_like(times)
    for s, _ in target:
        if channel == "analytic":
            conc += np.asarray(source_concentration(s, med, rx.position, times), dtype=float)
        else:
            conc += _lagrangian_series(s, med, rx, times, {"seed": seed, **(lagrangian_opts or {})})
    series = ConcentrationSeries(times, conc, rx.position, species)
    window_lams = [expected_captured(series, rx, float(e)) for e in edges[:-1]]

    isi = None
    ref_q = None
    if target:
        ref_src, ref_prog = target[0]
        if isinstance(ref_prog, SymbolFrame):
            ref_q = ref_prog.Q
        elif ref_prog.events:
            ref_q = ref_prog.events[0][2]
    if lambda1 is None:
        if ref_q is not None:
            unit = replace(ref_src, emission=Impulse(ref_q, 0.0))
            ref_times = _window_grid(np.array([0.0, T]), dt_sample)
            ref = np.asarray(source_concentration(unit, med, rx.position, ref_times), dtype=float)
            lambda1 = background + expected_captured(
                ConcentrationSeries(ref_times, ref, rx.position, species), rx, 0.0
            )
            isi = isi_profile(unit, med, rx.position, T)
        else:
            lambda1 = background + 1.0
    if tau is None and target_pfa is None and rx.noise_model == "poisson":
        tau = ml_threshold(background, lambda1)

    rng = np.random.default_rng(seed)
    reports: list[DetectionReport] = []
    for k, lam in enumerate(window_lams):
        obs = sample_count(background + lam, rx, rng)
        reports.append(detect(obs, background, lambda1, tau, target_pfa, rx, window=k))
    decoded = [1 if r.present else 0 for r in reports]
    sent = list(frames[0].bits) if frames else None
    errors = None
    if sent is not None:
        padded = sent + [0] * (len(decoded) - len(sent))
        errors = sum(a != b for a, b in zip(decoded, padded[: len(decoded)]))
    return ScenarioResult(
        reports=reports,
        decoded_bits=decoded,
        sent_bits=sent,
        bit_errors=errors,
        window_lambdas=window_lams,
        lambda0=float(background),
        lambda1=float(lambda1),
        threshold=float(reports[0].threshold) if reports else float(tau or 0),
        isi=isi,
        timing={
            "sync_offset": float(sync_offset),
            "window_T": float(T),
            "n_windows": int(n_windows),
            "window_starts": [float(e) for e in edges[:-1]],
            "channel": channel,
            "seed": int(seed),
        },
    )


@dataclass(frozen=True)
class ISIProfile:
    tail_fraction: float
    delay_spread: float
    peak_time: float
    mean_delay: float
    horizon: float
    captured_fraction: float
    horizon_warning: bool

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def _exact_response_integral(src: SourceSpec, med: MediumParams, position) -> float:
    """Time integral of the puff at ``position`` over (0, inf)."""
    x, y, z = position
    dx, dy = x - src.origin[0], y - src.origin[1]
    q = src.emission.Q
    total = float(steady_point_source(q, med, dx, dy, z - src.height_H))
    if med.reflect_ground:
        total += float(steady_point_source(q, med, dx, dy, z + src.height_H))
    return total


def response_on_grid(src: SourceSpec, med: MediumParams, position, horizon: float, n_steps: int):
    """``(t, h)`` on a uniform grid of ``n_steps`` intervals over ``[0, horizon]``
    measured from the release; ``h(0) = 0``."""
    t = np.linspace(0.0, horizon, n_steps + 1)
    t0 = src.emission.t0
    h = np.zeros_like(t)
    h[1:] = source_concentration(src, med, position, t[1:] + t0)
    return t, h


def isi_profile(
    src: SourceSpec,
    med: MediumParams,
    position,
    T_sym: float,
    horizon: float | None = None,
    n_steps: int = 20000,
) -> ISIProfile:
    """Tail energy and delay spread of the impulse response at ``position``.

    ``tail_fraction`` is the share of the response integral arriving after
    ``T_sym``; ``delay_spread`` is the RMS width of the response. Integrals
    are trapezoidal on ``n_steps`` intervals up to ``horizon`` (default
    20 d / u for source-receiver distance ``d``). ``horizon_warning`` is set
    when the truncated integral holds less than 99 % of the exact total.
    """
    if not isinstance(src.emission, Impulse):
        raise ConfigError("isi_profile needs an Impulse source")
    if T_sym < 0:
        raise ConfigError("T_sym must be >= 0")
    position = tuple(float(v) for v in position)
    d = math.dist(position, (src.origin[0], src.origin[1], src.height_H))
    if d == 0:
        raise ConfigError("receiver at the release point: response is not integrable")
    if horizon is None:
        if med.wind_u > 0:
            horizon = 20.0 * d / med.wind_u
        else:
            horizon = 20.0 * d * d / (2.0 * med.diffusivity_K)
    t, h = response_on_grid(src, med, position, horizon, n_steps)
    total = trapezoid(h, t)
    if total <= 0:
        raise ConfigError("impulse response vanishes over the horizon")
    if T_sym <= 0:
        tail = 1.0
    elif T_sym >= horizon:
        tail = 0.0
    else:
        hT = np.interp(T_sym, t, h)
        after = t > T_sym
        tail = trapezoid(np.concatenate([[hT], h[after]]), np.concatenate([[T_sym], t[after]])) / total
        tail = min(1.0, max(0.0, float(tail)))
    mean = trapezoid(t * h, t) / total
    spread = math.sqrt(max(0.0, trapezoid((t - mean) ** 2 * h, t) / total))
    captured = total / _exact_response_integral(src, med, position)
    warn = bool(captured < 0.99)
    if warn:
        warnings.warn(
            f"response horizon {horizon:.3g} s captures only {captured:.1%} of the impulse response",
            RuntimeWarning,
            stacklevel=2,
        )
    return ISIProfile(
        tail_fraction=float(tail),
        delay_spread=float(spread),
        peak_time=float(t[int(np.argmax(h))]),
        mean_delay=float(mean),
        horizon=float(horizon),
        captured_fraction=float(captured),
        horizon_warning=warn,
    )


@dataclass(frozen=True)
class InterferenceRow:
    separation: float
    lambda_signal: float
    lambda_interferer: float
    lambda0: float
    lambda1: float
    threshold: int
    p_fa: float
    p_md: float


def window_capture(src: SourceSpec, med: MediumParams, rx: ReceiverSpec, t_start: float = 0.0,
                   n_steps: int = 4000) -> float:
    """Expected capture from one source over ``[t_start, t_start + window_T]``."""
    t = np.linspace(t_start, t_start + rx.window_T, n_steps + 1)
    c = np.asarray(source_concentration(src, med, rx.position, t), dtype=float) * np.ones_like(t)
    return rx.efficiency * rx.intake_rate * float(trapezoid(c, t))


def interference_sweep(
    src: SourceSpec,
    separations,
    med: MediumParams,
    rx: ReceiverSpec,
    background: float = 0.0,
    direction=(0.0, 1.0),
    t_start: float = 0.0,
    tau: int | None = None,
) -> list[InterferenceRow]:
    """Detection metrics for ``src`` with a same-species copy displaced by
    each separation along ``direction`` (unit vector in the ground plane).

    The interferer emits whether or not the target does, so it raises both
    hypotheses. The threshold is fixed from the interference-free pair.
    """
    norm = math.hypot(*direction)
    if norm == 0:
        raise ConfigError("direction must be non-zero")
    ux, uy = direction[0] / norm, direction[1] / norm
    lam_a = window_capture(src, med, rx, t_start)
    if tau is None:
        if lam_a <= 0:
            raise ConfigError("target source contributes nothing in the window")
        tau = ml_threshold(background, background + lam_a)
    rows = []
    for s in separations:
        other = replace(src, origin=(src.origin[0] + s * ux, src.origin[1] + s * uy))
        lam_b = window_capture(other, med, rx, t_start)
        l0 = background + lam_b
        l1 = background + lam_a + lam_b
        p_fa, p_md = poisson_tails(l0, l1, tau)
        rows.append(InterferenceRow(float(s), lam_a, lam_b, l0, l1, int(tau), p_fa, p_md))
    return rows


def mobility_track(
    track,
    emissions,
    med: MediumParams,
    position,
    times,
    height_H: float = 1.7,
    species: str = "virus",
) -> ConcentrationSeries:
    """Series at ``position`` from impulses emitted along a moving track.

    ``track`` is a list of ``(t_start, (x, y))`` legs; the source sits at a
    leg's position from its start until the next leg begins. Each emission
    ``(t0, Q)`` is a puff anchored where the source was at ``t0``.
    """
    legs = sorted(((float(t), tuple(map(float, xy))) for t, xy in track), key=lambda leg: leg[0])
    if hasattr(emissions, "impulses"):
        emissions = emissions.impulses()
    times = np.asarray(times, dtype=float)
    position = tuple(float(v) for v in position)
    total = np.zeros_like(times)
    if not legs and emissions:
        raise CoverageError("empty track cannot place emissions")
    starts = [t for t, _ in legs]
    for t0, q in emissions:
        i = int(np.searchsorted(starts, t0, side="right")) - 1
        if i < 0:
            raise CoverageError(f"emission at t={t0} precedes the track start {starts[0]}")
        src = SourceSpec(Impulse(q, t0), legs[i][1], height_H, species)
        total += np.asarray(source_concentration(src, med, position, times), dtype=float)
    return ConcentrationSeries(times, total, position, species)


def fixed_source_series(src: SourceSpec, med: MediumParams, position, times) -> ConcentrationSeries:
    """Convenience: series of a stationary source (causal superposition)."""
    out = receive_series([src], med, position, times)
    return out[src.species]
