"""Receiver chain: air sampler, biosensor measurement, threshold detector.

The sampler draws air at ``intake_rate`` and keeps a fraction ``efficiency``
of the aerosols it sees; the expected capture over a window is

    lambda = efficiency * intake_rate * integral(C(t) dt over the window)

The measurement is either a Poisson count with mean ``lambda`` or a real
sensor reading ``gain * lambda + N(0, noise_sigma^2)``. Detection declares
"present" when the measurement reaches the threshold ``tau``; for Poisson
counts the likelihood ratio is monotone in the count, so this is the
Neyman-Pearson test.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid
from scipy.special import erfc, erfcinv, pdtr, pdtrc

from .errors import ConfigError, CoverageError, HypothesesError
from .fields import ConcentrationSeries

NOISE_MODELS = ("poisson", "gaussian")


@dataclass(frozen=True)
class ReceiverSpec:
    position: tuple = (1.0, 0.0, 1.7)
    intake_rate: float = 1e-3
    window_T: float = 1.0
    efficiency: float = 0.85
    gain: float = 1.0
    noise_model: str = "poisson"
    noise_sigma: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "position", tuple(float(v) for v in self.position))
        if len(self.position) != 3:
            raise ConfigError("receiver position is (x, y, z)")
        if not 0.0 <= self.efficiency <= 1.0:
            raise ConfigError("sampler efficiency must lie in [0, 1]")
        if not self.intake_rate > 0:
            raise ConfigError("intake_rate must be > 0")
        if not self.window_T > 0:
            raise ConfigError("window_T must be > 0")
        if self.noise_model not in NOISE_MODELS:
            raise ConfigError(f"noise_model must be one of {NOISE_MODELS}")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be >= 0")


@dataclass(frozen=True)
class DetectionReport:
    observation: float
    threshold: float
    decision: str
    p_fa: float
    p_md: float
    lambda0: float
    lambda1: float
    window: int | None = None

    @property
    def present(self) -> bool:
        return self.decision == "present"

    def as_dict(self) -> dict:
        return {
            "window": self.window,
            "observation": self.observation,
            "threshold": self.threshold,
            "decision": self.decision,
            "p_fa": self.p_fa,
            "p_md": self.p_md,
            "lambda0": self.lambda0,
            "lambda1": self.lambda1,
        }


def _integrate_window(series: ConcentrationSeries, t0: float, t1: float) -> float:
    t, c = series.times, series.values
    if t.size == 0 or t0 < t[0] - 1e-12 or t1 > t[-1] + 1e-12:
        raise CoverageError(
            f"window [{t0}, {t1}] not covered by series span "
            f"[{t[0] if t.size else 'nan'}, {t[-1] if t.size else 'nan'}]"
        )
    if np.any(c < 0):
        raise ConfigError("concentration series must be non-negative")
    t0 = max(t0, t[0])
    t1 = min(t1, t[-1])
    if t1 <= t0:
        return 0.0
    inner = (t > t0) & (t < t1)
    tt = np.concatenate([[t0], t[inner], [t1]])
    cc = np.concatenate([[np.interp(t0, t, c)], c[inner], [np.interp(t1, t, c)]])
    return float(trapezoid(cc, tt))


def expected_captured(series: ConcentrationSeries, rx: ReceiverSpec, t_start: float = 0.0) -> float:
    """Mean number of aerosols captured in ``[t_start, t_start + window_T]``.

    The integral is trapezoidal on the series samples, with linear
    interpolation at window edges that fall between samples.
    """
    integral = _integrate_window(series, t_start, t_start + rx.window_T)
    return rx.efficiency * rx.intake_rate * integral


def sample_count(lam: float, rx: ReceiverSpec | None = None, rng=None, size=None):
    """Draw a measurement for expected capture ``lam``.

    ``rng`` may be a ``numpy.random.Generator`` or a seed.
    """
    if not (math.isfinite(lam) and lam >= 0):
        raise ConfigError("expected count must be finite and >= 0")
    rx = rx or ReceiverSpec()
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    if rx.noise_model == "poisson":
        return gen.poisson(lam, size=size)
    mean = lam * rx.gain
    if rx.noise_sigma == 0:
        return mean if size is None else np.full(size, mean)
    return mean + gen.normal(0.0, rx.noise_sigma, size=size)


def poisson_tails(lambda0: float, lambda1: float, tau: int) -> tuple[float, float]:
    """``(P(N0 >= tau), P(N1 < tau))`` for Poisson means ``lambda0``, ``lambda1``."""
    if tau <= 0:
        return 1.0, 0.0
    # pdtrc(k, m) = P(N > k), pdtr(k, m) = P(N <= k)
    p_fa = float(pdtrc(tau - 1, lambda0)) if lambda0 > 0 else 0.0
    p_md = float(pdtr(tau - 1, lambda1))
    return p_fa, p_md


def gaussian_tails(mu0: float, mu1: float, sigma: float, tau: float) -> tuple[float, float]:
    if sigma == 0:
        return float(mu0 >= tau), float(mu1 < tau)
    r2 = sigma * math.sqrt(2)
    return 0.5 * float(erfc((tau - mu0) / r2)), 0.5 * float(erfc((mu1 - tau) / r2))


def ml_threshold(lambda0: float, lambda1: float) -> int:
    """Smallest count at which signal-present is at least as likely as background."""
    if lambda0 == 0:
        return 1
    return max(1, math.ceil((lambda1 - lambda0) / math.log(lambda1 / lambda0)))


def np_threshold(lambda0: float, target_pfa: float) -> int:
    """Smallest integer threshold whose false-alarm probability is <= ``target_pfa``."""
    if not 0 < target_pfa <= 1:
        raise ConfigError("target p_fa must lie in (0, 1]")
    tau = 0
    while poisson_tails(lambda0, lambda0 + 1, tau)[0] > target_pfa:
        tau += 1
    return tau


def _check_hypotheses(lambda0, lambda1):
    if not (math.isfinite(lambda0) and math.isfinite(lambda1)) or lambda0 < 0:
        raise ConfigError("hypothesis means must be finite with lambda0 >= 0")
    if lambda1 <= lambda0:
        raise HypothesesError(
            f"degenerate hypotheses: lambda1={lambda1} must exceed lambda0={lambda0}"
        )


def detect(
    observation: float,
    lambda0: float,
    lambda1: float,
    tau: float | None = None,
    target_pfa: float | None = None,
    rx: ReceiverSpec | None = None,
    window: int | None = None,
) -> DetectionReport:
    """Threshold test of ``observation`` against background ``lambda0`` and
    signal-present ``lambda1`` (expected captured counts).

    The threshold is ``tau`` if given, else the smallest one meeting
    ``target_pfa``, else the maximum-likelihood threshold. Under the
    Gaussian model the means are scaled by ``rx.gain``.
    """
    _check_hypotheses(lambda0, lambda1)
    rx = rx or ReceiverSpec()
    if rx.noise_model == "poisson":
        if tau is None:
            tau = np_threshold(lambda0, target_pfa) if target_pfa is not None else ml_threshold(lambda0, lambda1)
        p_fa, p_md = poisson_tails(lambda0, lambda1, math.ceil(tau))
    else:
        mu0, mu1 = lambda0 * rx.gain, lambda1 * rx.gain
        if tau is None:
            if target_pfa is not None:
                tau = mu0 + rx.noise_sigma * math.sqrt(2) * float(erfcinv(2 * target_pfa))
            else:
                tau = 0.5 * (mu0 + mu1)
        p_fa, p_md = gaussian_tails(mu0, mu1, rx.noise_sigma, tau)
    decision = "present" if observation >= tau else "absent"
    return DetectionReport(float(observation), float(tau), decision, p_fa, p_md,
                           float(lambda0), float(lambda1), window)


def roc_curve(lambda0: float, lambda1: float, taus=None) -> list[tuple[float, float]]:
    """``(p_fa, p_detect)`` for each integer threshold in ``taus``.

    The default sweep runs from 0 (the (1, 1) corner) until both tails
    fall below 1e-12.
    """
    _check_hypotheses(lambda0, lambda1)
    if taus is None:
        tau, taus = 0, []
        while True:
            taus.append(tau)
            p_fa, p_md = poisson_tails(lambda0, lambda1, tau)
            if p_fa < 1e-12 and 1 - p_md < 1e-12:
                break
            tau += 1
    curve = []
    for tau in taus:
        tau = int(tau)
        p_fa, _ = poisson_tails(lambda0, lambda1, tau)
        # upper tail taken directly; 1 - p_md cancels once p_d is tiny
        p_d = float(pdtrc(tau - 1, lambda1)) if tau > 0 else 1.0
        curve.append((p_fa, p_d))
    return curve


@dataclass(frozen=True)
class Hypotheses:
    lambda0: float
    lambda1: float
    tau: float | None = None
    target_pfa: float | None = None


@dataclass
class MultiSpeciesResult:
    reports: dict = field(default_factory=dict)
    errors: dict = field(default_factory=dict)


def multi_species_detect(observations: dict, hypotheses: dict, rx: ReceiverSpec | None = None) -> MultiSpeciesResult:
    """Decide each species on its own.

    Mismatched species keys raise ``ConfigError``. A species whose own
    hypotheses are invalid lands in ``errors`` while the rest are reported.
    """
    if set(observations) != set(hypotheses):
        unknown = sorted(set(observations) ^ set(hypotheses))
        raise ConfigError(f"species keys do not match between observations and hypotheses: {unknown}")
    result = MultiSpeciesResult()
    for sp, obs in observations.items():
        h = hypotheses[sp]
        try:
            result.reports[sp] = detect(obs, h.lambda0, h.lambda1, h.tau, h.target_pfa, rx)
        except ConfigError as exc:
            result.errors[sp] = exc
    return result
