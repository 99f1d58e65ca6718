"""Simulation toolkit for breath-borne aerosol communication links.

Channel models (closed-form puff/plume, random-walk particles, finite-volume
grid), a sampler/biosensor/detector receiver chain, and link-level scenario
experiments.
"""

__version__ = "0.1.0"

from .dispersion import (
    Continuous,
    Impulse,
    MediumParams,
    Probe,
    Schedule,
    SourceSpec,
    field_snapshot,
    impulse_response,
    plume_concentration,
    puff_concentration,
    superpose,
    total_mass,
)
from .errors import BreathLinkError, ConfigError
from .fields import ConcentrationField, ConcentrationSeries, GridSpec
from .receiver import DetectionReport, ReceiverSpec, detect, expected_captured, roc_curve

__all__ = [
    "BreathLinkError",
    "ConcentrationField",
    "ConcentrationSeries",
    "ConfigError",
    "Continuous",
    "DetectionReport",
    "GridSpec",
    "Impulse",
    "MediumParams",
    "Probe",
    "ReceiverSpec",
    "Schedule",
    "SourceSpec",
    "detect",
    "expected_captured",
    "field_snapshot",
    "impulse_response",
    "plume_concentration",
    "puff_concentration",
    "roc_curve",
    "superpose",
    "total_mass",
]
