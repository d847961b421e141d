"""Fitting of measured traces: cavity lines, lifetimes, pulsed g2, length noise."""
from ._lsq import FitResult, Param, least_squares_fit
from .fitting import (
    NoiseResult,
    ZplDistribution,
    aggregate_line_series,
    calibrate_scan_slope,
    finesse_from_scan,
    fit_g2_pulsed,
    fit_lifetime,
    fit_lorentzian,
    integrate_spectra,
    noise_rms_from_fft,
    zpl_frequency_distribution,
)
from .models import DEFAULT_G2_EXCLUSION, ExponentialDecay, LorentzianModel, PulsedG2Model, lorentzian
from .trace import UNITS, CorrelationHistogram, Trace, canonical_unit, unit_from_column

__all__ = [
    "DEFAULT_G2_EXCLUSION",
    "UNITS",
    "CorrelationHistogram",
    "ExponentialDecay",
    "FitResult",
    "LorentzianModel",
    "NoiseResult",
    "Param",
    "PulsedG2Model",
    "Trace",
    "ZplDistribution",
    "aggregate_line_series",
    "calibrate_scan_slope",
    "canonical_unit",
    "finesse_from_scan",
    "fit_g2_pulsed",
    "fit_lifetime",
    "fit_lorentzian",
    "integrate_spectra",
    "least_squares_fit",
    "lorentzian",
    "noise_rms_from_fft",
    "unit_from_column",
    "zpl_frequency_distribution",
]
