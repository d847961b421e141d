"""Transfer-matrix simulation and measurement analysis for membrane fiber cavities."""
from .cavity import (
    CavityConfig,
    ModeMap,
    classify_modes,
    coupling_period,
    dispersion_map,
    find_resonances,
    finesse_from_losses,
    finesse_spectrum,
    fit_membrane_thickness,
    loss_budget,
    transmission,
)
from .config import apply_overrides, build_cavity, build_mirror, load_preset
from .errors import DataError, MemcavError, NumericalError, UsageError
from .io import ingest_csv_trace, ingest_spectrometer_map
from .materials import Layer, Medium, StackSpec, quarter_wave_stack
from .tmm import field_profile, stack_response, stopband, stopband_center

__version__ = "0.1.0"

__all__ = [
    "CavityConfig",
    "DataError",
    "Layer",
    "Medium",
    "MemcavError",
    "ModeMap",
    "NumericalError",
    "StackSpec",
    "UsageError",
    "apply_overrides",
    "build_cavity",
    "build_mirror",
    "classify_modes",
    "coupling_period",
    "dispersion_map",
    "field_profile",
    "find_resonances",
    "finesse_from_losses",
    "finesse_spectrum",
    "fit_membrane_thickness",
    "ingest_csv_trace",
    "ingest_spectrometer_map",
    "load_preset",
    "loss_budget",
    "quarter_wave_stack",
    "stack_response",
    "stopband",
    "stopband_center",
    "transmission",
]
