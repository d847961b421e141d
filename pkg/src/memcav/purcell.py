"""Mode volume and Purcell enhancement of an emitter in the membrane.

Lengths: ``effective_length`` and waists in um, wavelengths in nm, mode
volumes in units of ``lambda^3`` at the emitter wavelength, lifetimes in ns,
linewidths and detunings in GHz.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from .cavity import CavityConfig, find_resonances
from .errors import DataError, DegenerateProfileError, InstabilityError
from .materials import normalize_polarization
from .tmm import FieldProfile, field_profile

PURCELL_PREFACTOR = 3.0 / (4.0 * np.pi**2)


class AntiEnhancementWarning(UserWarning):
    """Cavity lifetime longer than the free-space lifetime."""


def _positive(**kw) -> None:
    for name, v in kw.items():
        if not (np.isfinite(v) and v > 0):
            raise DataError(f"{name} must be finite and > 0, got {v}")


def _fraction(**kw) -> None:
    for name, v in kw.items():
        if not (np.isfinite(v) and 0 < v <= 1):
            raise DataError(f"{name} must lie in (0, 1], got {v}")


@dataclass(frozen=True)
class EmitterParams:
    zpl_wavelength: float = 917.0  # nm
    tau0: float = 7.3  # ns
    debye_waller: float = 0.08
    quantum_efficiency: float = 0.286
    host_index: float = 2.63

    def __post_init__(self) -> None:
        _positive(zpl_wavelength=self.zpl_wavelength, tau0=self.tau0, host_index=self.host_index)
        _fraction(debye_waller=self.debye_waller, quantum_efficiency=self.quantum_efficiency)


@dataclass(frozen=True)
class PurcellInputs:
    """Cavity-side inputs; any of ``mode_volume``, ``waist_w0``, ``effective_length`` may be None.

    When all three are given they must satisfy ``V = pi w0^2 L_eff / 4`` to 1 %.
    """

    quality_factor: float
    mode_volume: float | None = None  # lambda^3
    waist_w0: float | None = None  # um
    effective_length: float | None = None  # um
    zpl_wavelength: float = 917.0  # nm

    def __post_init__(self) -> None:
        _positive(quality_factor=self.quality_factor, zpl_wavelength=self.zpl_wavelength)
        for name in ("mode_volume", "waist_w0", "effective_length"):
            v = getattr(self, name)
            if v is not None:
                _positive(**{name: v})
        if self.mode_volume is None and self.waist_w0 is not None and self.effective_length is not None:
            object.__setattr__(
                self, "mode_volume", mode_volume(self.waist_w0, self.effective_length, self.zpl_wavelength)
            )
        elif None not in (self.mode_volume, self.waist_w0, self.effective_length):
            v = mode_volume(self.waist_w0, self.effective_length, self.zpl_wavelength)
            if abs(v / self.mode_volume - 1) > 0.01:
                raise DataError(
                    f"inconsistent inputs: w0 and L_eff give V = {v:.4g} lambda^3, "
                    f"but mode_volume = {self.mode_volume:.4g}"
                )


def effective_length(profile: FieldProfile, z_range: tuple[float, float] | None = None) -> float:
    """Energy-weighted length ``int |n E|^2 dz / max |n E|^2`` in um.

    By default the integral runs over the layered region of the profile
    (first to last interface), excluding the semi-infinite media.
    """
    z = np.asarray(profile.z, dtype=float)
    if z_range is None:
        b = profile.layer_boundaries
        z_range = (b[0], b[-1]) if len(b) > 1 else (z[0], z[-1])
    sel = (z >= z_range[0]) & (z <= z_range[1])
    if sel.sum() < 2:
        raise DegenerateProfileError("fewer than 2 samples inside the integration range")
    w = np.abs(profile.n_of_z[sel] * profile.e_of_z[sel]) ** 2
    peak = float(np.max(w))
    if not peak > 0:
        raise DegenerateProfileError("field vanishes everywhere; no effective length")
    return float(np.trapezoid(w, z[sel]) / peak) * 1e-3


def mode_volume(w0: float, L_eff: float, zpl_wavelength: float = 917.0) -> float:
    """``pi w0^2 L_eff / 4`` in units of ``lambda^3``; w0 and L_eff in um."""
    if w0 < 0 or L_eff < 0 or zpl_wavelength <= 0:
        raise DataError("mode volume inputs must be non-negative (wavelength positive)")
    lam_um = zpl_wavelength * 1e-3
    return float(np.pi * w0**2 * L_eff / 4.0 / lam_um**3)


def gaussian_waist(
    fiber_roc: float,
    air_gap: float,
    membrane_thickness: float = 0.0,
    membrane_index: float = 1.0,
    wavelength: float = 917.0,
) -> float:
    """Fundamental-mode waist (um) of a plano-concave fiber cavity with a membrane.

    The membrane on the planar mirror is folded into a reduced propagation
    length ``air_gap + d / n``; the flat-interface q transformation leaves the
    waist size unchanged inside the membrane.  Lengths in um, wavelength in nm.
    """
    _positive(membrane_index=membrane_index, wavelength=wavelength)
    if air_gap < 0 or membrane_thickness < 0:
        raise DataError("lengths must be >= 0")
    L = air_gap + membrane_thickness / membrane_index
    if not np.isfinite(fiber_roc) or fiber_roc <= L:
        raise InstabilityError(
            f"no confined mode: radius of curvature {fiber_roc} um must exceed the effective length {L:.4g} um"
        )
    lam = wavelength * 1e-3
    return float(((lam / np.pi) ** 2 * L * (fiber_roc - L)) ** 0.25)


def purcell_ideal(Q: float, V_lambda3: float, host_index: float, overlap: float = 1.0) -> float:
    """``3/(4 pi^2) Q / (V n^3)``, times an optional overlap factor in (0, 1]."""
    if Q < 0:
        raise DataError("Q must be >= 0")
    _positive(V_lambda3=V_lambda3, host_index=host_index)
    _fraction(overlap=overlap)
    return float(PURCELL_PREFACTOR * Q / (V_lambda3 * host_index**3) * overlap)


def purcell_effective(tau0: float, tau_cav: float) -> float:
    """``tau0 / tau_cav - 1``; warns when the result is negative."""
    _positive(tau0=tau0, tau_cav=tau_cav)
    c = tau0 / tau_cav - 1.0
    if c < 0:
        warnings.warn(
            f"cavity lifetime {tau_cav} ns exceeds free-space lifetime {tau0} ns (C_eff = {c:.3g})",
            AntiEnhancementWarning,
            stacklevel=2,
        )
    return float(c)


def purcell_corrected(C_eff: float, debye_waller: float, quantum_efficiency: float) -> float:
    """Ideal Purcell factor implied by ``C_eff`` once ZPL fraction and QE are divided out."""
    _fraction(debye_waller=debye_waller, quantum_efficiency=quantum_efficiency)
    return float(C_eff / (debye_waller * quantum_efficiency))


def lifetime_vs_detuning(emitter: EmitterParams, C_eff_peak: float, linewidth_fwhm: float, detuning):
    """``tau0 / (1 + C / (1 + (2 delta / kappa)^2))`` in ns; scalar or array."""
    _positive(linewidth_fwhm=linewidth_fwhm)
    if C_eff_peak < 0:
        raise DataError("C_eff_peak must be >= 0")
    d = np.asarray(detuning, dtype=float)
    tau = emitter.tau0 / (1.0 + C_eff_peak / (1.0 + (2.0 * d / linewidth_fwhm) ** 2))
    return float(tau) if d.ndim == 0 else tau


# --------------------------------------------------------------------------
# cavity-derived quantities


def contact_mode(
    cavity: CavityConfig,
    wavelength: float,
    polarization: str = "extraordinary",
    search_half_width: float | None = None,
):
    """Resonance nearest ``wavelength`` and its field profile.

    The search window defaults to one free-spectral-range estimate on each
    side.  Returns ``(Resonance, FieldProfile)``.
    """
    pol = normalize_polarization(polarization)
    if search_half_width is None:
        n_mem = 0.0 if cavity.membrane is None else np.real(cavity.membrane.medium.index(wavelength, pol))
        length = cavity.air_gap + n_mem * cavity.membrane_thickness + wavelength
        search_half_width = wavelength**2 / (2.0 * length)
    res = find_resonances(cavity, (wavelength - search_half_width, wavelength + search_half_width), pol)
    if not res:
        raise DegenerateProfileError(f"no resonance within {search_half_width:.3g} nm of {wavelength} nm")
    best = min(res, key=lambda r: (abs(r.wavelength - wavelength), r.wavelength))
    return best, field_profile(cavity.system(), best.wavelength, pol)


@dataclass(frozen=True)
class PurcellReport:
    Q: float
    V_lambda3: float
    w0_um: float | None
    L_eff_um: float | None
    C0_predicted: float
    C_eff_predicted: float
    C_eff_measured: float | None
    C0_corrected: float | None

    def to_json(self) -> str:
        d = {k: (None if v is None or not np.isfinite(v) else float(v)) for k, v in asdict(self).items()}
        return json.dumps(d, indent=2) + "\n"


def report(
    inputs: PurcellInputs,
    emitter: EmitterParams,
    tau_cavity: float | None = None,
    overlap: float = 1.0,
) -> PurcellReport:
    """Predicted vs measured enhancement for one emitter/cavity pair."""
    if inputs.mode_volume is None:
        raise DataError("mode volume is required (give it directly or via w0 and L_eff)")
    c0 = purcell_ideal(inputs.quality_factor, inputs.mode_volume, emitter.host_index, overlap)
    c_pred = c0 * emitter.debye_waller * emitter.quantum_efficiency
    c_meas = c0_corr = None
    if tau_cavity is not None:
        c_meas = purcell_effective(emitter.tau0, tau_cavity)
        c0_corr = purcell_corrected(c_meas, emitter.debye_waller, emitter.quantum_efficiency)
    return PurcellReport(
        Q=float(inputs.quality_factor),
        V_lambda3=float(inputs.mode_volume),
        w0_um=inputs.waist_w0,
        L_eff_um=inputs.effective_length,
        C0_predicted=c0,
        C_eff_predicted=c_pred,
        C_eff_measured=c_meas,
        C0_corrected=c0_corr,
    )
