"""Trace-level fitting operations built on the curve models."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.signal import find_peaks
from scipy.stats import linregress

from ..errors import DataError, InsufficientDataError
from ._lsq import FitResult, Param
from .models import DEFAULT_G2_EXCLUSION, ExponentialDecay, LorentzianModel, PulsedG2Model
from .trace import CorrelationHistogram, Trace


def fit_lorentzian(trace: Trace, n_peaks: int = 1, init=None, exclusion=()) -> FitResult:
    """Sum of Lorentzians plus baseline; peaks sorted by center."""
    model = LorentzianModel(n_peaks=n_peaks, init=init, exclusion=exclusion).fit(trace.x, trace.y)
    return replace(model.result_, metadata=dict(model.result_.metadata, x_unit=trace.x_unit))


def calibrate_scan_slope(trace: Trace) -> FitResult:
    """Ordinary least-squares slope of a wavemeter ramp (e.g. GHz per s)."""
    if len(trace) < 2:
        raise InsufficientDataError("slope calibration needs >= 2 points")
    x, y = trace.x, trace.y
    if np.ptp(x) == 0:
        raise DataError("degenerate abscissa: all x equal")
    fit = linregress(x, y)
    resid = y - (fit.intercept + fit.slope * x)
    if len(x) > 2:
        s_slope, s_int = float(fit.stderr), float(fit.intercept_stderr)
    else:
        s_slope = s_int = float("inf")
    return FitResult(
        model="linear",
        params={"slope": Param(float(fit.slope), s_slope), "intercept": Param(float(fit.intercept), s_int)},
        residual_rms=float(np.sqrt(np.mean(resid**2))),
        converged=True,
        n_iterations=1,
        metadata={"x_unit": trace.x_unit, "y_unit": trace.y_unit, "slope_unit": f"{trace.y_unit}/{trace.x_unit}"},
    )


def _local_peak_fits(trace: Trace, prominence: float, half_window: float | None):
    x, y = trace.x, trace.y
    span = np.ptp(y)
    if span == 0:
        return []
    peaks, _ = find_peaks(y, prominence=prominence * span)
    fits = []
    for i, p in enumerate(peaks):
        # local window: up to halfway to the neighbouring peaks
        lo = x[peaks[i - 1]] if i > 0 else x[0]
        hi = x[peaks[i + 1]] if i + 1 < len(peaks) else x[-1]
        a, b = 0.5 * (lo + x[p]), 0.5 * (hi + x[p])
        if half_window is not None:
            a, b = max(a, x[p] - half_window), min(b, x[p] + half_window)
        sel = (x >= a) & (x <= b)
        if sel.sum() < 9:
            continue
        m = LorentzianModel(1).fit(x[sel], y[sel])
        fits.append(m.result_)
    return fits


def finesse_from_scan(trace: Trace, prominence: float = 0.3, half_window: float | None = None) -> FitResult:
    """Finesse = mean adjacent-peak spacing / mean FWHM over a multi-FSR scan.

    Peaks more prominent than ``prominence`` x the trace range are fitted
    individually with a Lorentzian.  The spacing error is the standard error
    of the spacings (or the fitted center errors for a single spacing); the
    width error combines the scatter and the fit errors.
    """
    fits = [f for f in _local_peak_fits(trace, prominence, half_window) if f.converged]
    if len(fits) < 2:
        raise InsufficientDataError(f"finesse needs >= 2 fitted peaks, found {len(fits)}")
    centers = np.array([f["center_0"] for f in fits])
    c_sig = np.array([f.sigma("center_0") for f in fits])
    widths = np.array([f["fwhm_0"] for f in fits])
    w_sig = np.array([f.sigma("fwhm_0") for f in fits])
    spacings = np.diff(centers)
    spacing = float(np.mean(spacings))
    fwhm = float(np.mean(widths))
    n_s, n_w = len(spacings), len(widths)
    s_fit = float(np.sqrt(c_sig[0] ** 2 + c_sig[-1] ** 2) / n_s)
    s_spacing = float(np.hypot(np.std(spacings, ddof=1) / np.sqrt(n_s) if n_s > 1 else 0.0, s_fit))
    s_fwhm = float(np.hypot(np.std(widths, ddof=1) / np.sqrt(n_w), np.sqrt(np.sum(w_sig**2)) / n_w))
    F = spacing / fwhm
    s_F = F * float(np.hypot(s_spacing / spacing, s_fwhm / fwhm))
    return FitResult(
        model="finesse_from_scan",
        params={
            "finesse": Param(F, s_F),
            "spacing": Param(spacing, s_spacing),
            "fwhm": Param(fwhm, s_fwhm),
        },
        residual_rms=float(np.sqrt(np.mean([f.residual_rms**2 for f in fits]))),
        converged=True,
        n_iterations=int(sum(f.n_iterations for f in fits)),
        metadata={"n_peaks": len(fits), "centers": centers.tolist(), "x_unit": trace.x_unit},
    )


@dataclass(frozen=True)
class ZplDistribution:
    spectrum: Trace  # relative frequency (GHz) -> integrated counts
    fit: FitResult


def integrate_spectra(spectra: Sequence[Trace], window: tuple[float, float] | None = None) -> np.ndarray:
    """Sum of each spectrum's counts over ``window`` (its x units)."""
    out = []
    for s in spectra:
        sel = np.ones(len(s), dtype=bool) if window is None else (s.x >= window[0]) & (s.x <= window[1])
        out.append(float(np.sum(s.y[sel])))
    return np.array(out)


def zpl_frequency_distribution(
    spectra_stack: Sequence[Trace],
    local_dispersion_slope: float,
    n_peaks: int | None = None,
    window: tuple[float, float] | None = None,
    max_peaks: int = 8,
    residual_threshold: float = 0.02,
) -> ZplDistribution:
    """Integrated emission vs cavity detuning, fitted with Lorentzians.

    Spectrum ``i`` of the stack is integrated over ``window`` and placed at
    relative frequency ``i * local_dispersion_slope`` (GHz per step).  With
    ``n_peaks`` unset, the smallest count whose residual RMS falls below
    ``residual_threshold`` x the peak ordinate is chosen (up to
    ``max_peaks``).
    """
    if not np.isfinite(local_dispersion_slope) or local_dispersion_slope == 0:
        raise DataError("local dispersion slope must be finite and non-zero")
    if len(spectra_stack) < 9:
        raise InsufficientDataError("need >= 9 spectra in the stack")
    counts = integrate_spectra(spectra_stack, window)
    freq = np.arange(len(counts)) * float(local_dispersion_slope)
    if local_dispersion_slope < 0:
        freq, counts = freq[::-1], counts[::-1]
    spec = Trace(freq, counts, "GHz", spectra_stack[0].y_unit, "zpl_distribution")
    if n_peaks is not None:
        return ZplDistribution(spec, fit_lorentzian(spec, n_peaks))
    best = None
    height = float(np.max(counts) - np.min(counts)) or 1.0
    for n in range(1, max_peaks + 1):
        if len(spec) < 9 * n:
            break
        fit = fit_lorentzian(spec, n)
        if fit.converged and (best is None or fit.residual_rms < best.residual_rms):
            best = fit
        if fit.converged and fit.residual_rms <= residual_threshold * height:
            break
    if best is None:
        raise InsufficientDataError("no converged multi-Lorentzian fit")
    return ZplDistribution(spec, replace(best, metadata=dict(best.metadata, selected_n_peaks=(len(best.params) - 1) // 3)))


def fit_lifetime(histogram: Trace, t_start: float = 0.0, exclusion=()) -> FitResult:
    """Monoexponential decay with constant offset for ``t >= t_start`` (ns)."""
    model = ExponentialDecay(t_start=t_start, exclusion=exclusion).fit(histogram.x, histogram.y)
    return model.result_


def fit_g2_pulsed(
    hist: CorrelationHistogram,
    exclusion=DEFAULT_G2_EXCLUSION,
    fit_period: bool = True,
) -> FitResult:
    """Pulsed autocorrelation: ``g2_zero``, ``tau_decay`` and ``peak_period``."""
    model = PulsedG2Model(hist.repetition_period, exclusion=exclusion, fit_period=fit_period)
    return model.fit(hist.tau_bins, hist.coincidences).result_


@dataclass(frozen=True)
class NoiseResult:
    sigma_rms_pm: float
    frequency: np.ndarray  # Hz
    cumulative_pm: np.ndarray

    def to_trace(self) -> Trace:
        return Trace(self.frequency, self.cumulative_pm, "Hz", "pm", "cumulative_rms")


def noise_rms_from_fft(
    amplitude_spectrum: Trace,
    finesse: float,
    wavelength: float,
    f_max: float | None = None,
    t_max: float = 1.0,
) -> NoiseResult:
    """Side-of-fringe length noise.

    ``amplitude_spectrum`` is the one-sided amplitude spectral density of the
    transmitted signal (per sqrt(Hz)), divided by ``t_max`` to make it
    relative.  At half maximum of a Lorentzian fringe a relative change
    ``dT/T_max`` maps to ``dL = dT/T_max * lambda / (2 F)``.  The cumulative
    RMS sums the length power density times bin widths from
    ``np.gradient`` up to ``f_max``; the result is in pm.
    """
    if not finesse > 0:
        raise DataError("finesse must be > 0")
    if not wavelength > 0 or not t_max > 0:
        raise DataError("wavelength and t_max must be > 0")
    f = amplitude_spectrum.x
    if np.any(f < 0):
        raise DataError("spectrum must be one-sided (f >= 0)")
    if f_max is not None:
        sel = f <= f_max
        f = f[sel]
        asd = amplitude_spectrum.y[sel]
    else:
        asd = amplitude_spectrum.y
    if len(f) == 0:
        return NoiseResult(0.0, f, np.array([]))
    df = np.gradient(f) if len(f) > 1 else np.array([1.0])
    scale_pm = wavelength / (2.0 * finesse) * 1e3
    length_psd = (asd / t_max * scale_pm) ** 2
    cumulative = np.sqrt(np.cumsum(length_psd * df))
    return NoiseResult(float(cumulative[-1]), f, cumulative)


def aggregate_line_series(fits: Sequence[FitResult], param: str = "fwhm_0") -> tuple[float, float]:
    """Mean and population standard deviation of ``param`` over converged fits."""
    vals = [f[param] for f in fits if f.converged]
    if not vals:
        raise InsufficientDataError("no converged fits to aggregate")
    return float(np.mean(vals)), float(np.std(vals))
