"""Seeded generators of measurement-shaped data.

Every generator takes an explicit ``seed`` (``None`` means noiseless where
that applies) and is a pure function of its arguments.  Defaults follow the
operating point of the V2-center membrane cavity: 917 nm emitter, 42.735 ns
laser period, 5.6/7.3 ns lifetimes.
"""
from __future__ import annotations

import numpy as np

from .analysis.models import lorentzian
from .analysis.trace import CorrelationHistogram, Trace

G2_PERIOD_NS = 42.735


def _rng(seed):
    return np.random.default_rng(seed)


def wavemeter_ramp(
    slope_ghz_per_s: float = 6.0,
    duration_s: float = 2.0,
    n: int = 201,
    offset_ghz: float = 0.0,
    noise_ghz: float = 0.0,
    seed: int | None = None,
) -> Trace:
    t = np.linspace(0.0, duration_s, n)
    y = offset_ghz + slope_ghz_per_s * t
    if noise_ghz > 0:
        y = y + _rng(seed).normal(0.0, noise_ghz, n)
    return Trace(t, y, "s", "GHz", "wavemeter")


def cavity_line_scan(
    fwhm_ghz: float = 3.44,
    scan_speed_ghz_per_s: float = 6.0,
    duration_s: float = 10.0,
    n: int = 2001,
    amplitude_v: float = 1.0,
    baseline_v: float = 0.02,
    noise_v: float = 0.0,
    seed: int | None = None,
) -> Trace:
    """Transmission vs time while the laser sweeps across one cavity line."""
    t = np.linspace(0.0, duration_s, n)
    center_s = 0.5 * duration_s
    y = baseline_v + lorentzian(t, amplitude_v, center_s, fwhm_ghz / scan_speed_ghz_per_s)
    if noise_v > 0:
        y = y + _rng(seed).normal(0.0, noise_v, n)
    return Trace(t, y, "s", "V", "cavity_scan")


def scan_comb(
    spacing: float = 100.0,
    fwhm: float = 0.0025,
    n_peaks: int = 3,
    amplitude: float = 1.0,
    points_per_fwhm: int = 20,
    span_fwhm: float = 40.0,
    coarse_points: int = 200,
    x_unit: str = "GHz",
) -> Trace:
    """Equally spaced Lorentzian comb on a non-uniform grid dense near the peaks."""
    centers = spacing * np.arange(n_peaks)
    coarse = np.linspace(-0.5 * spacing, centers[-1] + 0.5 * spacing, coarse_points)
    fine = [c + np.linspace(-span_fwhm * fwhm, span_fwhm * fwhm, int(2 * span_fwhm * points_per_fwhm) + 1) for c in centers]
    x = np.unique(np.concatenate([coarse] + fine))
    y = sum(lorentzian(x, amplitude, c, fwhm) for c in centers)
    return Trace(x, y, x_unit, "V", "scan_comb")


def lifetime_histogram(
    tau_ns: float = 7.3,
    amplitude: float = 2000.0,
    offset: float = 0.0,
    bin_ns: float = 0.1,
    t_max_ns: float = 80.0,
    seed: int | None = None,
) -> Trace:
    """Decay histogram, Poisson-sampled when ``seed`` is given."""
    t = np.arange(0.0, t_max_ns, bin_ns)
    mean = amplitude * np.exp(-t / tau_ns) + offset
    y = _rng(seed).poisson(mean).astype(float) if seed is not None else mean
    return Trace(t, y, "ns", "counts", "lifetime")


def g2_histogram(
    g2_zero: float = 0.024,
    period_ns: float = G2_PERIOD_NS,
    tau_decay_ns: float = 6.0,
    side_amplitude: float = 400.0,
    background: float = 2.0,
    n_periods: int = 6,
    bin_ns: float = 0.25,
    artifact_amplitude: float = 0.0,
    artifact_positions_ns: tuple[float, ...] = (-17.0, 17.0),
    artifact_width_ns: float = 1.5,
    seed: int | None = None,
) -> CorrelationHistogram:
    """Pulsed autocorrelation comb with optional recombination artifacts.

    Peaks are two-sided exponentials; the central one has ``g2_zero`` times
    the side amplitude.  Artifacts are Gaussians of ``artifact_amplitude``
    at ``artifact_positions_ns``.  Poisson-sampled when ``seed`` is given.
    """
    half = n_periods * period_ns
    tau = np.arange(-half, half + 0.5 * bin_ns, bin_ns)
    tau = tau - tau[np.argmin(np.abs(tau))]  # put a bin center on zero delay
    mean = np.full(tau.shape, background, dtype=float)
    for k in range(-n_periods, n_periods + 1):
        a = side_amplitude * (g2_zero if k == 0 else 1.0)
        mean += a * np.exp(-np.abs(tau - k * period_ns) / tau_decay_ns)
    for pos in artifact_positions_ns:
        mean += artifact_amplitude * np.exp(-0.5 * ((tau - pos) / artifact_width_ns) ** 2)
    counts = _rng(seed).poisson(mean).astype(float) if seed is not None else mean
    return CorrelationHistogram(tau, counts, period_ns)


def length_noise_spectrum(
    sigma_pm: float = 45.0,
    finesse: float = 10000.0,
    wavelength_nm: float = 917.0,
    sample_rate_hz: float = 20000.0,
    n_samples: int = 2**16,
    resonances_hz: tuple[float, ...] = (120.0, 480.0, 1500.0),
    seed: int | None = 0,
) -> tuple[Trace, float]:
    """One-sided ASD of side-of-fringe transmission for colored length noise.

    A length time series with exactly ``sigma_pm`` RMS (1/f floor plus
    mechanical resonances, random phases) is mapped to relative
    transmission with the half-maximum fringe slope ``2F/lambda`` and
    Fourier transformed.  Returns the spectrum (Hz -> 1/sqrt(Hz)) and the
    ground-truth RMS in pm.
    """
    rng = _rng(seed)
    f = np.fft.rfftfreq(n_samples, 1.0 / sample_rate_hz)
    shape = np.zeros_like(f)
    shape[1:] = 1.0 / np.sqrt(f[1:])
    for fr in resonances_hz:
        shape += 0.5 / (1.0 + ((f - fr) / (0.02 * fr)) ** 2)
    spec = shape * (rng.normal(size=f.size) + 1j * rng.normal(size=f.size))
    spec[0] = 0.0
    x = np.fft.irfft(spec, n_samples)
    x *= sigma_pm / np.std(x)
    rel = x * 1e-3 * 2.0 * finesse / wavelength_nm  # pm -> nm, then fringe slope
    X = np.fft.rfft(rel)
    psd = 2.0 * np.abs(X) ** 2 / (sample_rate_hz * n_samples)
    psd[0] /= 2.0
    if n_samples % 2 == 0:
        psd[-1] /= 2.0
    truth = float(np.sqrt(np.mean(x**2)))
    return Trace(f, np.sqrt(psd), "Hz", "rel_per_rthz", "noise_asd"), truth


def zpl_stack(
    centers_ghz: tuple[float, ...] = (-40.0, -15.0, 5.0, 30.0),
    fwhms_ghz: tuple[float, ...] = (4.8, 3.8, 5.5, 4.2),
    peak_kcps: tuple[float, ...] = (30.0, 12.0, 18.0, 8.0),
    slope_ghz_per_step: float = 0.5,
    n_steps: int = 201,
    start_ghz: float = -60.0,
    wavelength_nm: float = 917.0,
    pixels: int = 64,
    pixel_nm: float = 0.02,
    background_kcps: float = 0.0,
    seed: int | None = None,
) -> tuple[list[Trace], float]:
    """Spectra recorded while the cavity sweeps across several emitters.

    At step ``i`` the cavity sits at ``start_ghz + i * slope`` relative to
    the emitter ensemble; the collected rate is the sum of each emitter's
    Lorentzian evaluated there.  The rate is spread over a Gaussian line on
    the spectrometer so that the pixel sum equals the rate (kcps).  Returns
    the spectra and the frequency of step 0.
    """
    rng = _rng(seed)
    px = wavelength_nm + pixel_nm * (np.arange(pixels) - pixels // 2)
    line = np.exp(-0.5 * ((px - wavelength_nm) / (3 * pixel_nm)) ** 2)
    line /= line.sum()
    spectra = []
    for i in range(n_steps):
        f = start_ghz + i * slope_ghz_per_step
        rate = background_kcps + sum(lorentzian(f, a, c, w) for a, c, w in zip(peak_kcps, centers_ghz, fwhms_ghz))
        y = rate * line
        if seed is not None:
            y = rng.poisson(y * 1000.0) / 1000.0
        spectra.append(Trace(px, y, "nm", "kcps", f"step{i}"))
    return spectra, start_ghz


def spectrometer_frames(mode_map, resolution_nm: float = 0.05, peak_counts: float = 1000.0, background: float = 5.0):
    """Frames ``(frame_index, wavelength_nm, counts)`` imaging every branch point.

    Frame ``i`` corresponds to ``mode_map.gap_values[i]``; each resonance
    appears as a Gaussian of width ``resolution_nm`` on the map's
    wavelength grid.
    """
    wl = np.asarray(mode_map.wavelengths)
    rows = []
    for i, g in enumerate(mode_map.gap_values):
        counts = np.full(wl.shape, background, dtype=float)
        for b in mode_map.branches:
            hit = np.flatnonzero(np.isclose(b.gap, g))
            for j in hit:
                counts += peak_counts * np.exp(-0.5 * ((wl - b.wavelength[j]) / resolution_nm) ** 2)
        rows.extend((i, float(x), float(c)) for x, c in zip(wl, counts))
    return rows
