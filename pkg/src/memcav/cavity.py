"""Fiber mirror + air gap + membrane + planar mirror.

Geometry, seen from the fiber: fiber glass | fiber coating | air gap |
membrane | planar coating | planar substrate.  Mirror stacks are stored in
their standalone orientation (``ambient`` = the cavity side), so a preset
mirror can be characterized on its own and dropped into a cavity unchanged.
"""
from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import brentq, least_squares

from .analysis._lsq import FitResult, Param, covariance
from .errors import DataError, InsufficientDataError
from .materials import (
    POLARIZATIONS,
    VACUUM,
    Layer,
    Medium,
    StackSpec,
    normalize_polarization,
)
from .tmm import TWO_PI, _fmt, _product, _solve, field_profile, power_coefficients

log = logging.getLogger(__name__)

AIR_LIKE_MAX = 0.35
DIELECTRIC_LIKE_MIN = 0.65
CHARACTERS = ("air_like", "dielectric_like", "mixed")


# --------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class CavityConfig:
    """A tunable membrane cavity.

    ``membrane`` may be ``None`` for a bare two-mirror cavity.  ``air_gap`` is
    the fiber-mirror-to-membrane distance in nm.
    """

    fiber_mirror: StackSpec
    air_gap: float
    membrane: Layer | None
    planar_mirror: StackSpec
    excess_loss_ppm: float = 0.0
    gap_medium: Medium = VACUUM

    def __post_init__(self) -> None:
        gap = float(self.air_gap)
        if not np.isfinite(gap) or gap < 0:
            raise DataError(f"air gap must be >= 0 nm, got {self.air_gap}")
        object.__setattr__(self, "air_gap", gap)
        if self.membrane is not None and self.membrane.thickness <= 0:
            object.__setattr__(self, "membrane", None)
        if self.excess_loss_ppm < 0:
            raise DataError("excess loss must be >= 0 ppm")

    @property
    def membrane_thickness(self) -> float:
        return 0.0 if self.membrane is None else self.membrane.thickness

    def with_gap(self, gap: float) -> CavityConfig:
        return replace(self, air_gap=float(gap))

    def with_membrane_thickness(self, thickness: float) -> CavityConfig:
        if self.membrane is None:
            raise DataError("cavity has no membrane")
        return replace(self, membrane=Layer(self.membrane.medium, thickness))

    def without_membrane(self) -> CavityConfig:
        return replace(self, membrane=None)

    def _inner_layers(self, gap: float) -> list[Layer]:
        layers = list(reversed(self.fiber_mirror.layers))
        if gap > 0:
            layers.append(Layer(self.gap_medium, gap))
        if self.membrane is not None:
            layers.append(self.membrane)
        layers.extend(self.planar_mirror.layers)
        return layers

    def system(self, gap: float | None = None) -> StackSpec:
        """Flattened stack, illuminated from the fiber side."""
        gap = self.air_gap if gap is None else float(gap)
        return StackSpec(self.fiber_mirror.substrate, tuple(self._inner_layers(gap)), self.planar_mirror.substrate)

    def dressed_planar(self) -> StackSpec:
        """Membrane plus planar coating, seen from the gap."""
        layers = ([self.membrane] if self.membrane is not None else []) + list(self.planar_mirror.layers)
        return StackSpec(self.gap_medium, tuple(layers), self.planar_mirror.substrate)

    def fiber_from_gap(self) -> StackSpec:
        return StackSpec(self.gap_medium, self.fiber_mirror.layers, self.fiber_mirror.substrate)

    def membrane_span(self, gap: float | None = None) -> tuple[float, float] | None:
        """``(z_top, z_bottom)`` of the membrane in :meth:`system` coordinates."""
        if self.membrane is None:
            return None
        gap = self.air_gap if gap is None else float(gap)
        z0 = self.fiber_mirror.total_thickness + gap
        return z0, z0 + self.membrane.thickness

    def gap_span(self, gap: float | None = None) -> tuple[float, float]:
        gap = self.air_gap if gap is None else float(gap)
        z0 = self.fiber_mirror.total_thickness
        return z0, z0 + gap


def assemble(
    fiber: StackSpec,
    gap: float,
    membrane: Layer | None,
    planar: StackSpec,
    excess_loss_ppm: float = 0.0,
) -> CavityConfig:
    return CavityConfig(fiber, gap, membrane, planar, excess_loss_ppm)


# --------------------------------------------------------------------------
# vectorized transmission


def _system_arrays(cav: CavityConfig, pol: str, wl, gap, membrane_thickness=None):
    """Index/thickness lists for the flattened system; ``gap`` may be an array."""
    indices, thick = [], []
    for layer in reversed(cav.fiber_mirror.layers):
        indices.append(layer.medium.index(wl, pol))
        thick.append(layer.thickness)
    indices.append(cav.gap_medium.index(wl, pol))
    thick.append(gap)
    if cav.membrane is not None:
        indices.append(cav.membrane.medium.index(wl, pol))
        thick.append(cav.membrane.thickness if membrane_thickness is None else membrane_thickness)
    for layer in cav.planar_mirror.layers:
        indices.append(layer.medium.index(wl, pol))
        thick.append(layer.thickness)
    n0 = cav.fiber_mirror.substrate.index(wl, pol)
    ns = cav.planar_mirror.substrate.index(wl, pol)
    return indices, thick, n0, ns


def transmission(cav: CavityConfig, wavelength, polarization: str = "ordinary", gap=None) -> np.ndarray:
    """System transmittance; ``wavelength`` and ``gap`` broadcast together."""
    pol = normalize_polarization(polarization)
    wl = np.asarray(wavelength, dtype=float)
    gap = cav.air_gap if gap is None else np.asarray(gap, dtype=float)
    indices, thick, n0, ns = _system_arrays(cav, pol, wl, gap)
    r, t = _solve(*_product(indices, thick, wl), n0, ns)
    return power_coefficients(r, t, n0, ns)[1]


def _stack_coefficients(stack: StackSpec, wl, pol, thickness_override: dict | None = None):
    indices = [layer.medium.index(wl, pol) for layer in stack.layers]
    thick = [layer.thickness for layer in stack.layers]
    for j, d in (thickness_override or {}).items():
        thick[j] = d
    n0 = stack.ambient.index(wl, pol)
    ns = stack.substrate.index(wl, pol)
    r, t = _solve(*_product(indices, thick, wl), n0, ns)
    return r, t, n0, ns


def mirror_transmissions(cav: CavityConfig, wavelength, polarization: str = "ordinary"):
    """``(T_fiber, T_planar)`` with the planar mirror dressed by the membrane."""
    pol = normalize_polarization(polarization)
    wl = np.asarray(wavelength, dtype=float)
    out = []
    for stack in (cav.fiber_from_gap(), cav.dressed_planar()):
        r, t, n0, ns = _stack_coefficients(stack, wl, pol)
        out.append(power_coefficients(r, t, n0, ns)[1])
    return out[0], out[1]


# --------------------------------------------------------------------------
# finesse


def finesse_from_losses(T1_ppm: float, T2_ppm: float, extra_loss_ppm: float = 0.0) -> float:
    """Low-loss finesse ``2 pi / (T1 + T2 + L)`` with all terms in ppm."""
    terms = np.array([T1_ppm, T2_ppm, extra_loss_ppm], dtype=float)
    if np.any(terms < 0) or not np.all(np.isfinite(terms)):
        raise DataError("losses must be finite and >= 0 ppm")
    total = terms.sum()
    if total == 0:
        raise ZeroDivisionError("zero total round-trip loss gives infinite finesse")
    return float(TWO_PI / (total * 1e-6))


@dataclass(frozen=True)
class FinesseSpectrum:
    wavelength: np.ndarray
    finesse: np.ndarray
    t_fiber: np.ndarray
    t_planar: np.ndarray
    excess_loss_ppm: float
    polarization: str

    def local_maxima(self) -> np.ndarray:
        """Wavelengths of interior local maxima of the finesse curve."""
        return self.wavelength[_interior_maxima(self.finesse)]

    def at(self, wavelength: float) -> float:
        return float(np.interp(wavelength, self.wavelength, self.finesse))


def _interior_maxima(y: np.ndarray) -> np.ndarray:
    y = np.asarray(y)
    if len(y) < 3:
        return np.array([], dtype=int)
    return np.flatnonzero((y[1:-1] > y[:-2]) & (y[1:-1] >= y[2:])) + 1


def finesse_spectrum(
    cavity: CavityConfig,
    wavelengths,
    polarization: str = "ordinary",
    threads: int | None = None,
) -> FinesseSpectrum:
    """Transmission-limited finesse vs wavelength, plus the lumped excess loss."""
    pol = normalize_polarization(polarization)
    wl = np.asarray(wavelengths, dtype=float)
    if wl.ndim != 1 or len(wl) < 1 or np.any(np.diff(wl) <= 0):
        raise DataError("wavelength grid must be 1-D and strictly increasing")
    chunks = _chunks(len(wl), threads)

    def work(sl):
        return mirror_transmissions(cavity, wl[sl], pol)

    parts = _map(work, chunks, threads)
    t1 = np.concatenate([p[0] for p in parts])
    t2 = np.concatenate([p[1] for p in parts])
    total = t1 + t2 + cavity.excess_loss_ppm * 1e-6
    return FinesseSpectrum(wl, TWO_PI / total, t1, t2, float(cavity.excess_loss_ppm), pol)


def write_finesse_csv(spectra: Sequence[FinesseSpectrum], path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["wavelength_nm", "polarization", "finesse", "T_fiber_ppm", "T_planar_ppm"])
        for s in spectra:
            for x, f, a, b in zip(s.wavelength, s.finesse, s.t_fiber, s.t_planar):
                w.writerow([_fmt(x), s.polarization, _fmt(f), _fmt(a * 1e6), _fmt(b * 1e6)])
    return path


@dataclass(frozen=True)
class LossBudget:
    wavelength: float
    polarization: str
    T1_ppm: float
    T2_ppm: float
    measured_finesse: float
    inferred_extra_loss_ppm: float

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def loss_budget(
    measured_finesse: float,
    cavity: CavityConfig,
    wavelength: float,
    polarization: str = "extraordinary",
    tolerance_ppm: float = 1.0,
) -> LossBudget:
    """Excess round-trip loss implied by a measured finesse."""
    if not measured_finesse > 0:
        raise DataError("measured finesse must be > 0")
    pol = normalize_polarization(polarization)
    t1, t2 = mirror_transmissions(cavity, float(wavelength), pol)
    t1_ppm, t2_ppm = float(t1) * 1e6, float(t2) * 1e6
    extra = TWO_PI / measured_finesse * 1e6 - t1_ppm - t2_ppm
    if extra < -tolerance_ppm:
        log.warning(
            "negative excess loss %.3g ppm at %.6g nm: model mirror transmissions overestimate the losses",
            extra,
            wavelength,
        )
    return LossBudget(float(wavelength), pol, t1_ppm, t2_ppm, float(measured_finesse), extra)


# --------------------------------------------------------------------------
# resonances


@dataclass(frozen=True)
class Resonance:
    wavelength: float
    fwhm: float
    t_peak: float
    polarization: str

    @property
    def quality_factor(self) -> float:
        return self.wavelength / self.fwhm if self.fwhm > 0 else float("inf")


def _optical_length(cav: CavityConfig, pol: str, wl: float, gap: float) -> float:
    """Generous round-trip length estimate (nm); over-estimating only refines the grid."""
    mem = 0.0
    if cav.membrane is not None:
        mem = float(np.real(cav.membrane.medium.index(wl, pol))) * cav.membrane.thickness
    return gap + mem + wl


def _scan_step(cav: CavityConfig, pol: str, lo: float, hi: float, gap_max: float, points_per_fsr: int) -> float:
    fsr = lo**2 / (2.0 * _optical_length(cav, pol, hi, gap_max))
    return fsr / points_per_fsr


_INV_PHI = (np.sqrt(5.0) - 1.0) / 2.0


def _golden_max(f, a, b, xtol):
    """Vectorized golden-section maximization on brackets ``[a, b]``."""
    a = np.array(a, dtype=float)
    b = np.array(b, dtype=float)
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while a.size and np.max(b - a) > xtol:
        left = fc > fd
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        keep = np.where(left, c, d)
        fkeep = np.where(left, fc, fd)
        new = np.where(left, b - _INV_PHI * (b - a), a + _INV_PHI * (b - a))
        fnew = f(new)
        c = np.where(left, new, keep)
        fc = np.where(left, fnew, fkeep)
        d = np.where(left, keep, new)
        fd = np.where(left, fkeep, fnew)
    return 0.5 * (a + b)


def _peaks_on_grid(cav, pol, gaps, grid, xtol, threads=None):
    """Refined resonance wavelengths for each gap; returns (T matrix, list of arrays)."""
    gaps = np.asarray(gaps, dtype=float)
    chunks = _chunks(len(gaps), threads)

    def work(sl):
        return transmission(cav, grid[None, :], pol, gap=gaps[sl, None])

    T = np.concatenate(_map(work, chunks, threads), axis=0)
    inner = (T[:, 1:-1] > T[:, :-2]) & (T[:, 1:-1] >= T[:, 2:])
    gi, wi = np.nonzero(inner)
    wi = wi + 1
    if gi.size:
        g_of = gaps[gi]
        peaks = _golden_max(
            lambda x: transmission(cav, x, pol, gap=g_of),
            grid[wi - 1],
            grid[wi + 1],
            xtol,
        )
    else:
        peaks = np.array([])
    per_gap = [np.sort(peaks[gi == k]) for k in range(len(gaps))]
    return T, per_gap


def _half_max_crossing(f, x0, level, direction, h0):
    h = h0
    for _ in range(80):
        if f(x0 + direction * h) < level:
            break
        h *= 2.0
    else:
        return None
    lo, hi = (x0, x0 + h) if direction > 0 else (x0 - h, x0)
    return brentq(lambda x: f(x) - level, lo, hi, xtol=1e-12 * x0, rtol=1e-14)


def _lorentzian(p, x):
    amp, x0, fwhm = p
    return amp / (1.0 + (2.0 * (x - x0) / fwhm) ** 2)


def _linewidth(cav, pol, gap, peak, xtol):
    f = lambda x: float(transmission(cav, x, pol, gap=gap))  # noqa: E731
    t_pk = f(peak)
    left = _half_max_crossing(f, peak, 0.5 * t_pk, -1, xtol)
    right = _half_max_crossing(f, peak, 0.5 * t_pk, +1, xtol)
    if left is None or right is None:
        return peak, float("nan"), t_pk
    fwhm0 = right - left
    x = np.linspace(peak - 2.0 * fwhm0, peak + 2.0 * fwhm0, 81)
    y = transmission(cav, x, pol, gap=gap)
    sol = least_squares(
        lambda p: (_lorentzian(p, x) - y) / t_pk,
        [t_pk, peak, fwhm0],
        method="lm",
        x_scale=[t_pk, fwhm0, fwhm0],
        xtol=1e-12,
        ftol=1e-12,
    )
    amp, center, fwhm = sol.x
    if not (sol.success and abs(center - peak) < fwhm0 and fwhm > 0):
        return peak, fwhm0, t_pk
    return float(center), float(abs(fwhm)), f(center)


def find_resonances(
    cavity: CavityConfig,
    wavelength_range: tuple[float, float],
    polarization: str = "ordinary",
    points_per_fsr: int = 200,
    xtol: float = 1e-4,
    linewidths: bool = True,
) -> list[Resonance]:
    """Transmission peaks of the cavity in ``wavelength_range`` (nm), sorted.

    Grid scan at FSR/``points_per_fsr``, golden-section refinement to ``xtol``,
    then half-maximum crossings and a local Lorentzian fit for the width.
    """
    pol = normalize_polarization(polarization)
    lo, hi = map(float, wavelength_range)
    if not 0 < lo < hi:
        raise DataError("wavelength range must satisfy 0 < lo < hi")
    step = _scan_step(cavity, pol, lo, hi, cavity.air_gap, points_per_fsr)
    n = int(np.ceil((hi - lo) / step)) + 1
    grid = np.linspace(lo, hi, n)
    _, per_gap = _peaks_on_grid(cavity, pol, [cavity.air_gap], grid, xtol)
    out = []
    for peak in per_gap[0]:
        if linewidths:
            center, fwhm, t_pk = _linewidth(cavity, pol, cavity.air_gap, float(peak), xtol)
        else:
            center, fwhm, t_pk = float(peak), float("nan"), float(transmission(cavity, peak, pol))
        out.append(Resonance(center, fwhm, t_pk, pol))
    return sorted(out, key=lambda r: r.wavelength)


# --------------------------------------------------------------------------
# dispersion maps


@dataclass(frozen=True)
class Branch:
    """One resonance followed across gap steps.

    ``membrane_character`` is the classification metric per point (0 for a
    field node at the membrane's top face, 1 for an antinode) and
    ``character`` the resulting tags; both are ``None`` until
    :func:`classify_modes` has run.
    """

    polarization: str
    gap: np.ndarray
    wavelength: np.ndarray
    character: tuple[str, ...] | None = None
    membrane_character: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.gap)

    def slope(self) -> np.ndarray:
        if len(self) < 2:
            return np.array([])
        return np.gradient(self.wavelength, self.gap)

    def as_dict(self) -> dict:
        d = {
            "polarization": self.polarization,
            "gap_nm": [float(g) for g in self.gap],
            "wavelength_nm": [float(x) for x in self.wavelength],
        }
        if self.character is not None:
            d["character"] = list(self.character)
            d["membrane_character"] = [float(x) for x in self.membrane_character]
        return d


@dataclass(frozen=True)
class ModeMap:
    gap_values: np.ndarray
    wavelengths: np.ndarray
    transmission: dict[str, np.ndarray]
    branches: tuple[Branch, ...]

    def branches_for(self, polarization: str) -> list[Branch]:
        return [b for b in self.branches if b.polarization == polarization]

    def points(self) -> tuple[np.ndarray, np.ndarray, list[str]]:
        """All branch points as ``(gap, wavelength, polarization)``."""
        if not self.branches:
            return np.array([]), np.array([]), []
        g = np.concatenate([b.gap for b in self.branches])
        w = np.concatenate([b.wavelength for b in self.branches])
        p = [b.polarization for b in self.branches for _ in range(len(b))]
        return g, w, p

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["gap_nm", "wavelength_nm", "T", "polarization"])
            for pol in sorted(self.transmission):
                T = self.transmission[pol]
                for i, g in enumerate(self.gap_values):
                    gs = _fmt(g)
                    for j, x in enumerate(self.wavelengths):
                        w.writerow([gs, _fmt(x), _fmt(T[i, j]), pol])
        return path

    def branches_json(self) -> str:
        return json.dumps({"branches": [b.as_dict() for b in self.branches]}, indent=2) + "\n"

    def write(self, csv_path, json_path) -> tuple[Path, Path]:
        self.to_csv(csv_path)
        Path(json_path).write_text(self.branches_json())
        return Path(csv_path), Path(json_path)

    @classmethod
    def from_branches(cls, branches: Iterable[Branch]) -> ModeMap:
        branches = tuple(branches)
        gaps = np.unique(np.concatenate([b.gap for b in branches])) if branches else np.array([])
        wls = np.unique(np.concatenate([b.wavelength for b in branches])) if branches else np.array([])
        return cls(gaps, wls, {}, branches)


def _track(gaps: np.ndarray, per_gap: list[np.ndarray], pol: str) -> list[Branch]:
    """Link peaks across gap steps into branches.

    Each open branch is extrapolated linearly to the next gap and matched to
    the nearest unclaimed peak within half the local peak spacing; ties go to
    the smaller ``|dlambda|``, then to the lower wavelength.  Wavelength must
    increase along a branch.
    """
    open_: list[tuple[list, list]] = []
    done: list[tuple[list, list]] = []
    for g, peaks in zip(gaps, per_gap):
        peaks = np.asarray(peaks)
        if len(peaks) > 1:
            tol = 0.5 * float(np.min(np.diff(peaks)))
        else:
            tol = np.inf
        pairs = []
        for bi, (bg, bw) in enumerate(open_):
            pred = bw[-1]
            if len(bw) >= 2:
                pred = bw[-1] + (bw[-1] - bw[-2]) / (bg[-1] - bg[-2]) * (g - bg[-1])
            for pi, x in enumerate(peaks):
                dev = abs(x - pred)
                if x > bw[-1] and dev <= tol:
                    pairs.append((dev, x, bi, pi))
        pairs.sort()
        claimed_b, claimed_p = set(), set()
        for k, (dev, x, bi, pi) in enumerate(pairs):
            if bi in claimed_b or pi in claimed_p:
                continue
            rivals = [q for q in pairs[k + 1 :] if q[2] == bi and q[3] not in claimed_p and q[0] - dev < 1e-9]
            if rivals:
                log.info("ambiguous branch continuation at gap %.6g nm; kept %.6g nm", g, x)
            claimed_b.add(bi)
            claimed_p.add(pi)
            open_[bi][0].append(float(g))
            open_[bi][1].append(float(x))
        still = []
        for bi, br in enumerate(open_):
            (still if bi in claimed_b else done).append(br)
        for pi, x in enumerate(peaks):
            if pi not in claimed_p:
                still.append(([float(g)], [float(x)]))
        open_ = still
    done.extend(open_)
    done.sort(key=lambda br: (br[0][0], br[1][0]))
    return [Branch(pol, np.array(bg), np.array(bw)) for bg, bw in done]


def _check_grid(name, values):
    v = np.asarray(values, dtype=float)
    if v.ndim != 1 or len(v) < 2 or np.any(np.diff(v) <= 0):
        raise DataError(f"{name} must be 1-D, strictly increasing, with >= 2 points")
    return v


def dispersion_map(
    cavity: CavityConfig,
    gap_values,
    wavelengths,
    polarizations: Sequence[str] = POLARIZATIONS,
    threads: int | None = None,
    points_per_fsr: int = 200,
    xtol: float = 1e-4,
    min_branch_points: int = 3,
) -> ModeMap:
    """``T(gap, lambda)`` on a grid plus tracked resonance branches.

    The transmission matrix is stored on the user's wavelength grid; branch
    points come from a separate FSR-resolved scan with golden-section
    refinement, so they do not depend on the display grid.
    """
    gaps = _check_grid("gap values", gap_values)
    wl = _check_grid("wavelengths", wavelengths)
    if gaps[0] < 0:
        raise DataError("gap values must be >= 0")
    trans, branches = {}, []
    for pol in (normalize_polarization(p) for p in polarizations):
        chunks = _chunks(len(gaps), threads)
        trans[pol] = np.concatenate(
            _map(lambda sl: transmission(cavity, wl[None, :], pol, gap=gaps[sl, None]), chunks, threads),
            axis=0,
        )
        step = _scan_step(cavity, pol, wl[0], wl[-1], gaps[-1], points_per_fsr)
        grid = np.linspace(wl[0], wl[-1], int(np.ceil((wl[-1] - wl[0]) / step)) + 1)
        _, per_gap = _peaks_on_grid(cavity, pol, gaps, grid, xtol, threads)
        branches += [b for b in _track(gaps, per_gap, pol) if len(b) >= min_branch_points]
    return ModeMap(gaps, wl, trans, tuple(branches))


def _chunks(n: int, threads: int | None) -> list[slice]:
    k = max(1, min(int(threads or 1), n))
    edges = np.linspace(0, n, k + 1).astype(int)
    return [slice(a, b) for a, b in zip(edges[:-1], edges[1:])]


def _map(fn, chunks, threads):
    if not threads or threads <= 1 or len(chunks) == 1:
        return [fn(c) for c in chunks]
    with ThreadPoolExecutor(max_workers=int(threads)) as pool:
        return list(pool.map(fn, chunks))


# --------------------------------------------------------------------------
# mode character


def membrane_character(cavity: CavityConfig, gap: float, wavelength: float, polarization: str) -> float:
    """``|E(top face)|^2 / max |E|^2`` inside the membrane.

    Air-like hybrid modes have a field node at the membrane surface facing
    the gap (value near 0); dielectric-like modes have an antinode there
    (near 1).  A cavity without membrane returns 0.
    """
    span = cavity.membrane_span(gap)
    if span is None:
        return 0.0
    prof = field_profile(cavity.system(gap), wavelength, polarization, ambient_extent=0.0, substrate_extent=0.0)
    z0, z1 = span
    inside = (prof.z >= z0 - 1e-9) & (prof.z <= z1 + 1e-9)
    # the interface is sampled twice; the second sample belongs to the membrane
    idx = np.flatnonzero(inside)
    e2 = prof.intensity[idx]
    return float(e2[0] / np.max(e2))


def character_tag(value: float) -> str:
    if value < AIR_LIKE_MAX:
        return "air_like"
    if value > DIELECTRIC_LIKE_MIN:
        return "dielectric_like"
    return "mixed"


def classify_modes(mode_map: ModeMap, cavity: CavityConfig) -> ModeMap:
    """Tag every branch point as air_like, dielectric_like or mixed."""
    out = []
    for b in mode_map.branches:
        pol = b.polarization if b.polarization in POLARIZATIONS else "ordinary"
        vals = np.array([membrane_character(cavity, g, x, pol) for g, x in zip(b.gap, b.wavelength)])
        out.append(replace(b, character=tuple(character_tag(v) for v in vals), membrane_character=vals))
    return replace(mode_map, branches=tuple(out))


# --------------------------------------------------------------------------
# coupling periodicity


@dataclass(frozen=True)
class CouplingPeriod:
    """Spacing of avoided crossings.

    ``wavenumber_period`` is in 1/nm; ``wavelength_period`` converts it at
    the mean crossing wavelength.  ``crossings`` are the clustered slope
    minima.
    """

    crossings: np.ndarray
    wavenumber_period: float
    wavelength_period: float


def avoided_crossings(branch: Branch, depth: float = 0.5) -> np.ndarray:
    """Wavelengths where the branch slope dips below ``depth`` x its maximum."""
    s = branch.slope()
    if len(s) < 5:
        return np.array([])
    idx = _interior_maxima(-s)
    idx = idx[s[idx] < depth * np.max(s)]
    return branch.wavelength[idx]


def coupling_period(mode_map: ModeMap, polarization: str | None = None, cluster_nm: float = 2.0) -> CouplingPeriod:
    """Median spacing (in wavenumber) between avoided-crossing wavelengths."""
    branches = mode_map.branches if polarization is None else mode_map.branches_for(polarization)
    pts = np.sort(np.concatenate([avoided_crossings(b) for b in branches] or [np.array([])]))
    if pts.size == 0:
        return CouplingPeriod(pts, float("nan"), float("nan"))
    clusters = [[pts[0]]]
    for x in pts[1:]:
        if x - clusters[-1][-1] <= cluster_nm:
            clusters[-1].append(x)
        else:
            clusters.append([x])
    centers = np.array([np.mean(c) for c in clusters])
    if len(centers) < 2:
        return CouplingPeriod(centers, float("nan"), float("nan"))
    dk = float(np.median(np.abs(np.diff(1.0 / centers))))
    lam = float(np.mean(centers))
    return CouplingPeriod(centers, dk, dk * lam**2)


# --------------------------------------------------------------------------
# membrane thickness fit


def _phases(cav: CavityConfig, wl, pol, d, length):
    """Round-trip phase for membrane thickness ``d`` and gap ``length``.

    ``d`` and ``length`` broadcast against ``wl``.  ``d`` is ignored for a
    cavity without membrane.
    """
    rf, _, _, _ = _stack_coefficients(cav.fiber_from_gap(), wl, pol)
    override = {0: d} if cav.membrane is not None else None
    rc, _, _, _ = _stack_coefficients(cav.dressed_planar(), wl, pol, override)
    n_gap = np.real(cav.gap_medium.index(wl, pol))
    return np.angle(rf * rc) + 2.0 * TWO_PI * n_gap * length / wl


def _wrap(phase):
    return (phase + np.pi) % TWO_PI - np.pi


def _phase_residual(cav, wl, pol, d, length, h=1e-3):
    """Phase mismatch converted to a wavelength shift via the local phase slope."""
    lo, mid, hi = (_phases(cav, x, pol, d, length) for x in (wl - h, wl, wl + h))
    slope = _wrap(hi - lo) / (2.0 * h)
    return _wrap(mid) / slope


def fit_membrane_thickness(
    measured: ModeMap,
    cavity_template: CavityConfig,
    d_initial: float,
    search_fraction: float = 0.3,
    scan_step: float = 5.0,
    offset_span: float = 250.0,
    offset_step: float = 10.0,
    max_iter: int = 500,
) -> FitResult:
    """Least-squares membrane thickness and global gap offset.

    A resonance at ``(gap, lambda)`` satisfies ``arg(r_f r_c) + 4 pi n (gap +
    offset) / lambda = 0 mod 2 pi``, with ``r_f`` the fiber mirror and ``r_c``
    the membrane-dressed planar mirror, both seen from the gap.  Residuals are
    the phase mismatch converted to wavelength through the local phase slope.
    Because the phase condition aliases in ``d`` roughly every
    ``lambda / 2n``, a coarse scan over ``d_initial * (1 +- search_fraction)``
    with the offset profiled on a grid picks the basin before
    Levenberg-Marquardt refines both parameters.  Points tagged with an
    unknown polarization take whichever polarization fits them better.

    Without a membrane in the template the map carries no information on
    ``d``: only the offset is fitted, ``d`` is returned at ``d_initial`` with
    infinite sigma and ``metadata["identifiable"]`` is False.
    """
    if len(measured.branches) < 2:
        raise InsufficientDataError("thickness fit needs at least 2 branches")
    gaps, wls, pols = measured.points()
    if len(gaps) < 3:
        raise InsufficientDataError("thickness fit needs at least 3 branch points")
    if d_initial <= 0:
        raise DataError("d_initial must be > 0 nm")
    cav = cavity_template
    has_membrane = cav.membrane is not None

    groups = []
    for pol in POLARIZATIONS:
        mask = np.array([p == pol or p not in POLARIZATIONS for p in pols])
        if mask.any():
            groups.append((pol, mask))
    unknown = np.array([p not in POLARIZATIONS for p in pols])

    def residuals(params):
        d, off = (params[0], params[1]) if has_membrane else (d_initial, params[0])
        per_pol = np.full((len(groups), len(gaps)), np.inf)
        for k, (pol, mask) in enumerate(groups):
            per_pol[k, mask] = _phase_residual(cav, wls[mask], pol, d, gaps[mask] + off)
        pick = np.argmin(np.abs(per_pol), axis=0)
        return per_pol[pick, np.arange(len(gaps))]

    # coarse scan, offset profiled on a grid
    if has_membrane:
        lo_d = d_initial * (1 - search_fraction)
        d_grid = np.arange(lo_d, d_initial * (1 + search_fraction) + scan_step / 2, scan_step)
    else:
        d_grid = np.array([d_initial])
    off_grid = np.arange(-offset_span, offset_span + offset_step / 2, offset_step)
    bases = []
    for pol, mask in groups:
        wl = wls[mask]
        base = _phases(cav, wl[None, :], pol, d_grid[:, None], gaps[mask][None, :])
        kvec = 2.0 * TWO_PI * np.real(cav.gap_medium.index(wl, pol)) / wl
        bases.append((mask, base, kvec))
    cost = np.empty((len(d_grid), len(off_grid)))
    for j, off in enumerate(off_grid):
        err = np.full((len(d_grid), len(gaps)), np.inf)
        for mask, base, kvec in bases:
            err[:, mask] = np.minimum(err[:, mask], _wrap(base + kvec * off) ** 2)
        cost[:, j] = err.sum(axis=1)
    i_d, i_o = np.unravel_index(np.argmin(cost), cost.shape)
    p0 = np.array([d_grid[i_d], off_grid[i_o]]) if has_membrane else np.array([off_grid[i_o]])

    sol = least_squares(
        residuals,
        p0,
        method="lm",
        xtol=1e-10,
        ftol=1e-10,
        x_scale=[10.0] * len(p0),
        max_nfev=max_iter * (len(p0) + 1),
    )
    res = sol.fun
    # central differences with one absolute step for every parameter, so an
    # exact d/offset degeneracy shows up as an exactly singular Jacobian
    h = 1e-3
    jac = np.empty((len(res), len(p0)))
    for k in range(len(p0)):
        dp = np.zeros(len(p0))
        dp[k] = h
        jac[:, k] = (residuals(sol.x + dp) - residuals(sol.x - dp)) / (2 * h)
    cov = covariance(jac, res, rcond=1e-7)
    sig = np.sqrt(np.clip(np.diag(cov), 0, None))
    if has_membrane:
        d_par = Param(float(sol.x[0]), float(sig[0]))
        off_par = Param(float(sol.x[1]), float(sig[1]))
    else:
        log.warning("template has no membrane; the map carries no information on its thickness")
        d_par = Param(float(d_initial), float("inf"))
        off_par = Param(float(sol.x[0]), float(sig[0]))
    identifiable = bool(np.isfinite(d_par.sigma) and np.isfinite(off_par.sigma))
    converged = bool(sol.success and np.all(np.isfinite(res)))
    if not converged:
        log.warning("thickness fit did not converge; best candidate d = %.6g nm", d_par.value)
    return FitResult(
        model="membrane_thickness",
        params={"d": d_par, "gap_offset": off_par},
        residual_rms=float(np.sqrt(np.mean(res**2))),
        converged=converged,
        n_iterations=int(sol.nfev),
        metadata={
            "identifiable": identifiable,
            "n_points": int(len(res)),
            "n_unknown_polarization": int(unknown.sum()),
            "scan_start_d": float(d_grid[i_d]),
            "scan_start_offset": float(off_grid[i_o]),
        },
    )


__all__ = [
    "AIR_LIKE_MAX",
    "DIELECTRIC_LIKE_MIN",
    "Branch",
    "CavityConfig",
    "CouplingPeriod",
    "FinesseSpectrum",
    "LossBudget",
    "ModeMap",
    "Resonance",
    "assemble",
    "avoided_crossings",
    "character_tag",
    "classify_modes",
    "coupling_period",
    "dispersion_map",
    "finesse_from_losses",
    "finesse_spectrum",
    "find_resonances",
    "fit_membrane_thickness",
    "loss_budget",
    "membrane_character",
    "mirror_transmissions",
    "transmission",
    "write_finesse_csv",
]
