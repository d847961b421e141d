"""Normal-incidence transfer-matrix method.

Convention: the characteristic matrix of a layer,

    [[cos d, i sin d / n], [i n sin d, cos d]],   d = 2 pi n t / lambda,

maps the tangential fields ``(E, H)`` at the front face of a layer onto the
fields at its back face (forward wave ``exp(+i n k z)``, time dependence
``exp(-i w t)``).  A stack therefore composes as ``M_N ... M_2 M_1``.  ``H`` is
measured in units where a forward wave in a medium of index ``n`` has
``H = n E``.

All functions broadcast over ``wavelength``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, NumericalDegeneracyError
from .materials import Layer, Medium, StackSpec, normalize_polarization

TWO_PI = 2.0 * np.pi


# --------------------------------------------------------------------------
# core kernels (array level)


def _product(indices, thicknesses, wavelength):
    """Matrix product of a layer sequence.

    ``indices[j]`` and ``thicknesses[j]`` broadcast against ``wavelength``.
    Returns the four entries of ``M_N ... M_1``.
    """
    wl = np.asarray(wavelength, dtype=float)
    shape = np.broadcast_shapes(wl.shape, *(np.shape(d) for d in thicknesses), *(np.shape(n) for n in indices))
    s11 = np.ones(shape, dtype=complex)
    s12 = np.zeros(shape, dtype=complex)
    s21 = np.zeros(shape, dtype=complex)
    s22 = np.ones(shape, dtype=complex)
    with np.errstate(over="ignore", invalid="ignore"):
        for n, d in zip(indices, thicknesses):
            s11, s12, s21, s22 = _apply(n, d, wl, s11, s12, s21, s22)
    return s11, s12, s21, s22


def _apply(n, d, wl, s11, s12, s21, s22):
    delta = TWO_PI * n * d / wl
    c = np.cos(delta)
    s = np.sin(delta)
    a12 = 1j * s / n
    a21 = 1j * n * s
    s11, s12, s21, s22 = (
        c * s11 + a12 * s21,
        c * s12 + a12 * s22,
        a21 * s11 + c * s21,
        a21 * s12 + c * s22,
    )
    return s11, s12, s21, s22


def _solve(s11, s12, s21, s22, n0, ns):
    """Amplitude coefficients from the system matrix and the bounding indices."""
    a = s11 + s12 * n0
    b = s11 - s12 * n0
    c = s21 + s22 * n0
    e = s21 - s22 * n0
    with np.errstate(all="ignore"):
        r = (c - ns * a) / (ns * b - e)
        t = a + r * b
    if not (np.all(np.isfinite(r)) and np.all(np.isfinite(t))):
        raise NumericalDegeneracyError("non-finite transfer-matrix product")
    return r, t


def _stack_arrays(stack: StackSpec, wavelength, polarization):
    pol = normalize_polarization(polarization)
    indices = [layer.medium.index(wavelength, pol) for layer in stack.layers]
    thicknesses = [layer.thickness for layer in stack.layers]
    n0 = stack.ambient.index(wavelength, pol)
    ns = stack.substrate.index(wavelength, pol)
    if np.any(np.imag(n0) != 0):
        raise DataError("ambient medium must be lossless")
    return indices, thicknesses, n0, ns


def amplitudes(indices, thicknesses, n0, ns, wavelength):
    """``(r, t)`` for raw index/thickness sequences (used by the cavity module)."""
    return _solve(*_product(indices, thicknesses, wavelength), n0, ns)


def power_coefficients(r, t, n0, ns):
    R = np.abs(r) ** 2
    T = np.real(ns) / np.real(n0) * np.abs(t) ** 2
    return R, T


# --------------------------------------------------------------------------
# public API


@dataclass(frozen=True)
class ComplexResponse:
    """Reflection/transmission of a stack; arrays when evaluated on a grid."""

    wavelength: np.ndarray | float
    r: np.ndarray | complex
    t: np.ndarray | complex
    R: np.ndarray | float
    T: np.ndarray | float
    A: np.ndarray | float

    def to_csv(self, path) -> Path:
        path = Path(path)
        rows = np.atleast_1d
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["wavelength_nm", "R", "T", "A", "re_r", "im_r", "re_t", "im_t"])
            for wl, R, T, A, r, t in zip(
                rows(self.wavelength), rows(self.R), rows(self.T), rows(self.A), rows(self.r), rows(self.t)
            ):
                w.writerow([_fmt(v) for v in (wl, R, T, A, r.real, r.imag, t.real, t.imag)])
        return path


def _fmt(value: float) -> str:
    return f"{float(value):.12g}"


def layer_matrix(layer: Layer, wavelength, polarization: str = "ordinary") -> np.ndarray:
    """Characteristic matrix of one layer, shape ``(..., 2, 2)``."""
    n = layer.medium.index(wavelength, polarization)
    m = _product([n], [layer.thickness], wavelength)
    return np.stack([np.stack(m[:2], -1), np.stack(m[2:], -1)], -2)


def stack_matrix(stack: StackSpec, wavelength, polarization: str = "ordinary") -> np.ndarray:
    indices, thicknesses, _, _ = _stack_arrays(stack, wavelength, polarization)
    m = _product(indices, thicknesses, wavelength)
    return np.stack([np.stack(m[:2], -1), np.stack(m[2:], -1)], -2)


def stack_response(stack: StackSpec, wavelength, polarization: str = "ordinary") -> ComplexResponse:
    """Complex and power response of ``stack`` at normal incidence.

    ``T`` includes the ``Re(n_sub)/n_amb`` flux factor, so ``R + T + A = 1``.
    """
    wl = np.asarray(wavelength, dtype=float)
    if np.any(wl <= 0):
        raise DataError("wavelength must be positive")
    indices, thicknesses, n0, ns = _stack_arrays(stack, wl, polarization)
    r, t = amplitudes(indices, thicknesses, n0, ns, wl)
    R, T = power_coefficients(r, t, n0, ns)
    A = 1.0 - R - T
    if wl.ndim == 0:
        return ComplexResponse(float(wl), complex(r), complex(t), float(R), float(T), float(A))
    return ComplexResponse(wl, r, t, R, T, A)


def stopband(stack: StackSpec, wavelengths, polarization: str = "ordinary") -> ComplexResponse:
    wl = np.asarray(wavelengths, dtype=float)
    if wl.ndim != 1 or len(wl) < 2 or np.any(np.diff(wl) <= 0):
        raise DataError("stopband grid must be sorted with at least 2 points")
    return stack_response(stack, wl, polarization)


@dataclass(frozen=True)
class StopbandInfo:
    center: float  # nm
    short_edge: float
    long_edge: float
    t_min: float


def stopband_center(series: ComplexResponse, contrast: float = 10.0) -> StopbandInfo | None:
    """Locate the low-transmission band of a response series.

    The band is the contiguous ``T < contrast * T_min`` region around the
    transmission minimum.  Its center is the midpoint in wavenumber: a
    quarter-wave stopband is symmetric in ``1/lambda``, not in ``lambda``.
    Returns ``None`` when the region touches the grid ends or the response is
    flat (no stopband detected).
    """
    wl = np.asarray(series.wavelength)
    T = np.asarray(series.T)
    i0 = int(np.argmin(T))
    t_min = float(T[i0])
    if np.max(T) < contrast * t_min:
        return None
    low = T < contrast * t_min
    lo = i0
    while lo > 0 and low[lo - 1]:
        lo -= 1
    hi = i0
    while hi < len(T) - 1 and low[hi + 1]:
        hi += 1
    if lo == 0 or hi == len(T) - 1:
        return None
    center = 2.0 / (1.0 / wl[lo] + 1.0 / wl[hi])
    return StopbandInfo(float(center), float(wl[lo]), float(wl[hi]), t_min)


@dataclass(frozen=True)
class FieldProfile:
    """Standing-wave field through a layered system at one wavelength.

    ``z = 0`` is the ambient/first-layer interface.  Interfaces are sampled
    twice (once with each neighbouring index), so ``z`` is non-decreasing and
    the index jump is explicit.  The incident wave in the ambient has unit
    amplitude.
    """

    wavelength: float
    polarization: str
    z: np.ndarray
    n_of_z: np.ndarray
    e_of_z: np.ndarray
    h_of_z: np.ndarray
    layer_boundaries: np.ndarray

    @property
    def intensity(self) -> np.ndarray:
        return np.abs(self.e_of_z) ** 2

    def poynting(self) -> np.ndarray:
        """Time-averaged energy flux, ``Re(E H*) / 2`` in the units above."""
        return 0.5 * np.real(self.e_of_z * np.conj(self.h_of_z))

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["z_nm", "re_n", "im_n", "abs_E2"])
            for z, n, e in zip(self.z, self.n_of_z, self.e_of_z):
                w.writerow([_fmt(z), _fmt(n.real), _fmt(n.imag), _fmt(abs(e) ** 2)])
        return path


def _back_step(n, dist, wavelength, e, h):
    """Fields a distance ``dist`` upstream of a point with fields ``(e, h)``."""
    phi = TWO_PI * n * dist / wavelength
    c = np.cos(phi)
    s = np.sin(phi)
    return c * e - 1j * s / n * h, -1j * n * s * e + c * h


def field_profile(
    system: StackSpec,
    wavelength: float,
    polarization: str = "ordinary",
    samples_per_wavelength: int = 40,
    ambient_extent: float | None = None,
    substrate_extent: float | None = None,
) -> FieldProfile:
    """Sample ``E(z)`` and ``n(z)`` through ``system`` at one wavelength.

    The fields are back-propagated from the transmitted wave in the substrate,
    which stays stable inside highly reflective stacks.  Sample spacing is at
    most ``lambda / (samples_per_wavelength * Re n)`` in every layer.
    """
    pol = normalize_polarization(polarization)
    wl = float(wavelength)
    if wl <= 0:
        raise DataError("wavelength must be positive")
    indices, thicknesses, n0, ns = _stack_arrays(system, wl, pol)
    r, t = amplitudes(indices, thicknesses, n0, ns, wl)
    r, t = complex(r), complex(t)
    bounds = system.boundaries()

    amb = wl / n0.real if ambient_extent is None else float(ambient_extent)
    sub = wl / ns.real if substrate_extent is None else float(substrate_extent)

    # fields at the back face of every layer, walking upstream
    faces = [None] * (len(indices) + 1)
    e, h = t, ns * t
    faces[-1] = (e, h)
    for j in range(len(indices) - 1, -1, -1):
        e, h = _back_step(indices[j], thicknesses[j], wl, e, h)
        faces[j] = (e, h)

    z_parts, n_parts, e_parts, h_parts = [], [], [], []

    n_amb = max(int(np.ceil(amb / (wl / (samples_per_wavelength * n0.real)))), 2)
    za = np.linspace(-amb, 0.0, n_amb + 1)
    k0 = TWO_PI * n0 / wl
    z_parts.append(za)
    n_parts.append(np.full(za.shape, n0, dtype=complex))
    e_parts.append(np.exp(1j * k0 * za) + r * np.exp(-1j * k0 * za))
    h_parts.append(n0 * (np.exp(1j * k0 * za) - r * np.exp(-1j * k0 * za)))

    for j, (n, d) in enumerate(zip(indices, thicknesses)):
        if d == 0:
            continue
        step = wl / (samples_per_wavelength * max(n.real, 1e-12))
        m = max(int(np.ceil(d / step)), 2)
        x = np.linspace(0.0, d, m + 1)
        e_b, h_b = faces[j + 1]
        e_x, h_x = _back_step(n, d - x, wl, e_b, h_b)
        z_parts.append(bounds[j] + x)
        n_parts.append(np.full(x.shape, n, dtype=complex))
        e_parts.append(e_x)
        h_parts.append(h_x)

    n_sub = max(int(np.ceil(sub / (wl / (samples_per_wavelength * ns.real)))), 2)
    zs = np.linspace(0.0, sub, n_sub + 1)
    ks = TWO_PI * ns / wl
    z_parts.append(bounds[-1] + zs)
    n_parts.append(np.full(zs.shape, ns, dtype=complex))
    e_parts.append(t * np.exp(1j * ks * zs))
    h_parts.append(ns * t * np.exp(1j * ks * zs))

    return FieldProfile(
        wavelength=wl,
        polarization=pol,
        z=np.concatenate(z_parts),
        n_of_z=np.concatenate(n_parts),
        e_of_z=np.concatenate(e_parts),
        h_of_z=np.concatenate(h_parts),
        layer_boundaries=bounds,
    )


def airy_etalon_oracle(
    n: float,
    d: float,
    wavelength: float,
    ambient: Medium | float,
    substrate: Medium | float,
    round_trips: int = 10_000,
) -> float:
    """Transmittance of a single lossless slab by explicit multiple-beam summation.

    Independent of the matrix formalism: Fresnel coefficients at each face and
    the sum of ``round_trips`` internally reflected partial waves.
    """
    n0 = ambient.index(wavelength).real if isinstance(ambient, Medium) else float(ambient)
    n2 = substrate.index(wavelength).real if isinstance(substrate, Medium) else float(substrate)
    n1 = float(n)
    t01 = 2 * n0 / (n0 + n1)
    t12 = 2 * n1 / (n1 + n2)
    r10 = (n1 - n0) / (n1 + n0)
    r12 = (n1 - n2) / (n1 + n2)
    delta = TWO_PI * n1 * d / wavelength
    q = r10 * r12 * np.exp(2j * delta)
    partial = np.cumprod(np.full(round_trips, q))
    total = 1.0 + partial[:-1].sum()
    t = t01 * t12 * np.exp(1j * delta) * total
    return float(n2 / n0 * abs(t) ** 2)
