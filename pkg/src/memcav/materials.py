"""Optical media, layers and layer stacks.

All lengths are in nm and all indices are dimensionless.  The sign convention
for absorption is ``Im(n) >= 0`` (forward wave ``exp(+i n k z)``, time
dependence ``exp(-i w t)``).

Uniaxial media carry an ordinary and an extraordinary index.  At normal
incidence with the optic axis in the layer plane the two linear
polarizations decouple, so every downstream calculation takes a
``polarization`` argument and solves a scalar problem.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Literal, Mapping, Sequence

import numpy as np

from .errors import DataError, DegenerateStackError, OutOfRangeError

Polarization = Literal["ordinary", "extraordinary"]
POLARIZATIONS: tuple[Polarization, Polarization] = ("ordinary", "extraordinary")

_POL_ALIASES = {
    "o": "ordinary",
    "ord": "ordinary",
    "ordinary": "ordinary",
    "e": "extraordinary",
    "ext": "extraordinary",
    "extraordinary": "extraordinary",
}


def normalize_polarization(polarization: str) -> Polarization:
    try:
        return _POL_ALIASES[str(polarization).lower()]  # type: ignore[return-value]
    except KeyError:
        raise DataError(
            f"unknown polarization {polarization!r}; use 'ordinary' or 'extraordinary'"
        ) from None


def _as_table(samples: Iterable[Sequence[float | complex]] | None) -> tuple[tuple[float, complex], ...]:
    if not samples:
        return ()
    out = []
    for row in samples:
        if len(row) == 2:
            wl, n = row
        elif len(row) == 3:
            wl, n_re, n_im = row
            n = complex(n_re, n_im)
        else:
            raise DataError(f"dispersion rows need 2 or 3 entries, got {row!r}")
        out.append((float(wl), complex(n)))
    return tuple(out)


def _check_index(name: str, n: complex) -> None:
    if not np.isfinite(n.real) or not np.isfinite(n.imag):
        raise DataError(f"{name}: non-finite refractive index {n}")
    if n.real < 1.0:
        raise DataError(f"{name}: Re(n) = {n.real} < 1 is not supported")
    if n.imag < 0.0:
        raise DataError(f"{name}: Im(n) = {n.imag} < 0 describes gain, not a passive medium")


@dataclass(frozen=True)
class Medium:
    """A homogeneous, possibly uniaxial, optical medium.

    Parameters
    ----------
    name : str
        Identifier used in error messages and config files.
    n_ordinary : complex
        Constant index for the ordinary polarization.
    n_extraordinary : complex, optional
        Constant index for the extraordinary polarization.  Defaults to
        ``n_ordinary`` (isotropic medium).
    dispersion, dispersion_extraordinary : sequence of (wavelength_nm, n)
        Optional tables, linearly interpolated.  Wavelengths must be strictly
        increasing; queries outside the table raise ``OutOfRangeError``.  An
        isotropic medium only needs ``dispersion``.
    """

    name: str
    n_ordinary: complex
    n_extraordinary: complex | None = None
    dispersion: tuple[tuple[float, complex], ...] = field(default=())
    dispersion_extraordinary: tuple[tuple[float, complex], ...] = field(default=())

    def __post_init__(self) -> None:
        n_o = complex(self.n_ordinary)
        n_e = n_o if self.n_extraordinary is None else complex(self.n_extraordinary)
        object.__setattr__(self, "n_ordinary", n_o)
        object.__setattr__(self, "n_extraordinary", n_e)
        _check_index(self.name, n_o)
        _check_index(self.name, n_e)
        table_o = _as_table(self.dispersion)
        table_e = _as_table(self.dispersion_extraordinary)
        for table in (table_o, table_e):
            if table:
                wls = np.array([row[0] for row in table])
                if len(wls) < 2 or np.any(np.diff(wls) <= 0):
                    raise DataError(f"{self.name}: dispersion table must be strictly sorted with >= 2 rows")
                for _, n in table:
                    _check_index(self.name, n)
        object.__setattr__(self, "dispersion", table_o)
        object.__setattr__(self, "dispersion_extraordinary", table_e)

    @property
    def birefringent(self) -> bool:
        if self.dispersion_extraordinary:
            return self.dispersion_extraordinary != self.dispersion
        return self.n_extraordinary != self.n_ordinary

    def _table(self, polarization: Polarization) -> tuple[tuple[float, complex], ...]:
        if polarization == "extraordinary" and self.dispersion_extraordinary:
            return self.dispersion_extraordinary
        if polarization == "extraordinary" and self.dispersion and self.n_extraordinary != self.n_ordinary:
            # constant birefringence on top of a shared table is ambiguous
            return ()
        return self.dispersion

    def index(self, wavelength, polarization: str = "ordinary"):
        """Complex index at ``wavelength`` (nm); scalar in, scalar out."""
        pol = normalize_polarization(polarization)
        table = self._table(pol)
        wl = np.asarray(wavelength, dtype=float)
        if not table:
            n = self.n_extraordinary if pol == "extraordinary" else self.n_ordinary
            if wl.ndim == 0:
                return n
            return np.full(wl.shape, n, dtype=complex)
        wls = np.array([row[0] for row in table])
        ns = np.array([row[1] for row in table])
        if np.any(wl < wls[0]) or np.any(wl > wls[-1]):
            raise OutOfRangeError(
                f"{self.name}: wavelength outside tabulated range "
                f"[{wls[0]:g}, {wls[-1]:g}] nm"
            )
        n = np.interp(wl, wls, ns.real) + 1j * np.interp(wl, wls, ns.imag)
        return complex(n) if wl.ndim == 0 else n


def index_at(medium: Medium, wavelength, polarization: str = "ordinary"):
    """Refractive index of ``medium`` at ``wavelength`` nm for one polarization."""
    return medium.index(wavelength, polarization)


@dataclass(frozen=True)
class Layer:
    medium: Medium
    thickness: float  # nm

    def __post_init__(self) -> None:
        d = float(self.thickness)
        if not np.isfinite(d) or d < 0:
            raise DataError(f"layer thickness must be finite and >= 0, got {self.thickness}")
        object.__setattr__(self, "thickness", d)

    def optical_thickness(self, wavelength, polarization: str = "ordinary"):
        return self.medium.index(wavelength, polarization) * self.thickness


@dataclass(frozen=True)
class StackSpec:
    """Layers between two semi-infinite media.

    Light enters from ``ambient`` into ``layers[0]`` and leaves into
    ``substrate``.
    """

    ambient: Medium
    layers: tuple[Layer, ...]
    substrate: Medium

    def __post_init__(self) -> None:
        object.__setattr__(self, "layers", tuple(self.layers))

    def __len__(self) -> int:
        return len(self.layers)

    @property
    def total_thickness(self) -> float:
        return float(sum(layer.thickness for layer in self.layers))

    def reversed(self) -> StackSpec:
        """Same structure seen from the other side."""
        return StackSpec(self.substrate, tuple(reversed(self.layers)), self.ambient)

    def boundaries(self) -> np.ndarray:
        """Interface positions (nm), first interface at z = 0."""
        return np.concatenate([[0.0], np.cumsum([layer.thickness for layer in self.layers])])


def quarter_wave_stack(
    center_wavelength: float,
    high: Medium,
    low: Medium,
    pairs: int,
    terminate_with: str = "high",
    ambient: Medium | None = None,
    substrate: Medium | None = None,
    polarization: str = "ordinary",
) -> StackSpec:
    """Nominal quarter-wave Bragg mirror.

    The coating is grown on ``substrate`` starting with a high-index layer,
    ``pairs`` times (H, L).  ``terminate_with`` names the outermost layer,
    i.e. the one facing ``ambient``: ``"low"`` gives ``2 * pairs`` layers,
    ``"high"`` adds one extra high-index layer on top.

    Each layer is ``center_wavelength / (4 Re n)`` thick, so its one-way
    phase at the center wavelength is exactly pi/2.
    """
    if center_wavelength <= 0:
        raise DataError("center wavelength must be positive")
    if pairs < 0:
        raise DataError("pairs must be >= 0")
    if terminate_with not in ("high", "low"):
        raise DataError(f"terminate_with must be 'high' or 'low', got {terminate_with!r}")
    ambient = ambient if ambient is not None else VACUUM
    substrate = substrate if substrate is not None else FUSED_SILICA
    if pairs == 0:
        return StackSpec(ambient, (), substrate)
    n_h = high.index(center_wavelength, polarization)
    n_l = low.index(center_wavelength, polarization)
    if high == low or n_h == n_l:
        raise DegenerateStackError("high and low media are identical; no Bragg contrast")
    lay_h = Layer(high, center_wavelength / (4.0 * n_h.real))
    lay_l = Layer(low, center_wavelength / (4.0 * n_l.real))
    # built substrate-outwards, then flipped so layers[0] faces the ambient
    grown = [lay_h, lay_l] * pairs
    if terminate_with == "high":
        grown.append(lay_h)
    return StackSpec(ambient, tuple(reversed(grown)), substrate)


def medium_from_mapping(name: str, spec: Mapping) -> Medium:
    """Build a medium from a config mapping.

    Accepted keys: ``n`` (+ optional ``k``) for isotropic media, ``n_o``/``n_e``
    (+ ``k_o``/``k_e``) for uniaxial media, ``table_nm`` as rows of
    ``[wavelength_nm, n, k]`` and ``table_e_nm`` for the extraordinary axis.
    """
    allowed = {"n", "k", "n_o", "k_o", "n_e", "k_e", "table_nm", "table_e_nm"}
    unknown = set(spec) - allowed
    if unknown:
        raise DataError(f"medium {name}: unknown keys {sorted(unknown)}")
    if "n" in spec:
        n_o = complex(spec["n"], spec.get("k", 0.0))
        n_e = None
    else:
        n_o = complex(spec.get("n_o", 1.0), spec.get("k_o", 0.0))
        n_e = complex(spec["n_e"], spec.get("k_e", 0.0)) if "n_e" in spec else None
    return Medium(
        name,
        n_o,
        n_e,
        dispersion=_as_table(spec.get("table_nm")),
        dispersion_extraordinary=_as_table(spec.get("table_e_nm")),
    )


VACUUM = Medium("vacuum", 1.0)
SIO2 = Medium("SiO2", 1.46)
NB2O5 = Medium("Nb2O5", 2.25)
SIC_4H = Medium("SiC_4H", 2.59, 2.63)
FUSED_SILICA = Medium("fused_silica", 1.45)

DEFAULT_MEDIA: dict[str, Medium] = {m.name: m for m in (VACUUM, SIO2, NB2O5, SIC_4H, FUSED_SILICA)}
