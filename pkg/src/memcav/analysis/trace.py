"""Measured 1-D data with declared units."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import DataError

# canonical unit -> accepted spellings (case-insensitive)
_UNIT_ALIASES = {
    "s": ("s", "sec", "seconds"),
    "ms": ("ms",),
    "us": ("us",),
    "ns": ("ns",),
    "ps": ("ps",),
    "nm": ("nm",),
    "pm": ("pm",),
    "um": ("um",),
    "Hz": ("hz",),
    "kHz": ("khz",),
    "MHz": ("mhz",),
    "GHz": ("ghz",),
    "V": ("v", "volts", "volt"),
    "counts": ("counts", "count", "cts"),
    "cps": ("cps",),
    "kcps": ("kcps",),
    "rel": ("rel", "relative"),
    "rel_per_rthz": ("rel_per_rthz",),
    "ppm": ("ppm",),
    "step": ("step", "steps", "index"),
}
UNITS = tuple(_UNIT_ALIASES)
_LOOKUP = {alias: canon for canon, aliases in _UNIT_ALIASES.items() for alias in aliases}


def canonical_unit(unit: str) -> str:
    try:
        return _LOOKUP[str(unit).strip().lower()]
    except KeyError:
        raise DataError(f"unknown unit {unit!r}; known units: {', '.join(UNITS)}") from None


def unit_from_column(name: str) -> str:
    """Unit encoded in a column header: ``time_s`` -> s, ``volts`` -> V."""
    name = name.strip()
    low = name.lower()
    if low in _LOOKUP:
        return _LOOKUP[low]
    # longest matching suffix wins, so "_rel_per_rthz" beats "_rthz"
    for alias in sorted(_LOOKUP, key=len, reverse=True):
        if low.endswith("_" + alias):
            return _LOOKUP[alias]
    raise DataError(f"column {name!r} does not declare a unit (expected a suffix such as _ns, _nm, _GHz)")


@dataclass(frozen=True)
class Trace:
    """Samples ``y(x)`` with ``x`` strictly increasing."""

    x: np.ndarray
    y: np.ndarray
    x_unit: str
    y_unit: str
    name: str = ""

    def __post_init__(self) -> None:
        x = np.asarray(self.x, dtype=float).ravel()
        y = np.asarray(self.y, dtype=float).ravel()
        if x.shape != y.shape:
            raise DataError(f"trace {self.name!r}: x and y lengths differ ({len(x)} vs {len(y)})")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise DataError(f"trace {self.name!r}: non-finite samples")
        bad = np.flatnonzero(np.diff(x) <= 0)
        if bad.size:
            i = int(bad[0])
            raise DataError(f"trace {self.name!r}: x not strictly increasing at sample {i + 1} ({x[i]} -> {x[i + 1]})")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x_unit", canonical_unit(self.x_unit))
        object.__setattr__(self, "y_unit", canonical_unit(self.y_unit))

    def __len__(self) -> int:
        return len(self.x)

    def rescaled(self, factor: float, x_unit: str, offset: float = 0.0) -> Trace:
        """New trace with ``x -> factor * x + offset`` (e.g. seconds to GHz via a scan slope)."""
        x = factor * self.x + offset
        y = self.y
        if factor < 0:
            x, y = x[::-1], y[::-1]
        return Trace(x, y, x_unit, self.y_unit, self.name)

    def window(self, lo: float, hi: float) -> Trace:
        sel = (self.x >= lo) & (self.x <= hi)
        return Trace(self.x[sel], self.y[sel], self.x_unit, self.y_unit, self.name)

    def to_csv(self, path, x_column: str | None = None, y_column: str | None = None) -> Path:
        from ..tmm import _fmt

        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([x_column or f"x_{self.x_unit}", y_column or f"y_{self.y_unit}"])
            for a, b in zip(self.x, self.y):
                w.writerow([_fmt(a), _fmt(b)])
        return path


@dataclass(frozen=True)
class CorrelationHistogram:
    """Coincidence counts on uniform delay bins (ns)."""

    tau_bins: np.ndarray
    coincidences: np.ndarray
    repetition_period: float = 42.735

    def __post_init__(self) -> None:
        tau = np.asarray(self.tau_bins, dtype=float).ravel()
        c = np.asarray(self.coincidences, dtype=float).ravel()
        if tau.shape != c.shape or len(tau) < 3:
            raise DataError("histogram needs >= 3 bins with matching counts")
        if np.any(c < 0) or not np.all(np.isfinite(c)):
            raise DataError("coincidence counts must be finite and >= 0")
        step = np.diff(tau)
        if np.any(step <= 0) or np.ptp(step) > 1e-6 * abs(step.mean()):
            raise DataError("histogram bins must be uniform and increasing")
        if not self.repetition_period > 0:
            raise DataError("repetition period must be > 0")
        object.__setattr__(self, "tau_bins", tau)
        object.__setattr__(self, "coincidences", c)
        object.__setattr__(self, "repetition_period", float(self.repetition_period))

    @classmethod
    def from_trace(cls, trace: Trace, repetition_period: float = 42.735) -> CorrelationHistogram:
        if trace.x_unit != "ns":
            raise DataError(f"correlation delays must be in ns, got {trace.x_unit}")
        return cls(trace.x, trace.y, repetition_period)

    @property
    def bin_width(self) -> float:
        return float(self.tau_bins[1] - self.tau_bins[0])

    @property
    def span(self) -> float:
        return float(self.tau_bins[-1] - self.tau_bins[0])
