"""CSV ingestion and deterministic output helpers."""
from __future__ import annotations

import csv
import hashlib
import json
import math
import warnings
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.signal import find_peaks

from .analysis.trace import Trace, canonical_unit, unit_from_column
from .cavity import ModeMap, _track
from .errors import DataError, UsageError


class DataWarning(UserWarning):
    """Rows dropped or values adjusted while reading data."""


def _read_rows(path: Path) -> tuple[list[str], list[tuple[int, list[str]]]]:
    if not path.is_file():
        raise UsageError(f"input file not found: {path}")
    rows = []
    header = None
    with path.open(newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row) or row[0].lstrip().startswith("#"):
                continue
            if header is None:
                header = [c.strip() for c in row]
                continue
            rows.append((lineno, row))
    if header is None:
        raise DataError(f"{path}: empty file (no header row)")
    return header, rows


def _parse_numeric(path, header, rows, ncols):
    out, lines = [], []
    for lineno, row in rows:
        if len(row) != ncols:
            raise DataError(f"{path}:{lineno}: expected {ncols} columns, got {len(row)}")
        try:
            vals = [float(c) for c in row]
        except ValueError:
            raise DataError(f"{path}:{lineno}: non-numeric value in {row!r}") from None
        if not all(math.isfinite(v) for v in vals):
            warnings.warn(f"{path}:{lineno}: non-finite value, row dropped", DataWarning, stacklevel=3)
            continue
        out.append(vals)
        lines.append(lineno)
    return np.array(out, dtype=float).reshape(-1, ncols), lines


def ingest_csv_trace(path, expected_units: Sequence[str | None] | None = None, name: str | None = None) -> Trace:
    """Two-column CSV whose header names carry units (``time_s,volts``).

    ``expected_units`` is ``(x_unit, y_unit)``; ``None`` entries accept any
    unit.  Non-finite rows are dropped with a warning naming the line;
    a non-increasing abscissa is an error naming the first offending line.
    """
    path = Path(path)
    header, rows = _read_rows(path)
    if len(header) != 2:
        raise DataError(f"{path}: expected 2 columns, header has {len(header)}: {header}")
    units = [unit_from_column(c) for c in header]
    if expected_units is not None:
        for axis, want, got, col in zip(("x", "y"), expected_units, units, header):
            if want is not None and canonical_unit(want) != got:
                raise DataError(
                    f"{path}: unit mismatch on {axis} column {col!r}: file declares {got}, expected {canonical_unit(want)}"
                )
    data, lines = _parse_numeric(path, header, rows, 2)
    if len(data) == 0:
        raise DataError(f"{path}: no data rows")
    bad = np.flatnonzero(np.diff(data[:, 0]) <= 0)
    if bad.size:
        i = int(bad[0])
        raise DataError(
            f"{path}:{lines[i + 1]}: x not strictly increasing ({data[i, 0]:g} at line {lines[i]} "
            f"followed by {data[i + 1, 0]:g})"
        )
    return Trace(data[:, 0], data[:, 1], units[0], units[1], name or path.stem)


SPECTROMETER_COLUMNS = ("frame_index", "wavelength_nm", "counts")


def read_spectrometer_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(frames, wavelengths, counts[frame, wavelength])`` from a frame export."""
    path = Path(path)
    header, rows = _read_rows(path)
    if tuple(h.lower() for h in header) != SPECTROMETER_COLUMNS:
        raise DataError(f"{path}: header must be {','.join(SPECTROMETER_COLUMNS)}, got {','.join(header)}")
    data, _ = _parse_numeric(path, header, rows, 3)
    frames = np.unique(data[:, 0]).astype(int)
    wl = np.unique(data[:, 1])
    counts = np.full((len(frames), len(wl)), np.nan)
    fi = np.searchsorted(frames, data[:, 0].astype(int))
    wi = np.searchsorted(wl, data[:, 1])
    counts[fi, wi] = data[:, 2]
    if np.isnan(counts).any():
        raise DataError(f"{path}: every frame must cover the same wavelength grid")
    return frames, wl, counts


def _subpixel_peaks(wl, y, prominence):
    base = float(np.median(y))
    span = float(np.max(y) - base)
    if span <= 0:
        return np.array([])
    idx, _ = find_peaks(y, prominence=prominence * span)
    out = []
    for i in idx:
        if i == 0 or i == len(y) - 1 or np.any(y[i - 1 : i + 2] <= 0):
            out.append(wl[i])
            continue
        # parabola through log counts: exact for a Gaussian line on a uniform grid
        a, b, c = np.log(y[i - 1 : i + 2])
        denom = a - 2 * b + c
        shift = 0.5 * (a - c) / denom if denom < 0 else 0.0
        out.append(wl[i] + shift * (wl[i + 1] - wl[i - 1]) / 2)
    return np.array(out)


def ingest_spectrometer_map(
    path,
    gap_at_frame0_nm: float | None,
    gap_step_nm: float | None,
    prominence: float = 0.2,
    min_branch_points: int = 3,
) -> ModeMap:
    """Measured dispersion map from spectrometer frames.

    The gap of frame ``i`` is ``gap_at_frame0_nm + i * gap_step_nm``.  Both
    must be supplied: there is no way to infer a piezo calibration from the
    spectra alone.  Resonances are located per frame with sub-pixel
    interpolation and linked into branches of unknown polarization.
    """
    if gap_at_frame0_nm is None or gap_step_nm is None:
        raise UsageError(
            "a measured map needs an explicit gap calibration: set measurement.gap_at_frame0_nm "
            "and measurement.gap_step_nm"
        )
    if gap_step_nm == 0:
        raise DataError("gap_step_nm must be non-zero")
    frames, wl, counts = read_spectrometer_csv(path)
    gaps = gap_at_frame0_nm + frames * float(gap_step_nm)
    order = np.argsort(gaps)
    gaps, counts = gaps[order], counts[order]
    per_gap = [_subpixel_peaks(wl, row, prominence) for row in counts]
    branches = [b for b in _track(gaps, per_gap, "unknown") if len(b) >= min_branch_points]
    return ModeMap(gaps, wl, {"unknown": counts}, tuple(branches))


def write_spectrometer_csv(rows, path) -> Path:
    from .tmm import _fmt

    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SPECTROMETER_COLUMNS)
        for f, x, c in rows:
            w.writerow([int(f), _fmt(x), _fmt(c)])
    return path


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return float(f"{v:.12g}") if math.isfinite(v) else None
    return obj


def write_json(obj, path) -> Path:
    """JSON with floats rounded to 12 significant digits and non-finite values as null."""
    path = Path(path)
    path.write_text(json.dumps(_clean(obj), indent=2) + "\n")
    return path


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
