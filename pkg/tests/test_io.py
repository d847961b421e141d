import json

import numpy as np
import pytest

from memcav.cavity import Branch, ModeMap, fit_membrane_thickness
from memcav.errors import DataError, UsageError
from memcav.io import (
    DataWarning,
    ingest_csv_trace,
    ingest_spectrometer_map,
    read_spectrometer_csv,
    write_json,
    write_spectrometer_csv,
)
from memcav.synthetic import spectrometer_frames


def write(tmp_path, text, name="t.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_units_from_header(tmp_path):
    tr = ingest_csv_trace(write(tmp_path, "time_s,volts\n0,1\n1,2\n2,4\n"))
    assert (tr.x_unit, tr.y_unit) == ("s", "V")
    np.testing.assert_array_equal(tr.y, [1, 2, 4])


def test_unit_mismatch(tmp_path):
    p = write(tmp_path, "freq_ghz,counts\n0,1\n1,2\n")
    with pytest.raises(DataError, match="unit mismatch"):
        ingest_csv_trace(p, ("ns", None))


def test_nan_row_dropped_with_line(tmp_path):
    p = write(tmp_path, "delay_ns,counts\n0,1\n1,nan\n2,3\n3,4\n")
    with pytest.warns(DataWarning, match=":3:"):
        tr = ingest_csv_trace(p)
    assert len(tr) == 3


def test_unsorted_names_first_violation(tmp_path):
    p = write(tmp_path, "delay_ns,counts\n0,1\n2,1\n1,1\n0.5,1\n")
    with pytest.raises(DataError, match=r":4:"):
        ingest_csv_trace(p)


def test_non_numeric_and_missing(tmp_path):
    with pytest.raises(DataError, match=":2:"):
        ingest_csv_trace(write(tmp_path, "delay_ns,counts\nabc,1\n"))
    with pytest.raises(UsageError):
        ingest_csv_trace(tmp_path / "nope.csv")
    with pytest.raises(DataError):
        ingest_csv_trace(write(tmp_path, "delay_ns,counts,extra\n1,2,3\n"))
    with pytest.raises(DataError):
        ingest_csv_trace(write(tmp_path, "delay_nm_bogusunit,counts\n1,2\n"))


def test_comments_and_blank_lines(tmp_path):
    tr = ingest_csv_trace(write(tmp_path, "# exported\n\ndelay_ns,counts\n0,1\n\n1,2\n"))
    assert len(tr) == 2


def test_write_json_rounds_and_nulls(tmp_path):
    p = write_json({"a": np.float64(1 / 3), "b": float("inf"), "c": np.arange(2)}, tmp_path / "x.json")
    d = json.loads(p.read_text())
    assert d == {"a": 0.333333333333, "b": None, "c": [0, 1]}


def test_spectrometer_round_trip_and_fit(tmp_path, sb_map, sb_cavity):
    rows = spectrometer_frames(sb_map)
    p = write_spectrometer_csv(rows, tmp_path / "frames.csv")
    frames, wl, counts = read_spectrometer_csv(p)
    assert counts.shape == (len(sb_map.gap_values), len(sb_map.wavelengths))
    step = sb_map.gap_values[1] - sb_map.gap_values[0]
    mm = ingest_spectrometer_map(p, sb_map.gap_values[0], step)
    assert all(b.polarization == "unknown" for b in mm.branches)
    fit = fit_membrane_thickness(mm, sb_cavity, 2500.0)
    assert fit["d"] == pytest.approx(2850.0, rel=5e-3)


def test_spectrometer_negative_step_sorted(tmp_path):
    wl = np.arange(900, 910, 0.05)
    branch = Branch("ordinary", np.array([0.0, 10.0, 20.0, 30.0]), np.array([902.0, 903.0, 904.0, 905.0]))
    mm = ModeMap(branch.gap, wl, {}, (branch,))
    rows = spectrometer_frames(mm)
    # frame 0 recorded at the largest gap
    rows = [(3 - f, x, c) for f, x, c in rows]
    p = write_spectrometer_csv(rows, tmp_path / "f.csv")
    out = ingest_spectrometer_map(p, 30.0, -10.0)
    assert len(out.branches) == 1
    np.testing.assert_allclose(out.branches[0].wavelength, branch.wavelength, atol=1e-3)


def test_spectrometer_requires_calibration(tmp_path):
    p = write(tmp_path, "frame_index,wavelength_nm,counts\n0,900,1\n")
    with pytest.raises(UsageError, match="gap calibration"):
        ingest_spectrometer_map(p, None, 15.0)
    with pytest.raises(DataError):
        read_spectrometer_csv(write(tmp_path, "frame,wl,counts\n0,900,1\n", "b.csv"))
    with pytest.raises(DataError, match="same wavelength grid"):
        read_spectrometer_csv(write(tmp_path, "frame_index,wavelength_nm,counts\n0,900,1\n1,901,1\n", "c.csv"))
