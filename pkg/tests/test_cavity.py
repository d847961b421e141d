import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from memcav.cavity import (
    Branch,
    CavityConfig,
    ModeMap,
    avoided_crossings,
    character_tag,
    classify_modes,
    coupling_period,
    dispersion_map,
    find_resonances,
    finesse_from_losses,
    finesse_spectrum,
    fit_membrane_thickness,
    loss_budget,
    membrane_character,
    mirror_transmissions,
    transmission,
    write_finesse_csv,
)
from memcav.errors import DataError, InsufficientDataError
from memcav.materials import FUSED_SILICA, VACUUM, Layer, Medium, StackSpec
from memcav.tmm import airy_etalon_oracle

GLASS = StackSpec(VACUUM, (), FUSED_SILICA)


def bare_interfaces(gap, membrane=None):
    return CavityConfig(GLASS, gap, membrane, GLASS)


# -- finesse from losses -------------------------------------------------------


def test_finesse_from_losses_values():
    assert finesse_from_losses(222, 25, 0) == pytest.approx(2 * np.pi / 247e-6, rel=1e-12)
    assert 25200 <= finesse_from_losses(222, 25, 0) <= 25700
    assert 6150 <= finesse_from_losses(900, 100, 0) <= 6350


def test_finesse_from_losses_limits():
    with pytest.raises(ZeroDivisionError):
        finesse_from_losses(0, 0, 0)
    with pytest.raises(DataError):
        finesse_from_losses(-1, 10, 0)


@given(st.floats(1, 1e4), st.floats(1, 1e4), st.floats(0, 1e3))
def test_finesse_decreases_with_extra_loss(t1, t2, extra):
    assert finesse_from_losses(t1, t2, extra + 1.0) < finesse_from_losses(t1, t2, extra)


# -- transmission against independent oracles ----------------------------------


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 5000), st.floats(500, 1500))
def test_empty_mirror_cavity_is_airy_etalon(gap, wl):
    T = transmission(bare_interfaces(gap), wl)
    assert T == pytest.approx(airy_etalon_oracle(1.0, gap, wl, FUSED_SILICA, FUSED_SILICA), abs=1e-10)


def test_membrane_only_is_airy_etalon():
    mem = Layer(Medium("m", 2.6), 2850.0)
    wl = np.linspace(900, 1000, 37)
    T = transmission(bare_interfaces(0.0, mem), wl)
    ref = [airy_etalon_oracle(2.6, 2850.0, x, FUSED_SILICA, FUSED_SILICA) for x in wl]
    np.testing.assert_allclose(T, ref, atol=1e-10)


def test_transmission_broadcasts_over_gap(sb_cavity):
    wl = np.linspace(910, 920, 7)
    gaps = np.array([0.0, 100.0, 250.0])
    grid = transmission(sb_cavity, wl[None, :], "ordinary", gap=gaps[:, None])
    assert grid.shape == (3, 7)
    for i, g in enumerate(gaps):
        np.testing.assert_allclose(grid[i], transmission(sb_cavity.with_gap(g), wl, "ordinary"), rtol=1e-12)


def test_zero_thickness_membrane_is_dropped(sb_cavity):
    cav = CavityConfig(sb_cavity.fiber_mirror, 500.0, Layer(sb_cavity.membrane.medium, 0.0), sb_cavity.planar_mirror)
    assert cav.membrane is None
    with pytest.raises(DataError):
        CavityConfig(sb_cavity.fiber_mirror, -1.0, None, sb_cavity.planar_mirror)


def test_bare_cavity_linewidth_matches_loss_finesse():
    from memcav.config import build_cavity, load_preset

    # long gap: several orders inside the flat part of the stopband
    cav = build_cavity(load_preset("bare")).with_gap(100_000.0)
    res = find_resonances(cav, (982.0, 990.0), "ordinary")
    assert len(res) >= 2
    a, b = res[0], res[1]
    fsr = b.wavelength - a.wavelength
    t1, t2 = mirror_transmissions(cav, a.wavelength, "ordinary")
    expected = finesse_from_losses(t1 * 1e6, t2 * 1e6)
    assert fsr / a.fwhm == pytest.approx(expected, rel=0.02)
    assert a.quality_factor == pytest.approx(a.wavelength / a.fwhm)


def test_find_resonances_sorted_in_range(sb_cavity):
    res = find_resonances(sb_cavity, (880, 1000), "extraordinary")
    wl = [r.wavelength for r in res]
    assert wl == sorted(wl)
    assert all(880 <= x <= 1000 for x in wl)
    assert any(abs(x - 918.65) < 0.05 for x in wl)
    with pytest.raises(DataError):
        find_resonances(sb_cavity, (1000, 900))


# -- finesse spectrum ----------------------------------------------------------


def test_finesse_spectrum_sb(sb_cavity, tmp_path):
    wl = np.arange(900, 1000.01, 0.1)
    spectra = [finesse_spectrum(sb_cavity, wl, pol, threads=2) for pol in ("ordinary", "extraordinary")]
    ext = spectra[1]
    assert ext.finesse.max() == pytest.approx(40000, rel=0.25)
    assert ext.at(980.0) == pytest.approx(44500, rel=0.02)
    assert len(ext.local_maxima()) >= 2
    total = ext.t_fiber + ext.t_planar + 70e-6
    np.testing.assert_allclose(ext.finesse, 2 * np.pi / total)
    path = write_finesse_csv(spectra, tmp_path / "f.csv")
    assert len(path.read_text().splitlines()) == 1 + 2 * len(wl)


def test_finesse_spectrum_threads_invariant(sb_cavity):
    wl = np.arange(900, 1000.01, 0.5)
    a = finesse_spectrum(sb_cavity, wl, "ordinary", threads=1).finesse
    b = finesse_spectrum(sb_cavity, wl, "ordinary", threads=3).finesse
    np.testing.assert_array_equal(a, b)


def test_finesse_spectrum_rejects_bad_grid(sb_cavity):
    with pytest.raises(DataError):
        finesse_spectrum(sb_cavity, [950, 940])


def test_loss_budget(sb_cavity, caplog):
    lb = loss_budget(40000, sb_cavity, 980.0)
    assert lb.T1_ppm + lb.T2_ppm + lb.inferred_extra_loss_ppm == pytest.approx(2 * np.pi / 40000 * 1e6)
    assert lb.inferred_extra_loss_ppm == pytest.approx(85.8, abs=1.0)
    with caplog.at_level(logging.WARNING):
        neg = loss_budget(1e6, sb_cavity, 980.0)
    assert neg.inferred_extra_loss_ppm < 0
    assert "negative excess loss" in caplog.text


# -- dispersion maps -----------------------------------------------------------


def test_map_has_both_polarization_families(sb_map):
    for pol in ("ordinary", "extraordinary"):
        branches = sb_map.branches_for(pol)
        assert len(branches) >= 3
        for b in branches:
            assert np.all(np.diff(b.gap) > 0)
            assert np.all(np.diff(b.wavelength) > 0)
    assert sb_map.transmission["ordinary"].shape == (len(sb_map.gap_values), len(sb_map.wavelengths))


def test_map_shows_avoided_crossings(sb_map):
    crossings = np.concatenate([avoided_crossings(b) for b in sb_map.branches])
    assert crossings.size >= 3
    # slopes collapse at the anticrossings relative to the air-like parts
    slopes = np.concatenate([b.slope() for b in sb_map.branches])
    assert slopes.min() < 0.3 * slopes.max()


def test_coupling_period_scales_with_thickness(sb_map, sa_map):
    for pol in ("ordinary", "extraordinary"):
        ratio = coupling_period(sa_map, pol).wavenumber_period / coupling_period(sb_map, pol).wavenumber_period
        assert ratio == pytest.approx(2850.0 / 6200.0, rel=0.10)


def test_map_csv_and_json(sb_map, tmp_path):
    c, j = sb_map.write(tmp_path / "m.csv", tmp_path / "m.json")
    head = c.read_text().splitlines()[0]
    assert head == "gap_nm,wavelength_nm,T,polarization"
    assert '"branches"' in j.read_text()


def test_dispersion_map_validates(sb_cavity):
    with pytest.raises(DataError):
        dispersion_map(sb_cavity, [10, 5], [900, 910])
    with pytest.raises(DataError):
        dispersion_map(sb_cavity, [-10, 5], [900, 910])


# -- classification ------------------------------------------------------------


def test_character_thresholds():
    assert character_tag(0.1) == "air_like"
    assert character_tag(0.5) == "mixed"
    assert character_tag(0.9) == "dielectric_like"


def test_contact_resonance_is_air_like(sb_cavity):
    assert membrane_character(sb_cavity, 0.0, 918.6468, "extraordinary") < 0.35


def test_bare_cavity_character_is_zero(sb_cavity):
    assert membrane_character(sb_cavity.without_membrane(), 500.0, 917.0, "ordinary") == 0.0


def test_classify_tags_every_point(sb_cavity, sb_map):
    small = ModeMap.from_branches(b for b in sb_map.branches[:2])
    tagged = classify_modes(small, sb_cavity)
    for b in tagged.branches:
        assert len(b.character) == len(b)
        assert set(b.character) <= {"air_like", "mixed", "dielectric_like"}
        assert np.all((b.membrane_character >= 0) & (b.membrane_character <= 1 + 1e-12))


# -- thickness fit -------------------------------------------------------------


def _unknown(mm):
    return ModeMap.from_branches(Branch("unknown", b.gap, b.wavelength) for b in mm.branches)


def test_thickness_fit_recovers_sb(sb_map, sb_cavity):
    fit = fit_membrane_thickness(sb_map, sb_cavity, 2500.0)
    assert fit["d"] == pytest.approx(2850.0, rel=1e-6)
    assert fit["gap_offset"] == pytest.approx(0.0, abs=1e-3)
    assert fit.metadata["identifiable"]


def test_thickness_fit_unknown_polarization(sa_map, sa_cavity):
    fit = fit_membrane_thickness(_unknown(sa_map), sa_cavity, 5800.0)
    assert fit["d"] == pytest.approx(6200.0, rel=1e-5)
    assert fit.metadata["n_unknown_polarization"] == fit.metadata["n_points"]


def test_thickness_fit_with_gap_offset(sb_cavity):
    gaps = np.arange(0, 600, 15.0) + 40.0
    mm = dispersion_map(sb_cavity, gaps, np.arange(900, 960, 0.5), threads=2)
    shifted = ModeMap.from_branches(Branch(b.polarization, b.gap - 40.0, b.wavelength) for b in mm.branches)
    fit = fit_membrane_thickness(shifted, sb_cavity, 2700.0)
    assert fit["d"] == pytest.approx(2850.0, rel=1e-5)
    assert fit["gap_offset"] == pytest.approx(40.0, abs=0.05)


def test_thickness_fit_without_membrane_is_unidentifiable(sb_map, sb_cavity):
    fit = fit_membrane_thickness(sb_map, sb_cavity.without_membrane(), 2850.0)
    assert not fit.metadata["identifiable"]
    assert fit.sigma("d") == np.inf
    assert fit["d"] == 2850.0


def test_thickness_fit_needs_data(sb_map, sb_cavity):
    with pytest.raises(InsufficientDataError):
        fit_membrane_thickness(ModeMap.from_branches(sb_map.branches[:1]), sb_cavity, 2850.0)
    with pytest.raises(DataError):
        fit_membrane_thickness(sb_map, sb_cavity, -5.0)
