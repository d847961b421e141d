import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from memcav.materials import FUSED_SILICA, NB2O5, SIO2, VACUUM, Layer, Medium, StackSpec, quarter_wave_stack
from memcav.tmm import (
    airy_etalon_oracle,
    field_profile,
    layer_matrix,
    stack_matrix,
    stack_response,
    stopband,
    stopband_center,
)

N2 = Medium("n2", 2.0)


def qw(medium, wl):
    return Layer(medium, wl / (4 * medium.n_ordinary.real))


def random_stack(rng, lossy=False):
    layers = []
    for _ in range(rng.integers(0, 12)):
        n = rng.uniform(1.0, 3.5) + (1j * rng.uniform(0, 0.05) if lossy else 0)
        layers.append(Layer(Medium("r", n), rng.uniform(0, 800)))
    amb = Medium("a", rng.uniform(1.0, 2.0))
    sub = Medium("s", rng.uniform(1.0, 3.0))
    return StackSpec(amb, tuple(layers), sub)


def test_zero_thickness_is_identity():
    np.testing.assert_allclose(layer_matrix(Layer(N2, 0.0), 917.0), np.eye(2), atol=1e-15)


def test_quarter_wave_matrix():
    m = layer_matrix(qw(N2, 917.0), 917.0)
    np.testing.assert_allclose(m, [[0, 0.5j], [2j, 0]], atol=1e-15)


def test_half_wave_is_absentee():
    half = Layer(N2, 917.0 / 4.0)
    np.testing.assert_allclose(layer_matrix(half, 917.0), -np.eye(2), atol=1e-14)
    with_layer = stack_response(StackSpec(VACUUM, (half,), FUSED_SILICA), 917.0)
    without = stack_response(StackSpec(VACUUM, (), FUSED_SILICA), 917.0)
    assert with_layer.R == pytest.approx(without.R, abs=1e-14)


def test_fresnel_interface():
    resp = stack_response(StackSpec(VACUUM, (), N2), 917.0)
    assert resp.R == pytest.approx(1.0 / 9.0, abs=1e-15)
    assert resp.T == pytest.approx(8.0 / 9.0, abs=1e-15)


def test_single_quarter_wave_layer():
    # analytic: R = ((n^2 - 1)/(n^2 + 1))^2 for a QW layer between vacuum
    stack = StackSpec(VACUUM, (qw(N2, 917.0),), VACUUM)
    resp = stack_response(stack, 917.0)
    assert resp.R == pytest.approx(0.36, abs=1e-14)
    assert resp.T == pytest.approx(0.64, abs=1e-14)
    assert airy_etalon_oracle(2.0, 917.0 / 8.0, 917.0, VACUUM, VACUUM) == pytest.approx(0.64, abs=1e-12)


def test_oracle_half_wave_and_thin_limits():
    bare = 1 - ((1 - 1.45) / 2.45) ** 2
    assert airy_etalon_oracle(2.0, 917.0 / 4.0, 917.0, VACUUM, FUSED_SILICA) == pytest.approx(bare, abs=1e-12)
    assert airy_etalon_oracle(2.0, 0.0, 917.0, VACUUM, FUSED_SILICA) == pytest.approx(bare, abs=1e-12)


def test_energy_conservation_random(rng):
    for _ in range(300):
        stack = random_stack(rng, lossy=bool(rng.integers(0, 2)))
        wl = rng.uniform(400, 1600, 5)
        resp = stack_response(stack, wl)
        np.testing.assert_allclose(resp.R + resp.T + resp.A, 1.0, atol=1e-10)
        assert np.all(resp.A >= -1e-12)
        assert np.all((resp.R >= 0) & (resp.R <= 1 + 1e-12))
        np.testing.assert_allclose(resp.R, np.abs(resp.r) ** 2)
        if all(layer.medium.n_ordinary.imag == 0 for layer in stack.layers):
            assert np.all(np.abs(resp.A) < 1e-10)


def test_absorbing_layer_absorbs():
    lossy = Medium("lossy", 2.0 + 0.01j)
    resp = stack_response(StackSpec(VACUUM, (Layer(lossy, 500.0),), FUSED_SILICA), 917.0)
    assert resp.A > 1e-3


def test_composition_order(rng):
    for _ in range(20):
        s1 = random_stack(rng)
        s2 = StackSpec(s1.substrate, random_stack(rng).layers, s1.ambient)
        joined = StackSpec(s1.ambient, s1.layers + s2.layers, s2.substrate)
        wl = rng.uniform(500, 1500)
        m = stack_matrix(joined, wl)
        np.testing.assert_allclose(m, stack_matrix(s2, wl) @ stack_matrix(s1, wl), atol=1e-12, rtol=1e-12)


def test_oracle_equivalence_random(rng):
    for _ in range(100):
        n = rng.uniform(1.0, 4.0)
        d = rng.uniform(0, 3000)
        wl = rng.uniform(400, 1600)
        amb = Medium("a", rng.uniform(1.0, 2.0))
        sub = Medium("s", rng.uniform(1.0, 3.0))
        tmm = stack_response(StackSpec(amb, (Layer(Medium("x", n), d),), sub), wl).T
        assert abs(tmm - airy_etalon_oracle(n, d, wl, amb, sub)) < 1e-8


@settings(max_examples=50, deadline=None)
@given(st.floats(0.1, 10.0), st.integers(0, 2**32 - 1))
def test_scaling_invariance(scale, seed):
    rng = np.random.default_rng(seed)
    stack = random_stack(rng)
    scaled = StackSpec(
        stack.ambient, tuple(Layer(layer.medium, layer.thickness * scale) for layer in stack.layers), stack.substrate
    )
    a = stack_response(stack, 917.0)
    b = stack_response(scaled, 917.0 * scale)
    assert abs(a.R - b.R) < 1e-12
    assert abs(a.T - b.T) < 1e-12


def test_lossless_determinant(rng):
    for _ in range(50):
        layer = Layer(Medium("x", rng.uniform(1, 5)), rng.uniform(0, 2000))
        assert abs(np.linalg.det(layer_matrix(layer, rng.uniform(400, 1600))) - 1) < 1e-12


def test_degenerate_product_raises():
    from memcav.errors import NumericalDegeneracyError

    absorber = Medium("metal-ish", 1.0 + 1e3j)
    with pytest.raises(NumericalDegeneracyError):
        stack_response(StackSpec(VACUUM, (Layer(absorber, 1e6),), VACUUM), 917.0)


def test_stopband_of_empty_stack_is_not_detected():
    series = stopband(StackSpec(VACUUM, (), FUSED_SILICA), np.linspace(800, 1200, 101))
    assert stopband_center(series) is None


def test_nominal_stopband_center():
    stack = quarter_wave_stack(985.0, NB2O5, SIO2, 10, "high", VACUUM, FUSED_SILICA)
    info = stopband_center(stopband(stack, np.linspace(700, 1400, 7001)))
    assert abs(info.center - 985.0) < 1.0


def test_csv_export(tmp_path):
    series = stopband(StackSpec(VACUUM, (qw(N2, 917),), VACUUM), np.linspace(900, 930, 4))
    text = series.to_csv(tmp_path / "r.csv").read_text().splitlines()
    assert text[0] == "wavelength_nm,R,T,A,re_r,im_r,re_t,im_t"
    assert len(text) == 5


# ----- field profiles


def perfect_cavity(order, wl=917.0):
    mirror = Layer(Medium("perfect", 1e4), wl / (4 * 1e4))
    gap = Layer(VACUUM, order * wl / 2)
    return StackSpec(VACUUM, (mirror, gap, mirror), VACUUM)


def test_field_continuity_and_sampling():
    stack = quarter_wave_stack(985.0, NB2O5, SIO2, 6, "high", VACUUM, FUSED_SILICA)
    stack = StackSpec(stack.ambient, stack.layers + (Layer(Medium("sic", 2.63), 2850.0),), stack.substrate)
    prof = field_profile(stack, 917.0)
    for zb in prof.layer_boundaries:
        idx = np.flatnonzero(prof.z == zb)
        assert len(idx) == 2
        assert abs(prof.e_of_z[idx[0]] - prof.e_of_z[idx[1]]) < 1e-9
    dz = np.diff(prof.z)
    n_mid = np.maximum(prof.n_of_z[:-1].real, prof.n_of_z[1:].real)
    assert np.all(dz <= 917.0 / (40 * n_mid) + 1e-9)
    assert np.all(np.diff(prof.z) >= 0)


def test_poynting_flux_constant():
    stack = quarter_wave_stack(985.0, NB2O5, SIO2, 8, "low", VACUUM, FUSED_SILICA)
    prof = field_profile(stack, 930.0)
    flux = prof.poynting()
    assert np.ptp(flux) < 1e-9
    assert flux[0] == pytest.approx(0.5 * stack_response(stack, 930.0).T, abs=1e-12)


def test_standing_wave_nodes_match_order():
    order = 6
    stack = perfect_cavity(order)
    assert stack_response(stack, 917.0).T == pytest.approx(1.0, abs=1e-9)
    mirror_r = ((1e8 - 1) / (1e8 + 1)) ** 2
    assert mirror_r > 1 - 1e-7
    prof = field_profile(stack, 917.0)
    z0, z1 = prof.layer_boundaries[1], prof.layer_boundaries[2]
    inside = (prof.z > z0) & (prof.z < z1)
    intensity = prof.intensity[inside]
    zz = prof.z[inside] - z0
    expected = np.sin(2 * np.pi * zz / 917.0) ** 2
    np.testing.assert_allclose(intensity / intensity.max(), expected, atol=1e-6)
    # interior nodes: order - 1, plus one at each mirror
    local_min = np.flatnonzero((intensity[1:-1] < intensity[:-2]) & (intensity[1:-1] < intensity[2:]))
    assert len(local_min) == order - 1
