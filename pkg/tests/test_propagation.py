import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import friis_db
from raycal.errors import InvalidParameterError
from raycal.propagation import (
    MaterialProfile, ScatteringParameters, fspl_db, is_rough, penetrate_power_db,
    rayleigh_critical_height, reflect_power_db, scatter_gain, scattered_power_dbm, wavelength_m,
)

DRYWALL = MaterialProfile("drywall", 6.1, 2.8)
GLASS = MaterialProfile("glass", 3.5, 3.2)
GRANITE = MaterialProfile("granite", 13.1, None)


def test_fspl_matches_independent_friis():
    for d in (0.5, 1.0, 7.3, 120.0):
        for f in (28.0, 73.0, 142.0):
            assert fspl_db(d, f) == pytest.approx(friis_db(d, f), abs=1e-12)


def test_fspl_at_142ghz():
    assert fspl_db(1.0, 142.0) == pytest.approx(75.50, abs=0.01)


def test_fspl_at_28ghz_exact_constant():
    # with c = 299 792 458 m/s the Friis value is 61.391 dB (see the acceptance suite)
    assert fspl_db(1.0, 28.0) == pytest.approx(61.3909, abs=1e-4)


@settings(max_examples=200, deadline=None)
@given(d=st.floats(0.01, 1e4), f=st.floats(0.5, 300.0))
def test_fspl_doubling_adds_6db(d, f):
    assert fspl_db(2 * d, f) - fspl_db(d, f) == pytest.approx(20 * math.log10(2), abs=1e-9)


@pytest.mark.parametrize("d, f", [(0.0, 28.0), (-1.0, 28.0), (1.0, 0.0)])
def test_fspl_rejects_nonpositive(d, f):
    with pytest.raises(InvalidParameterError):
        fspl_db(d, f)


def test_reflection_and_penetration_examples():
    assert reflect_power_db(-50.0, DRYWALL) == pytest.approx(-56.1)
    assert reflect_power_db(-50.0, GRANITE) == pytest.approx(-63.1)
    assert reflect_power_db(-50.0, MaterialProfile("mirror", 0.0, 0.0)) == -50.0
    assert penetrate_power_db(-50.0, GLASS) == pytest.approx(-53.2)
    assert penetrate_power_db(-50.0, GRANITE) is None
    assert penetrate_power_db(-50.0, MaterialProfile("air", 0.0, 0.0)) == -50.0


@settings(max_examples=100, deadline=None)
@given(n=st.integers(0, 8), loss=st.floats(0, 30), p=st.floats(-150, 40))
def test_repeated_reflections_are_linear_in_db(n, loss, p):
    m = MaterialProfile("m", loss, loss)
    out = p
    for _ in range(n):
        out = reflect_power_db(out, m)
    assert out == pytest.approx(p - n * loss, abs=1e-9)


def test_rayleigh_critical_height_examples():
    lam28 = wavelength_m(28.0)
    assert lam28 == pytest.approx(10.7e-3, rel=1e-3)
    assert rayleigh_critical_height(lam28, 0.0) == pytest.approx(1.34e-3, abs=0.005e-3)
    assert rayleigh_critical_height(2.11e-3, math.radians(60)) == pytest.approx(0.5275e-3, abs=1e-6)
    assert rayleigh_critical_height(lam28, math.radians(89.999)) > 1.0
    with pytest.raises(InvalidParameterError):
        rayleigh_critical_height(lam28, math.pi / 2)


def test_roughness_test():
    lam = wavelength_m(28.0)
    rough = MaterialProfile("r", 5.0, None, roughness_height_m=2e-3)
    assert is_rough(rough, lam, 0.0)
    assert not is_rough(rough, lam, math.radians(70))  # h_c grows towards grazing
    assert not is_rough(rough, lam, math.pi / 2)
    assert not is_rough(DRYWALL, lam, 0.0)


def test_scatter_gain_lobe_peaks():
    p = ScatteringParameters(lambda_mix=0.8, alpha_back=10, alpha_forward=10)
    assert scatter_gain(0.0, math.pi, p) == pytest.approx(0.8)
    assert scatter_gain(math.pi, 0.0, p) == pytest.approx(0.2)
    assert scatter_gain(0.0, math.pi, p) + scatter_gain(math.pi, 0.0, p) == pytest.approx(1.0)
    single = ScatteringParameters(lambda_mix=1.0, alpha_back=1, alpha_forward=1)
    assert scatter_gain(math.pi / 2, 0.3, single) == pytest.approx(0.5)


def test_scatter_gain_rejects_out_of_range_angles():
    p = ScatteringParameters()
    with pytest.raises(InvalidParameterError):
        scatter_gain(-0.1, 0.0, p)
    with pytest.raises(InvalidParameterError):
        scatter_gain(0.0, math.pi + 0.1, p)


@pytest.mark.parametrize("kwargs", [dict(lambda_mix=1.2), dict(alpha_back=0), dict(alpha_forward=0),
                                    dict(s_coefficient=-0.1), dict(s_coefficient=1.5)])
def test_scattering_parameter_validation(kwargs):
    with pytest.raises(InvalidParameterError):
        ScatteringParameters(**kwargs)


def test_dual_lobe_monotone_over_random_samples():
    rng = np.random.default_rng(7)
    for _ in range(10_000):
        p = ScatteringParameters(float(rng.uniform(0, 1)), int(rng.integers(1, 30)), int(rng.integers(1, 30)))
        f1, f2 = np.sort(rng.uniform(0, math.pi, 2))
        b1, b2 = np.sort(rng.uniform(0, math.pi, 2))
        b = float(rng.uniform(0, math.pi))
        f = float(rng.uniform(0, math.pi))
        assert scatter_gain(f2, b, p) <= scatter_gain(f1, b, p) + 1e-15
        assert scatter_gain(f, b2, p) <= scatter_gain(f, b1, p) + 1e-15
        assert 0.0 <= scatter_gain(f1, b1, p) <= 1.0


def test_scattered_power_examples():
    p = ScatteringParameters()
    base = scattered_power_dbm(-40.0, 3.0, 1.0, 1.0, p, 28.0)
    assert base == pytest.approx(-60.0)  # S = 0.1 is -20 dB, the 1 m reference cancels
    assert scattered_power_dbm(-40.0, 3.0, 2.0, 1.0, p, 28.0) == pytest.approx(base - 20 * math.log10(2))
    assert scattered_power_dbm(-40.0, 3.0, 1.0, 0.0, p, 28.0) == -math.inf
    with pytest.raises(InvalidParameterError):
        scattered_power_dbm(-40.0, 0.0, 1.0, 1.0, p, 28.0)


@settings(max_examples=200, deadline=None)
@given(s1=st.floats(0.1, 500), s2=st.floats(0.1, 500), f=st.sampled_from([28.0, 73.0, 142.0]))
def test_two_segment_spreading_is_inverse_square_of_product(s1, s2, f):
    p = ScatteringParameters(s_coefficient=1.0)
    incident = -fspl_db(s1, f)  # 0 dBm transmitted
    out = scattered_power_dbm(incident, s1, s2, 1.0, p, f)
    const = -2 * fspl_db(1.0, f) + fspl_db(1.0, f)
    assert out == pytest.approx(const - 20 * math.log10(s1 * s2), abs=1e-9)


def test_specular_aligned_scatter_is_far_below_reflection():
    # the gap is 20 log10(1/S) - 10 log10(g) - L_ref + 20 log10(s1 s2 / (s1 + s2)); 5 m legs give ~23 dB
    p = ScatteringParameters()
    s1 = s2 = 5.0
    incident = -fspl_db(s1, 28.0)
    specular = reflect_power_db(incident, DRYWALL) - (fspl_db(s1 + s2, 28.0) - fspl_db(s1, 28.0))
    scat = scattered_power_dbm(incident, s1, s2, scatter_gain(0.0, math.pi / 2, p), p, 28.0)
    assert specular - scat >= 20.0


def test_material_validation():
    with pytest.raises(InvalidParameterError):
        MaterialProfile("x", math.inf, 1.0)
    with pytest.raises(InvalidParameterError):
        MaterialProfile("x", 1.0, 1.0, roughness_height_m=-1.0)
    assert GRANITE.opaque and not DRYWALL.opaque
