import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import KATO_Y, KATO_Z, data_file_coefficients, sellmeier_by_hand
from wgpdc.dispersion import (
    IDLER_POL,
    PUMP_POL,
    SIGNAL_POL,
    Polarization,
    PolingGrating,
    SellmeierModel,
    WavelengthRangeError,
    default_model,
    grating_wavevector,
    group_index,
    index_derivative,
    refractive_index,
)

MODEL = default_model()


def test_data_file_matches_hand_copy():
    coeffs = data_file_coefficients()
    assert coeffs["Y"] == KATO_Y
    assert coeffs["Z"] == KATO_Z


@pytest.mark.parametrize("pol, coeffs", [("Y", KATO_Y), ("Z", KATO_Z)])
@pytest.mark.parametrize("lam", [403.3, 758.0, 806.6, 860.0, 1064.0])
def test_index_matches_hand_evaluation(pol, coeffs, lam):
    assert refractive_index(MODEL, pol, lam) == pytest.approx(sellmeier_by_hand(coeffs, lam), rel=1e-14)


def test_known_ktp_values():
    # widely tabulated KTP indices at 1064 / 532 nm
    assert refractive_index(MODEL, "Y", 1064) == pytest.approx(1.7455, abs=2e-4)
    assert refractive_index(MODEL, "Z", 1064) == pytest.approx(1.8297, abs=2e-4)
    assert refractive_index(MODEL, "Z", 532) == pytest.approx(1.8887, abs=2e-4)


def test_birefringence_sign_at_degeneracy():
    assert refractive_index(MODEL, Polarization.Z, 806.6) > refractive_index(MODEL, Polarization.Y, 806.6)


def test_birefringence_nonzero_380_to_900():
    lam = np.linspace(380, 900, 5201)
    diff = refractive_index(MODEL, "Z", lam) - refractive_index(MODEL, "Y", lam)
    assert np.all(np.abs(diff) > 1e-3)


def test_out_of_range_rejected_with_interval():
    with pytest.raises(WavelengthRangeError, match=r"\[380, 3540\]"):
        refractive_index(MODEL, "Z", 10_000)
    with pytest.raises(WavelengthRangeError):
        refractive_index(MODEL, "Y", [800, 200])
    with pytest.raises(WavelengthRangeError):
        refractive_index(MODEL, "Y", float("nan"))


def test_vectorized_matches_scalar():
    lam = np.array([500.0, 806.6, 1500.0])
    vec = refractive_index(MODEL, "Y", lam)
    assert vec.shape == (3,)
    assert all(vec[k] == refractive_index(MODEL, "Y", lam[k]) for k in range(3))


@pytest.mark.parametrize("pol", ["Y", "Z"])
def test_derivative_matches_finite_difference(pol):
    # five-point stencil on the closed form
    h = 0.1
    for lam in np.linspace(420, 3400, 60):
        f = [refractive_index(MODEL, pol, lam + k * h) for k in (-2, -1, 1, 2)]
        fd = (f[0] - 8 * f[1] + 8 * f[2] - f[3]) / (12 * h)
        assert fd == pytest.approx(index_derivative(MODEL, pol, lam), rel=1e-9)


def test_normal_dispersion_and_group_index():
    lam = np.linspace(400, 1600, 200)
    for pol in "YZ":
        assert np.all(index_derivative(MODEL, pol, lam) < 0)
        assert np.all(group_index(MODEL, pol, lam) > refractive_index(MODEL, pol, lam))


@settings(max_examples=200, deadline=None)
@given(st.floats(380, 3540), st.sampled_from(["Y", "Z"]))
def test_index_real_and_above_one_in_range(lam, pol):
    n = refractive_index(MODEL, pol, lam)
    assert math.isfinite(n) and n > 1


def test_type_ii_polarizations():
    assert PUMP_POL is Polarization.Y
    assert SIGNAL_POL is Polarization.Y
    assert IDLER_POL is Polarization.Z


def test_custom_file_round_trip(tmp_path):
    doc = {
        "entries": [
            {"polarization": "Y", "coefficients": [2.0, 0.01, 0.05], "valid_range_nm": [400, 2000]},
            {"polarization": "Z", "coefficients": [2.5, 0.02, 0.05], "valid_range_nm": [400, 2000]},
        ]
    }
    path = tmp_path / "m.json"
    path.write_text(json.dumps(doc))
    model = SellmeierModel.from_json(path)
    l2 = 0.8**2
    assert refractive_index(model, "Y", 800) == pytest.approx(math.sqrt(2.0 + 0.01 / (l2 - 0.05)))
    with pytest.raises(WavelengthRangeError):
        refractive_index(model, "Y", 390)


def test_file_missing_polarization(tmp_path):
    path = tmp_path / "m.json"
    path.write_text(json.dumps({"entries": [{"polarization": "Y", "coefficients": [2.0], "valid_range_nm": [400, 900]}]}))
    with pytest.raises(ValueError, match="both Y and Z"):
        SellmeierModel.from_json(path)


@pytest.mark.parametrize(
    "period, expected",
    [(8.92, 2 * math.pi / 8.92), (2 * math.pi, 1.0), (8.72, 2 * math.pi / 8.72)],
)
def test_grating_wavevector(period, expected):
    assert grating_wavevector(PolingGrating(period)) == pytest.approx(expected, rel=1e-15)


def test_grating_wavevector_value():
    # 6.283185307 / 8.92 worked by hand
    assert grating_wavevector(PolingGrating(8.92)) == pytest.approx(0.7043930, abs=1e-7)


def test_grating_third_order():
    assert grating_wavevector(PolingGrating(9.0, order=3)) == pytest.approx(3 * 2 * math.pi / 9.0)


@pytest.mark.parametrize("period, order", [(0.0, 1), (-1.0, 1), (float("nan"), 1), (8.9, 2), (8.9, 0)])
def test_grating_validation(period, order):
    with pytest.raises(ValueError):
        PolingGrating(period, order)
