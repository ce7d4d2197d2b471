import json

import numpy as np
import pytest

from aeroduel.vehicle import (
    ActuatorModel,
    AeroCoefficientSet,
    PhysicalConstants,
    Vehicle,
    PERTURBATION_AMPLITUDE_MAX,
    PERTURBATION_AMPLITUDE_MIN,
    PERTURBATION_RATE_MAX,
    PERTURBATION_RATE_MIN,
)

NOMINAL_CONSTANTS = {
    "m": 4.90,
    "c_bar": 0.320,
    "b": 2.12,
    "S": 0.680,
    "D_prop": 0.406,
    "J_xx": 0.546,
    "J_yy": 0.430,
    "J_zz": 0.801,
    "J_xz": 0.066,
}

NOMINAL_AERO = {
    "C_X_alpha2": 3.82, "C_X_J": 0.111, "C_X_J2": 0.0575,
    "C_X_dE_alpha": 1.08, "C_X_0": -0.00680,
    "C_Y_beta": -0.613, "C_Y_p": -0.136, "C_Y_r": -0.284,
    "C_Y_dA": -0.131, "C_Y_dR": 0.0481, "C_Y_0": 0.0214,
    "C_Z_alpha": -4.925, "C_Z_q": 16.9, "C_Z_dE": -0.161, "C_Z_0": 0.0296,
    "C_L_beta": -0.0530, "C_L_p": -0.215, "C_L_r": 0.0326,
    "C_L_dA": -0.0758, "C_L_0": -0.0002,
    "C_M_alpha": -0.356, "C_M_alpha3": 1.85, "C_M_q": -1.59,
    "C_M_dE": -0.197, "C_M_q_dE": 9.71, "C_M_0": 0.0340,
    "C_N_beta": 0.0390, "C_N_p": 0.00470, "C_N_r": -0.0991,
    "C_N_dA": 0.0150, "C_N_dR": -0.0259, "C_N_0": 0.00004,
}


def test_nominal_physical_constants_exact(vehicle):
    for name, value in NOMINAL_CONSTANTS.items():
        assert getattr(vehicle.const, name) == value


def test_nominal_aero_coefficients_exact(vehicle):
    assert len(NOMINAL_AERO) == 32
    for name, value in NOMINAL_AERO.items():
        assert getattr(vehicle.aero, name) == value


def test_inertia_tensor_structure(vehicle):
    J = vehicle.const.inertia_tensor()
    assert J[0, 1] == J[1, 0] == J[1, 2] == J[2, 1] == 0.0
    assert J[0, 2] == J[2, 0] == -vehicle.const.J_xz
    assert np.all(np.linalg.eigvalsh(J) > 0.0)


def test_invalid_constants_rejected():
    with pytest.raises(ValueError):
        PhysicalConstants(m=-1.0)
    with pytest.raises(ValueError):
        ActuatorModel(tau=(0.0, 0.083, 0.071, 0.082))
    with pytest.raises(ValueError):
        ActuatorModel(delta_min=(0.4, -0.3, -0.35, 0.0))


def test_actuator_lag_constants(vehicle):
    assert vehicle.act.tau == (0.071, 0.083, 0.071, 0.082)


def test_pwm_throttle_at_zero(vehicle):
    # Linear map (1/60)(c1*pwm + c0) with c0 = 2910.
    cmd = vehicle.act.pwm_to_command([0.0, 0.0, 0.0, 0.0])
    assert cmd[3] == pytest.approx(2910.0 / 60.0, abs=1e-12)


def test_pwm_elevator_at_zero(vehicle):
    cmd = vehicle.act.pwm_to_command([0.0, 0.0, 0.0, 0.0])
    assert cmd[0] == pytest.approx(np.pi / 180.0 * -0.887, abs=1e-12)


def test_pwm_aileron_cubic():
    act = ActuatorModel()
    pwm = 100.0
    c3, c2, c1, c0 = act.pwm_A
    expected = np.pi / 180.0 * (c3 * pwm**3 + c2 * pwm**2 + c1 * pwm + c0)
    cmd = act.pwm_to_command([0.0, pwm, 0.0, 0.0])
    assert cmd[1] == pytest.approx(expected, abs=1e-15)


def test_perturbation_bounds_values():
    np.testing.assert_allclose(
        PERTURBATION_AMPLITUDE_MAX, [0.0258, 0.0510, 0.0872, 0.0204, 0.0330, 0.0084]
    )
    np.testing.assert_array_equal(PERTURBATION_AMPLITUDE_MIN, -PERTURBATION_AMPLITUDE_MAX)
    np.testing.assert_allclose(
        PERTURBATION_RATE_MIN, [-0.0180, -0.0289, -0.0598, -0.0128, -0.0299, -0.0044]
    )
    np.testing.assert_allclose(
        PERTURBATION_RATE_MAX, [0.0175, 0.0287, 0.0606, 0.0128, 0.0299, 0.0044]
    )


def test_vehicle_json_roundtrip(tmp_path):
    path = tmp_path / "vehicle.json"
    data = Vehicle().to_dict()
    data["const"]["m"] = 5.5
    path.write_text(json.dumps(data))
    veh = Vehicle.from_json(path)
    assert veh.const.m == 5.5
    assert veh.aero == AeroCoefficientSet()


def test_vehicle_unknown_keys_rejected():
    with pytest.raises(ValueError, match="unknown"):
        Vehicle.from_dict({"const": {"mass_typo": 1.0}})
    with pytest.raises(ValueError, match="unknown"):
        Vehicle.from_dict({"wings": {}})
