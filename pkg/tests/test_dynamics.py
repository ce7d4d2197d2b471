import math

import numpy as np
import pytest

from aeroduel.dynamics import (
    ACT,
    ATT,
    POS,
    RATE,
    STATE_DIM,
    VEL,
    AirData,
    GimbalLockError,
    LowAirspeedError,
    aero_coefficients,
    air_data,
    euler_rate_matrix,
    forces_moments,
    rk4,
    rotation_matrix,
)


def skew(w):
    return np.array([[0, -w[2], w[1]], [w[2], 0, -w[0]], [-w[1], w[0], 0]])


def rodrigues(axis_angle):
    """Exact matrix exponential of a skew matrix (independent attitude oracle)."""
    angle = np.linalg.norm(axis_angle)
    if angle < 1e-30:
        return np.eye(3)
    K = skew(axis_angle / angle)
    return np.eye(3) + math.sin(angle) * K + (1.0 - math.cos(angle)) * (K @ K)


def euler_from_matrix(R):
    phi = math.atan2(R[2, 1], R[2, 2])
    theta = -math.asin(max(-1.0, min(1.0, R[2, 0])))
    psi = math.atan2(R[1, 0], R[0, 0])
    return np.array([phi, theta, psi])


class TestRotationMatrix:
    def test_zero_attitude_identity(self):
        np.testing.assert_array_equal(rotation_matrix([0.0, 0.0, 0.0]), np.eye(3))

    def test_pure_roll_quarter_turn(self):
        R = rotation_matrix([np.pi / 2, 0.0, 0.0])
        expected = np.array([[1, 0, 0], [0, 0, -1], [0, 1, 0]], dtype=float)
        np.testing.assert_allclose(R, expected, atol=1e-15)

    def test_orthonormality_random_attitudes(self, rng):
        # 1e4 attitudes: R R^T = I and det = +1 to 1e-12.
        for _ in range(10_000):
            theta = rng.uniform([-np.pi, -np.pi / 2 + 0.01, -np.pi], [np.pi, np.pi / 2 - 0.01, np.pi])
            R = rotation_matrix(theta)
            assert np.max(np.abs(R @ R.T - np.eye(3))) < 1e-12
            assert abs(np.linalg.det(R) - 1.0) < 1e-12

    def test_small_rotation_matches_exponential(self, rng):
        # R(phi,0,0) is the exponential of a pure-x skew, etc.
        np.testing.assert_allclose(rotation_matrix([0.3, 0, 0]), rodrigues([0.3, 0, 0]), atol=1e-14)
        np.testing.assert_allclose(rotation_matrix([0, 0.2, 0]), rodrigues([0, 0.2, 0]), atol=1e-14)
        np.testing.assert_allclose(rotation_matrix([0, 0, 0.7]), rodrigues([0, 0, 0.7]), atol=1e-14)


class TestEulerRateMatrix:
    def test_zero_attitude_identity(self):
        np.testing.assert_array_equal(euler_rate_matrix(0.0, 0.0), np.eye(3))

    def test_gimbal_lock_raises(self):
        with pytest.raises(GimbalLockError):
            euler_rate_matrix(0.0, np.pi / 2)

    def test_kinematic_consistency_vs_rotation_integration(self):
        # Independent oracle: propagate the rotation matrix exactly through
        # the exponential map and finite-difference the extracted angles.
        theta0 = np.array([0.3, 0.4, 0.2])
        omega = np.array([0.37, -0.21, 0.55])
        h = 1e-6
        R0 = rotation_matrix(theta0)
        rates_fd = (
            euler_from_matrix(R0 @ rodrigues(omega * h))
            - euler_from_matrix(R0 @ rodrigues(-omega * h))
        ) / (2 * h)
        rates = euler_rate_matrix(theta0[0], theta0[1]) @ omega
        np.testing.assert_allclose(rates, rates_fd, atol=1e-6)


class TestAirData:
    def test_still_air_level_flight(self, vehicle):
        ad = air_data([20.0, 0.0, 0.0], [0.0, 0.0, 0.0], None, [0.0, 0.0, 0.0], 0.0, vehicle)
        assert ad.V_r == 20.0
        assert ad.alpha == 0.0
        assert ad.beta == 0.0
        assert ad.q_bar == pytest.approx(0.5 * 1.225 * 400.0, abs=1e-12)

    def test_collinear_tailwind(self, vehicle):
        ad = air_data([20.0, 0.0, 0.0], [0.0, 0.0, 0.0], [5.0, 0.0, 0.0], [0.0, 0.0, 0.0], 0.0, vehicle)
        assert ad.V_r == pytest.approx(15.0, abs=1e-12)

    def test_low_airspeed_raises(self, vehicle):
        with pytest.raises(LowAirspeedError):
            air_data([0.5, 0.0, 0.0], [0.0, 0.0, 0.0], None, [0.0, 0.0, 0.0], 0.0, vehicle)

    def test_envelope_ceiling_raises(self, vehicle):
        from aeroduel.dynamics import HighAirspeedError

        with pytest.raises(HighAirspeedError):
            air_data([80.0, 0.0, 0.0], [0.0, 0.0, 0.0], None, [0.0, 0.0, 0.0], 0.0, vehicle)

    def test_regressor_definitions(self, vehicle, rng):
        v = np.array([19.0, 1.5, 2.0])
        omega = np.array([0.3, -0.2, 0.15])
        ad = air_data(v, [0.0, 0.0, 0.0], None, omega, 50.0, vehicle)
        V = np.linalg.norm(v)
        assert ad.V_r == pytest.approx(V)
        assert ad.alpha == pytest.approx(np.arctan(2.0 / 19.0))
        assert ad.beta == pytest.approx(np.arcsin(1.5 / V))
        assert ad.p_hat == pytest.approx(0.3 * 2.12 / (2 * V))
        assert ad.q_hat == pytest.approx(-0.2 * 0.320 / (2 * V))
        assert ad.r_hat == pytest.approx(0.15 * 2.12 / (2 * V))
        assert ad.J_inv == pytest.approx(50.0 * 0.406 / V)


def _zero_air(vehicle):
    # AirData with every regressor zeroed; isolates the constant terms.
    return AirData(V_r=20.0, alpha=0.0, beta=0.0, q_bar=245.0,
                   p_hat=0.0, q_hat=0.0, r_hat=0.0, J_inv=0.0,
                   v_r=np.array([20.0, 0.0, 0.0]))


class TestAeroCoefficients:
    def test_constant_terms_at_zero_regressors(self, vehicle):
        C = aero_coefficients(_zero_air(vehicle), np.zeros(4), None, vehicle)
        np.testing.assert_array_equal(
            C, [-0.00680, 0.0214, 0.0296, -0.0002, 0.0340, 0.00004]
        )

    def test_perturbation_offset(self, vehicle):
        pert = np.array([0.01, 0.0, 0.0, 0.0, 0.0, 0.0])
        C = aero_coefficients(_zero_air(vehicle), np.zeros(4), pert, vehicle)
        assert C[0] == pytest.approx(0.00320, abs=1e-15)
        np.testing.assert_array_equal(C[1:], [0.0214, 0.0296, -0.0002, 0.0340, 0.00004])

    def test_normal_force_polynomial(self, vehicle):
        air = AirData(V_r=20.0, alpha=0.05, beta=0.0, q_bar=245.0,
                      p_hat=0.0, q_hat=0.0, r_hat=0.0, J_inv=0.0,
                      v_r=np.array([20.0, 0.0, 0.0]))
        C = aero_coefficients(air, np.array([0.1, 0.0, 0.0, 0.0]), None, vehicle)
        assert C[2] == pytest.approx(-4.925 * 0.05 - 0.161 * 0.1 + 0.0296, abs=1e-15)

    def test_affine_in_perturbation(self, vehicle, rng):
        # Affine map: differences are independent of the base point. The two
        # sums round independently, leaving at most ulp-level residue.
        air = _zero_air(vehicle)
        delta = np.array([0.05, -0.02, 0.01, 40.0])
        for _ in range(2000):
            d1 = rng.uniform(-0.05, 0.05, 6)
            d2 = rng.uniform(-0.05, 0.05, 6)
            lhs = (aero_coefficients(air, delta, d1 + d2, vehicle)
                   - aero_coefficients(air, delta, d2, vehicle))
            rhs = (aero_coefficients(air, delta, d1, vehicle)
                   - aero_coefficients(air, delta, None, vehicle))
            assert np.max(np.abs(lhs - rhs)) < 1e-16


class TestForcesMoments:
    def test_zero_coefficients(self, vehicle):
        F, M = forces_moments(np.zeros(6), _zero_air(vehicle), vehicle)
        np.testing.assert_array_equal(F, np.zeros(3))
        np.testing.assert_array_equal(M, np.zeros(3))

    def test_axial_force_scaling(self, vehicle):
        F, _ = forces_moments([0.1, 0, 0, 0, 0, 0], _zero_air(vehicle), vehicle)
        assert F[0] == pytest.approx(0.1 * 245.0 * 0.680, rel=1e-14)

    def test_roll_moment_scaling(self, vehicle):
        _, M = forces_moments([0, 0, 0, 0.01, 0, 0], _zero_air(vehicle), vehicle)
        assert M[0] == pytest.approx(0.01 * 245.0 * 0.680 * 2.12, rel=1e-14)

    def test_pitch_moment_uses_chord(self, vehicle):
        _, M = forces_moments([0, 0, 0, 0, 0.02, 0], _zero_air(vehicle), vehicle)
        assert M[1] == pytest.approx(0.02 * 245.0 * 0.680 * 0.320, rel=1e-14)


class TestActuatorDynamics:
    def test_fixed_point(self, vehicle):
        delta = np.array([0.1, -0.05, 0.02, 48.5])
        np.testing.assert_array_equal(vehicle.act.derivative(delta, delta), np.zeros(4))

    def test_elevator_rate(self, vehicle):
        d = vehicle.act.derivative([0.0, 0.0, 0.0, 0.0], [0.071, 0.0, 0.0, 0.0])
        assert d[0] == pytest.approx(1.0, abs=1e-12)

    def test_step_response_time_constant(self, vehicle):
        # After one time constant a first-order lag reaches 1 - 1/e of the
        # command; RK4 at dt = 0.004 (plus a sub-dt remainder to land exactly
        # on t = tau) must agree within 0.5%.
        act = vehicle.act
        cmd = np.ones(4)
        f = lambda d: act.derivative(d, cmd)
        for ch, tau in enumerate(act.tau):
            d = np.zeros(4)
            t = 0.0
            while t < tau - 1e-12:
                step = min(0.004, tau - t)
                d = rk4(f, d, step)
                t += step
            assert d[ch] == pytest.approx(1.0 - math.exp(-1.0), rel=5e-3)


class TestStateDerivative:
    def test_gravity_only_acceleration(self, model):
        x = np.zeros(STATE_DIM)
        x[ATT] = [0.3, 0.4, 0.5]
        deriv = model.rigid_body_derivative(x, np.zeros(3), np.zeros(3))
        expected = rotation_matrix(x[ATT]).T @ np.array([0.0, 0.0, model.vehicle.const.g])
        np.testing.assert_allclose(deriv[VEL], expected, atol=1e-14)
        np.testing.assert_array_equal(deriv[POS], np.zeros(3))
        np.testing.assert_array_equal(deriv[ATT.start:ATT.stop], np.zeros(3))

    def test_gyroscopic_cross_term(self, model):
        # omega = (1,0,0), M = 0: J omega = (J_xx, 0, -J_xz), and
        # (J omega) x omega = (0, -J_xz, 0)  =>  omega_dot = (0, -J_xz/J_yy, 0).
        x = np.zeros(STATE_DIM)
        x[RATE] = [1.0, 0.0, 0.0]
        deriv = model.rigid_body_derivative(x, np.zeros(3), np.zeros(3))
        J_xz = model.vehicle.const.J_xz
        J_yy = model.vehicle.const.J_yy
        np.testing.assert_allclose(deriv[RATE], [0.0, -J_xz / J_yy, 0.0], atol=1e-14)

    def test_deterministic_bitwise(self, model):
        x = np.zeros(STATE_DIM)
        x[VEL] = [20.0, 0.5, 1.2]
        x[ATT] = [0.05, 0.08, 1.0]
        x[RATE] = [0.01, -0.02, 0.005]
        x[ACT] = [0.05, 0.0, 0.0, 50.0]
        cmd = np.array([0.06, 0.01, -0.01, 52.0])
        wind = np.array([1.0, -2.0, 0.0])
        pert = np.array([0.01, -0.01, 0.02, 0.0, 0.005, 0.0])
        a = model.state_derivative(x, cmd, wind, pert)
        b = model.state_derivative(x.copy(), cmd.copy(), wind.copy(), pert.copy())
        assert np.array_equal(a, b)

    def test_fault_propagation(self, model):
        x = np.zeros(STATE_DIM)
        x[VEL] = [0.2, 0.0, 0.0]
        with pytest.raises(LowAirspeedError):
            model.state_derivative(x, np.zeros(4))
        x[VEL] = [20.0, 0.0, 0.0]
        x[ATT] = [0.0, np.pi / 2, 0.0]
        with pytest.raises(GimbalLockError):
            model.state_derivative(x, np.zeros(4))


class TestRk4:
    def test_zero_derivative_fixed_point(self):
        x = np.array([1.0, -2.0, 3.0])
        out = rk4(lambda s: np.zeros(3), x, 0.04)
        np.testing.assert_array_equal(out, x)

    def test_scalar_exponential_accuracy(self):
        # x' = -x over one step: local error of classical RK4 is dt^5/5! here.
        out = rk4(lambda s: -s, np.array([1.0]), 0.1)
        assert out[0] == pytest.approx(math.exp(-0.1), abs=2e-7)
        assert out[0] != pytest.approx(math.exp(-0.1), abs=1e-9)

    def test_rejects_nonpositive_dt(self, model):
        x = np.zeros(STATE_DIM)
        x[VEL] = [21.0, 0.0, 0.0]
        with pytest.raises(ValueError):
            model.rk4_step(x, np.zeros(4), dt=0.0)

    def test_ballistic_energy_conservation(self, model):
        # No aero forces or moments: kinetic plus potential energy
        # (1/2 m |v|^2 - m g z in NED, z down) is an invariant of the flow.
        const = model.vehicle.const

        def f(x):
            out = np.zeros(STATE_DIM)
            out[:12] = model.rigid_body_derivative(x, np.zeros(3), np.zeros(3))
            return out

        x = np.zeros(STATE_DIM)
        x[POS] = [0.0, 0.0, -10.0]
        x[VEL] = [21.0, 0.5, 1.0]
        x[ATT] = [0.1, 0.05, 0.3]
        x[RATE] = [0.3, 0.2, 0.1]

        def energy(x):
            return 0.5 * const.m * float(x[VEL] @ x[VEL]) - const.m * const.g * x[2]

        e0 = energy(x)
        for _ in range(250):
            x = rk4(f, x, 0.004)
        assert abs(energy(x) - e0) / abs(e0) < 1e-6
