"""Tests for the strapdown inertial navigation mechanization."""

import numpy as np
import pytest

from uav_wteg.earth import EarthModel
from uav_wteg.errors import NavigationError
from uav_wteg.sins import (
    EulerAngles,
    ImuErrorModel,
    ImuSample,
    NavState,
    attitude_matrix,
    dead_reckon,
    euler_angles,
    orthonormality_error,
    predict_slot_positions,
    propagate_attitude,
    read_trace_csv,
    simulate_imu,
    step,
    update_position,
    update_velocity,
    wrap_angle,
    write_trace_csv,
)
from uav_wteg.trajectory import Segment, SegmentKind, Trajectory, survey_track

START = np.array([np.radians(29.0), np.radians(106.0), 450.0])
ZERO = np.zeros(3)


@pytest.fixture(scope="module")
def still_earth():
    """Non-rotating earth with constant gravity for analytic cases."""
    return EarthModel(rotation_rate=0.0, gravity=9.8)


@pytest.fixture(scope="module")
def earth():
    """Create the default earth model."""
    return EarthModel()


def level_state(timestamp=0.0, velocity=ZERO):
    return NavState(np.eye(3), velocity, START, timestamp)


def sample(t0, dt, dtheta=ZERO, dv=ZERO):
    """Two identical sub-samples of the given increments."""
    half_theta = np.asarray(dtheta, dtype=float) / 2
    half_v = np.asarray(dv, dtype=float) / 2
    return ImuSample(t0, t0 + dt, half_theta, half_theta, half_v, half_v)


class TestTypes:
    """Test navigation value types."""

    def test_wrap_angle(self):
        """Test wrapping into (-pi, pi]."""
        assert wrap_angle(3 * np.pi / 2) == pytest.approx(-np.pi / 2)
        assert wrap_angle(-np.pi) == np.pi
        assert wrap_angle(0.25) == pytest.approx(0.25)

    def test_euler_validation(self):
        """Test that out-of-range Euler angles are rejected."""
        with pytest.raises(NavigationError, match="Pitch"):
            EulerAngles(2.0, 0.0, 0.0)
        with pytest.raises(NavigationError, match="yaw"):
            EulerAngles(0.0, 0.0, -np.pi)
        with pytest.raises(NavigationError, match="finite"):
            EulerAngles(0.0, np.nan, 0.0)

    def test_nav_state_validation(self):
        """Test shape and range checks of navigation states."""
        with pytest.raises(NavigationError, match="3x3"):
            NavState(np.eye(2), ZERO, START)
        with pytest.raises(NavigationError, match="velocity"):
            NavState(np.eye(3), [1.0, 2.0], START)
        with pytest.raises(NavigationError, match="Latitude"):
            NavState(np.eye(3), ZERO, [2.0, 0.0, 0.0])

    def test_imu_sample(self):
        """Test sample interval checks and row conversion."""
        with pytest.raises(NavigationError, match="positive"):
            ImuSample(1.0, 1.0, ZERO, ZERO, ZERO, ZERO)
        s = ImuSample(0.0, 0.1, [1, 2, 3], [4, 5, 6], [7, 8, 9], [10, 11, 12])
        row = s.to_row()
        assert row[:2] == [0.0, 0.1]
        again = ImuSample.from_row(row)
        np.testing.assert_array_equal(again.dv2, [10, 11, 12])
        with pytest.raises(NavigationError, match="values"):
            ImuSample.from_row(row[:-1])

    def test_error_models(self):
        """Test the calibrated and zero error models."""
        assert ImuErrorModel().is_zero
        calibrated = ImuErrorModel.calibrated(seed=3)
        assert not calibrated.is_zero
        np.testing.assert_allclose(calibrated.accel_bias, [0.0, 0.002, 0.003])
        other = calibrated.with_seed(9)
        assert other.seed == 9
        np.testing.assert_array_equal(other.gyro_bias, calibrated.gyro_bias)
        with pytest.raises(NavigationError, match="non-negative"):
            ImuErrorModel(gyro_noise=-1.0)


class TestAttitude:
    """Test attitude matrices and the attitude update."""

    def test_attitude_matrix_examples(self):
        """Test reference attitude matrices."""
        np.testing.assert_allclose(attitude_matrix(EulerAngles(0.0, 0.0, 0.0)), np.eye(3))
        np.testing.assert_allclose(
            attitude_matrix(EulerAngles(0.0, 0.0, np.pi / 2)),
            [[0, 1, 0], [-1, 0, 0], [0, 0, 1]],
            atol=1e-15,
        )

    @pytest.mark.parametrize(
        "angles", [(0.1, -0.2, 0.3), (-0.5, 1.2, -2.8), (0.0, 0.0, np.pi), (1.0, -3.0, 0.01)]
    )
    def test_euler_round_trip(self, angles):
        """Test that Euler angles survive a trip through the matrix."""
        a = EulerAngles(*angles)
        c = attitude_matrix(a)
        assert orthonormality_error(c) < 1e-12
        b = euler_angles(c)
        assert (b.pitch, b.roll, b.yaw) == pytest.approx(angles, abs=1e-12)

    def test_rejects_non_orthonormal(self, still_earth):
        """Test that a corrupted attitude is refused."""
        bad = NavState(np.eye(3) * 1.01, ZERO, START)
        with pytest.raises(NavigationError, match="not a rotation"):
            propagate_attitude(bad, sample(0.0, 0.1), still_earth)

    def test_positive_z_rotation_decreases_yaw(self, still_earth):
        """Test the sign convention of body z rotations."""
        c = propagate_attitude(level_state(), sample(0.0, 0.1, [0.0, 0.0, 0.01]), still_earth)
        assert euler_angles(c).yaw == pytest.approx(-0.01, abs=1e-12)

    def test_constant_rate_yaw(self, still_earth):
        """Test that a constant z rate integrates to -omega * T."""
        omega, dt, n = 0.2, 0.1, 50
        trace = [sample(i * dt, dt, [0.0, 0.0, omega * dt]) for i in range(n)]
        states = dead_reckon(level_state(), trace, still_earth)
        assert states[-1].euler.yaw == pytest.approx(wrap_angle(-omega * dt * n), abs=1e-9)
        assert max(orthonormality_error(s.attitude) for s in states) < 1e-9

    def test_gyro_bias_drift(self, earth):
        """Test that a z gyro bias on a stationary UAV drifts yaw by -b*t."""
        b, sample_dt, duration = 1e-4, 0.05, 20.0
        truth = Trajectory(START, [Segment(SegmentKind.CRUISE, 30.0, speed=0.0)], earth)
        err = ImuErrorModel(gyro_bias=[0.0, 0.0, b])
        trace = simulate_imu(truth, err, sample_dt, duration)
        states = dead_reckon(truth.state(0.0), trace, earth)
        assert states[-1].euler.yaw == pytest.approx(-b * duration, rel=0.01)


class TestVelocityPosition:
    """Test the velocity and position updates."""

    def test_free_fall(self, still_earth):
        """Test that zero specific force gives V_U = -g t."""
        states = dead_reckon(level_state(), [sample(0.0, 0.1), sample(0.1, 0.1)], still_earth)
        np.testing.assert_allclose(states[-1].velocity, [0.0, 0.0, -1.96], atol=1e-12)
        assert states[-1].position[2] == pytest.approx(450.0 - 0.5 * 9.8 * 0.2**2)

    def test_gravity_reaction_keeps_still(self, still_earth):
        """Test that the gravity reaction keeps a level UAV at rest."""
        s = sample(0.0, 0.1, dv=[0.0, 0.0, 0.98])
        prev = level_state()
        v = update_velocity(prev, s, prev.attitude, still_earth)
        np.testing.assert_allclose(v, ZERO, atol=1e-12)

    def test_pure_rotation_keeps_speed(self):
        """Test that rotation without specific force or gravity conserves speed."""
        weightless = EarthModel(rotation_rate=0.0, gravity=0.0)
        prev = NavState(np.eye(3), [3.0, 4.0, 0.0], START)
        s = sample(0.0, 0.1, [0.0, 0.0, 0.02])
        v = update_velocity(prev, s, propagate_attitude(prev, s, weightless), weightless)
        assert np.linalg.norm(v) == pytest.approx(5.0, rel=1e-6)

    def test_position_update(self, earth):
        """Test the northward position increment."""
        prev = level_state(velocity=[0.0, 10.0, 0.0])
        p = update_position(prev, prev.velocity, prev.velocity, 1.0, earth)
        r_m, _ = earth.radii(START[0])
        assert p[0] - START[0] == pytest.approx(10.0 / (float(r_m) + 450.0), rel=1e-6)
        assert p[1] == START[1]
        with pytest.raises(NavigationError, match="positive"):
            update_position(prev, prev.velocity, prev.velocity, 0.0, earth)

    def test_step_timestamp(self, still_earth):
        """Test that a step lands on the sample end time."""
        assert step(level_state(), sample(0.0, 0.1), still_earth).timestamp == pytest.approx(0.1)


class TestDeadReckoning:
    """Test whole-trace navigation."""

    def test_empty_trace(self, earth):
        """Test that an empty trace returns the initial state."""
        init = level_state()
        assert dead_reckon(init, [], earth) == [init]

    def test_gap_detected(self, earth):
        """Test that gaps in the trace are rejected."""
        with pytest.raises(NavigationError, match="gap-free"):
            dead_reckon(level_state(), [sample(0.0, 0.1), sample(0.2, 0.1)], earth)

    def test_survey_round_trip(self, earth):
        """Test that a zero-error trace of the survey track reproduces the truth."""
        truth = survey_track(earth)
        trace = simulate_imu(truth, ImuErrorModel(), 0.05, 240.0)
        states = dead_reckon(truth.state(0.0), trace, earth)
        assert len(states) == 2401
        final = earth.local_displacement(truth.position(240.0), states[-1].position)
        assert np.linalg.norm(final) < 1.0
        north = earth.local_displacement(truth.position(0.0), states[-1].position)[1]
        assert north == pytest.approx(1316.0, rel=0.005)

    def test_determinism(self, earth):
        """Test that the same seed gives bit-identical traces and states."""
        truth = survey_track(earth)
        err = ImuErrorModel.calibrated(seed=5)
        a = simulate_imu(truth, err, 0.05, 10.0)
        b = simulate_imu(truth, err, 0.05, 10.0)
        assert [s.to_row() for s in a] == [s.to_row() for s in b]
        pa = dead_reckon(truth.state(0.0), a, earth)[-1].position
        pb = dead_reckon(truth.state(0.0), b, earth)[-1].position
        np.testing.assert_array_equal(pa, pb)
        c = simulate_imu(truth, err.with_seed(6), 0.05, 10.0)
        assert [s.to_row() for s in a] != [s.to_row() for s in c]


class TestSimulateImu:
    """Test IMU trace generation."""

    def test_stationary_increments(self, earth):
        """Test that a resting UAV senses only earth rate and gravity reaction."""
        truth = Trajectory(START, [Segment(SegmentKind.CRUISE, 5.0, speed=0.0)], earth)
        trace = simulate_imu(truth, ImuErrorModel(), 0.05, 1.0)
        assert len(trace) == 10
        g = float(earth.gravity_magnitude(START[0], START[2]))
        for s in trace:
            assert s.dv1[2] == pytest.approx(g * 0.05, rel=1e-6)
            assert abs(s.dv1[0]) < 1e-9
            assert np.linalg.norm(s.dtheta1) == pytest.approx(7.292115e-5 * 0.05, rel=1e-6)

    def test_straight_line_no_rotation(self):
        """Test that a straight cruise on a still earth has no angular increments."""
        flat = EarthModel(rotation_rate=0.0)
        truth = Trajectory(START, [Segment(SegmentKind.CRUISE, 5.0, speed=8.0, heading=0.3)], flat)
        for s in simulate_imu(truth, ImuErrorModel(), 0.05, 2.0):
            # Only the transport rate remains, about 6e-8 rad per sub-sample.
            assert np.abs(s.dtheta1).max() < 1e-7

    def test_invalid_durations(self, earth):
        """Test duration and step validation."""
        truth = Trajectory(START, [Segment(SegmentKind.CRUISE, 5.0, speed=0.0)], earth)
        with pytest.raises(NavigationError, match="multiple"):
            simulate_imu(truth, ImuErrorModel(), 0.05, 0.25)
        with pytest.raises(NavigationError, match="exceeds"):
            simulate_imu(truth, ImuErrorModel(), 0.05, 6.0)
        with pytest.raises(NavigationError, match="positive"):
            simulate_imu(truth, ImuErrorModel(), 0.0, 1.0)
        assert simulate_imu(truth, ImuErrorModel(), 0.05, 0.0) == []

    def test_trace_csv_round_trip(self, earth, tmp_path):
        """Test writing and reading a trace file."""
        truth = survey_track(earth)
        trace = simulate_imu(truth, ImuErrorModel.calibrated(1), 0.05, 1.0)
        path = tmp_path / "trace.csv"
        write_trace_csv(trace, path)
        again = read_trace_csv(path)
        assert [s.to_row() for s in again] == [s.to_row() for s in trace]

    def test_trace_csv_bad_header(self, tmp_path):
        """Test that a foreign CSV is rejected."""
        path = tmp_path / "bad.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(NavigationError, match="columns"):
            read_trace_csv(path)


class TestPredictSlotPositions:
    """Test slot-start position prediction."""

    def test_stationary_fleet(self, earth):
        """Test that a stationary fleet keeps its positions."""
        fleet = []
        for east in (0.0, 1000.0):
            start = earth.enu_offset_to_geodetic(START, [east, 0.0, 0.0])
            truth = Trajectory(start, [Segment(SegmentKind.CRUISE, 10.0, speed=0.0)], earth)
            fleet.append((truth.state(0.0), simulate_imu(truth, ImuErrorModel(), 0.05, 8.0)))
        positions = predict_slot_positions(fleet, 4.0, earth)
        assert positions.shape == (2, 2, 3)
        np.testing.assert_allclose(positions[0], positions[1], atol=1e-3)

    def test_moving_uav_matches_truth(self, earth):
        """Test the slot-2 prediction of the survey track without sensor errors."""
        truth = survey_track(earth)
        trace = simulate_imu(truth, ImuErrorModel(), 0.05, 8.0)
        positions = predict_slot_positions([(truth.state(0.0), trace)], 4.0, earth)
        expected = earth.geodetic_to_ecef(truth.position(4.0))
        assert np.linalg.norm(positions[1, 0] - expected) < 0.1

    def test_short_trace(self, earth):
        """Test that a trace shorter than both slots is rejected."""
        truth = survey_track(earth)
        trace = simulate_imu(truth, ImuErrorModel(), 0.05, 4.0)
        with pytest.raises(NavigationError, match="needs"):
            predict_slot_positions([(truth.state(0.0), trace)], 4.0, earth)
