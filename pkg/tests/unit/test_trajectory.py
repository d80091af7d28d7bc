"""Tests for truth trajectories."""

import numpy as np
import pytest

from uav_wteg.earth import EarthModel
from uav_wteg.errors import TrajectoryError
from uav_wteg.trajectory import Segment, SegmentKind, Trajectory, survey_track

START = np.array([np.radians(29.0), np.radians(106.0), 450.0])


@pytest.fixture(scope="module")
def earth():
    """Create the default earth model."""
    return EarthModel()


@pytest.fixture(scope="module")
def survey(earth):
    """Create the survey track."""
    return survey_track(earth)


def cruise(duration, **kwargs):
    return Segment(SegmentKind.CRUISE, duration, **kwargs)


class TestSegment:
    """Test segment validation and parsing."""

    def test_invalid_segments(self):
        """Test that bad durations, speeds and cruise turn rates are rejected."""
        with pytest.raises(TrajectoryError, match="duration"):
            cruise(0.0)
        with pytest.raises(TrajectoryError, match="speed"):
            cruise(1.0, speed=-1.0)
        with pytest.raises(TrajectoryError, match="turn rate"):
            Segment(SegmentKind.CRUISE, 1.0, turn_rate=0.1)

    def test_from_mapping(self):
        """Test parsing with angles in degrees."""
        seg = Segment.from_mapping(
            {"kind": "turn", "duration_s": 20, "turn_rate_dps": -9.0, "speed_mps": 5}
        )
        assert seg.kind is SegmentKind.TURN
        assert seg.duration == 20.0
        assert seg.turn_rate == pytest.approx(np.radians(-9.0))
        assert seg.heading is None

    def test_from_mapping_errors(self):
        """Test unknown kinds and missing durations."""
        with pytest.raises(TrajectoryError, match="Unknown segment kind"):
            Segment.from_mapping({"kind": "loop", "duration_s": 1})
        with pytest.raises(KeyError):
            Segment.from_mapping({"kind": "cruise"})


class TestTrajectory:
    """Test kinematics of composed trajectories."""

    def test_requires_segments(self, earth):
        """Test that an empty trajectory is rejected."""
        with pytest.raises(TrajectoryError, match="at least one"):
            Trajectory(START, [], earth)

    def test_velocity_discontinuity(self, earth):
        """Test that a speed jump between segments is rejected."""
        with pytest.raises(TrajectoryError, match="discontinuity"):
            Trajectory(START, [cruise(10.0, speed=5.0), cruise(10.0, speed=6.0)], earth)

    def test_inherited_fields(self, earth):
        """Test that later segments inherit speed and heading."""
        t = Trajectory(
            START,
            [
                cruise(10.0, speed=4.0, heading=np.pi / 2),
                Segment(SegmentKind.TURN, 10.0, turn_rate=0.1),
                cruise(5.0),
            ],
            earth,
        )
        assert t.duration == 25.0
        np.testing.assert_allclose(t.breakpoints, [0.0, 10.0, 20.0, 25.0])
        assert float(t.heading(20.0)) == pytest.approx(np.pi / 2 + 1.0)
        assert float(t.heading(25.0)) == pytest.approx(np.pi / 2 + 1.0)
        np.testing.assert_allclose(t.velocity(5.0), [4.0, 0.0, 0.0], atol=1e-12)

    def test_query_outside_span(self, earth):
        """Test that queries beyond the trajectory raise."""
        t = Trajectory(START, [cruise(10.0, speed=1.0)], earth)
        with pytest.raises(TrajectoryError, match="outside"):
            t.position(10.5)
        with pytest.raises(TrajectoryError, match="outside"):
            t.velocity(-1.0)

    def test_turn_kinematics(self, earth):
        """Test centripetal acceleration and body rate of a turn."""
        rate = 0.05
        t = Trajectory(
            START, [Segment(SegmentKind.TURN, 30.0, speed=10.0, heading=0.0, turn_rate=rate)], earth
        )
        acc = t.acceleration(12.0)
        assert np.linalg.norm(acc) == pytest.approx(10.0 * rate)
        assert float(np.dot(acc, t.velocity(12.0))) == pytest.approx(0.0, abs=1e-12)
        np.testing.assert_allclose(t.body_rate(12.0), [0.0, 0.0, -rate])

    def test_attitude_follows_heading(self, earth):
        """Test that the attitude matrix tracks the heading."""
        t = Trajectory(START, [cruise(5.0, speed=2.0, heading=np.pi / 2)], earth)
        np.testing.assert_allclose(
            t.attitude(1.0), [[0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 1.0]], atol=1e-12
        )
        state = t.state(1.0)
        assert state.euler.yaw == pytest.approx(np.pi / 2)
        assert state.timestamp == 1.0

    def test_climb_and_vectorized_position(self, earth):
        """Test that a climbing cruise gains height linearly."""
        t = Trajectory(START, [cruise(20.0, speed=0.0, climb_rate=2.0)], earth)
        heights = t.position(np.array([0.0, 10.0, 20.0]))[:, 2]
        np.testing.assert_allclose(heights, [450.0, 470.0, 490.0], atol=1e-6)


class TestSurveyTrack:
    """Test the shipped survey trajectory."""

    def test_duration_and_speed(self, survey):
        """Test duration and constant ground speed."""
        assert survey.duration == pytest.approx(240.0)
        speeds = np.linalg.norm(survey.velocity(np.linspace(0, 240, 25))[:, :2], axis=-1)
        np.testing.assert_allclose(speeds, 5.517798)

    def test_displacement(self, survey, earth):
        """Test the overall displacement north and west."""
        enu = earth.local_displacement(survey.position(0.0), survey.position(240.0))
        assert enu[1] == pytest.approx(1316.0, rel=0.005)
        assert enu[0] == pytest.approx(-110.05, abs=1.0)
        assert abs(enu[2]) < 1e-6
