import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from scenemotion.errors import ValidationError
from scenemotion.motion import (
    Motion,
    PoseSequence,
    Trajectory,
    center_subtract,
    compose_motion,
    differentiate_trajectory,
    integrate_velocities,
)


def naive_prefix_sums(v):
    # Independent O(T^2) oracle for the integration law.
    out = np.zeros_like(v)
    for t in range(v.shape[0]):
        for i in range(t):
            out[t] += v[i]
    return out


def finite_arrays(shape, scale=1.0):
    return st.integers(0, 2**32 - 1).map(
        lambda s: np.random.default_rng(s).normal(0.0, scale, size=shape)
    )


class TestIntegrateVelocities:
    def test_zero_velocities_stay_at_origin(self):
        traj = integrate_velocities(np.zeros((4, 3)))
        assert np.array_equal(traj.positions, np.zeros((4, 3)))

    def test_constant_velocity_marches_linearly(self):
        v = np.tile([1.0, 0.0, 0.0], (4, 1))
        traj = integrate_velocities(v)
        expected = np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0], [3, 0, 0]], dtype=float)
        assert np.array_equal(traj.positions, expected)

    def test_matches_naive_prefix_sum_oracle(self):
        v = np.random.default_rng(7).normal(size=(64, 3))
        traj = integrate_velocities(v)
        assert np.abs(traj.positions - naive_prefix_sums(v)).max() <= 1e-9

    def test_rejects_non_finite(self):
        v = np.zeros((4, 3))
        v[2, 1] = np.nan
        with pytest.raises(ValidationError):
            integrate_velocities(v)

    def test_rejects_bad_shape(self):
        with pytest.raises(ValidationError):
            integrate_velocities(np.zeros((4, 2)))


class TestDifferentiateTrajectory:
    def test_inverts_integration_exactly(self):
        v = np.random.default_rng(3).normal(size=(10, 3))
        traj = integrate_velocities(v)
        assert np.array_equal(differentiate_trajectory(traj), v[:-1])

    def test_constant_origin_gives_zeros(self):
        assert np.array_equal(differentiate_trajectory(np.zeros((5, 3))), np.zeros((4, 3)))

    def test_rejects_offset_start(self):
        r = np.ones((4, 3))
        with pytest.raises(ValidationError):
            differentiate_trajectory(r)

    @given(finite_arrays((16, 3), scale=0.5))
    def test_round_trip_reproduces_positions(self, v):
        r = integrate_velocities(v).positions
        v_back = differentiate_trajectory(r)
        r_again = integrate_velocities(np.vstack([v_back, [[0.0, 0.0, 0.0]]])).positions
        assert np.abs(r_again - r).max() <= 1e-9


class TestComposeMotion:
    def _pose(self, values, root=0):
        return PoseSequence(values=values, root_index=root)

    def test_zero_pose_collapses_onto_trajectory(self, skeleton):
        traj = integrate_velocities(np.random.default_rng(0).normal(size=(6, 3)) * 0.1)
        pose = self._pose(np.zeros((3, skeleton.joint_count, 6)))
        motion = compose_motion(pose, traj)
        for j in range(skeleton.joint_count):
            assert np.array_equal(motion.joints[:, j, :], traj.positions.T)

    def test_zero_trajectory_returns_pose(self, skeleton):
        rng = np.random.default_rng(1)
        raw = rng.normal(size=(3, skeleton.joint_count, 5))
        raw[:, 0, :] = 0.0
        pose = self._pose(raw)
        motion = compose_motion(pose, integrate_velocities(np.zeros((5, 3))))
        assert np.array_equal(motion.joints, raw)

    def test_broadcast_subtraction_oracle(self, skeleton):
        rng = np.random.default_rng(2)
        raw = rng.normal(size=(3, skeleton.joint_count, 8))
        raw[:, 0, :] = 0.0
        traj = integrate_velocities(rng.normal(size=(8, 3)) * 0.2)
        motion = compose_motion(self._pose(raw), traj)
        recovered = motion.joints - traj.positions.T[:, None, :]
        assert np.abs(recovered - raw).max() <= 1e-12

    def test_length_mismatch_rejected(self, skeleton):
        pose = self._pose(np.zeros((3, skeleton.joint_count, 4)))
        traj = integrate_velocities(np.zeros((5, 3)))
        with pytest.raises(ValidationError):
            compose_motion(pose, traj)

    def test_root_track_equals_trajectory_exactly(self, skeleton):
        rng = np.random.default_rng(5)
        raw = rng.normal(size=(3, skeleton.joint_count, 7))
        raw[:, 0, :] = 0.0
        traj = integrate_velocities(rng.normal(size=(7, 3)))
        motion = compose_motion(self._pose(raw), traj)
        assert np.array_equal(motion.joints[:, 0, :], traj.positions.T)


class TestCenterSubtract:
    def test_already_centred_input(self, skeleton):
        rng = np.random.default_rng(4)
        raw = rng.normal(size=(3, skeleton.joint_count, 6))
        raw[:, skeleton.root_index, :] = 0.0
        pose, track = center_subtract(raw, skeleton)
        assert np.array_equal(track, np.zeros((6, 3)))
        assert np.array_equal(pose.values, raw)

    def test_single_frame_root(self, skeleton):
        raw = np.zeros((3, skeleton.joint_count, 1))
        raw[:, skeleton.root_index, 0] = [1.0, 2.0, 3.0]
        pose, track = center_subtract(raw, skeleton)
        assert np.array_equal(track, [[1.0, 2.0, 3.0]])
        assert np.all(pose.values[:, skeleton.root_index, :] == 0.0)

    def test_joint_count_mismatch(self, skeleton):
        with pytest.raises(ValidationError):
            center_subtract(np.zeros((3, skeleton.joint_count + 1, 4)), skeleton)

    @given(finite_arrays((3, 19, 6)))
    def test_round_trip_identity(self, raw):
        from scenemotion.skeleton import default_skeleton

        pose, track = center_subtract(raw, default_skeleton())
        rebuilt = pose.values + track.T[:, None, :]
        assert np.abs(rebuilt - raw).max() <= 1e-12


class TestContainers:
    def test_trajectory_rejects_inconsistent_positions(self):
        v = np.ones((4, 3))
        r = np.zeros((4, 3))
        with pytest.raises(ValidationError):
            Trajectory(velocities=v, positions=r)

    def test_pose_rejects_nonzero_root(self):
        values = np.ones((3, 5, 4))
        with pytest.raises(ValidationError):
            PoseSequence(values=values, root_index=0)

    def test_motion_from_joints_round_trip(self, skeleton):
        rng = np.random.default_rng(8)
        raw = rng.normal(size=(3, skeleton.joint_count, 9))
        motion = Motion.from_joints(raw, skeleton)
        assert np.abs(motion.joints - raw).max() == 0.0
        assert np.all(motion.pose.values[:, skeleton.root_index, :] == 0.0)


@given(finite_arrays((12, 3)))
def test_prefix_sum_law(v):
    traj = integrate_velocities(v)
    assert np.array_equal(differentiate_trajectory(traj), v[:-1])
    assert np.abs(differentiate_trajectory(traj.positions) - v[:-1]).max() <= 1e-9
