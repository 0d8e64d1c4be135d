"""Containers for trajectories, pose sequences and composed motions.

Conventions: trajectories are per-frame root velocities V (T, 3) integrated
into positions R (T, 3) by prefix sums, so R[0] is the origin and the last
velocity only extrapolates to a hypothetical frame T.  Pose sequences P are
(3, J, T) with the root subtracted per frame, and a composed motion is the
broadcast sum X = P + R in the camera frame.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .skeleton import SkeletonGraph

_ORIGIN_ATOL = 1e-9


def _as_float_array(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if not np.isfinite(arr).all():
        raise ValidationError(f"{name} contains non-finite values")
    return arr


@dataclass(frozen=True)
class Trajectory:
    """Root velocities and their integrated positions, both (T, 3) metres."""

    velocities: np.ndarray
    positions: np.ndarray

    def __post_init__(self):
        v = _as_float_array(self.velocities, "velocities")
        r = _as_float_array(self.positions, "positions")
        if v.ndim != 2 or v.shape[1] != 3 or v.shape[0] < 1:
            raise ValidationError(f"velocities must be (T, 3), got {v.shape}")
        if r.shape != v.shape:
            raise ValidationError("positions must match velocities in shape")
        if np.abs(r[0]).max() > _ORIGIN_ATOL:
            raise ValidationError("positions must start at the origin")
        if v.shape[0] > 1 and np.abs(np.diff(r, axis=0) - v[:-1]).max() > _ORIGIN_ATOL:
            raise ValidationError("positions do not match the prefix sums of velocities")
        v.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "velocities", v)
        object.__setattr__(self, "positions", r)

    @property
    def length(self) -> int:
        return self.velocities.shape[0]


@dataclass(frozen=True)
class PoseSequence:
    """Root-relative joint positions, (3, J, T) metres with a zero root track."""

    values: np.ndarray
    root_index: int = 0

    def __post_init__(self):
        p = _as_float_array(self.values, "pose values")
        if p.ndim != 3 or p.shape[0] != 3:
            raise ValidationError(f"pose values must be (3, J, T), got {p.shape}")
        if not (0 <= self.root_index < p.shape[1]):
            raise ValidationError("root_index outside the joint range")
        if np.any(p[:, self.root_index, :] != 0.0):
            raise ValidationError("pose sequence is not center subtracted")
        p.setflags(write=False)
        object.__setattr__(self, "values", p)

    @property
    def joint_count(self) -> int:
        return self.values.shape[1]

    @property
    def length(self) -> int:
        return self.values.shape[2]


@dataclass(frozen=True)
class Motion:
    """A composed motion X = P + R with references to its two factors."""

    joints: np.ndarray
    pose: PoseSequence
    root_track: np.ndarray

    def __post_init__(self):
        x = _as_float_array(self.joints, "joints")
        track = _as_float_array(self.root_track, "root track")
        if x.shape != self.pose.values.shape:
            raise ValidationError("joints and pose disagree in shape")
        if track.shape != (x.shape[2], 3):
            raise ValidationError("root track must be (T, 3)")
        recomposed = self.pose.values + track.T[:, None, :]
        if np.abs(x - recomposed).max() > _ORIGIN_ATOL:
            raise ValidationError("joints do not equal pose plus root track")
        x.setflags(write=False)
        track.setflags(write=False)
        object.__setattr__(self, "joints", x)
        object.__setattr__(self, "root_track", track)

    @property
    def length(self) -> int:
        return self.joints.shape[2]

    @property
    def joint_count(self) -> int:
        return self.joints.shape[1]

    @classmethod
    def from_joints(cls, joints, graph: SkeletonGraph) -> "Motion":
        pose, track = center_subtract(joints, graph)
        return cls(joints=np.asarray(joints, dtype=np.float64), pose=pose, root_track=track)


def integrate_velocities(velocities) -> Trajectory:
    """Prefix-sum velocities into positions; R[0] = 0, V[T-1] only extrapolates."""
    v = _as_float_array(velocities, "velocities")
    if v.ndim != 2 or v.shape[1] != 3 or v.shape[0] < 1:
        raise ValidationError(f"velocities must be (T, 3) with T >= 1, got {v.shape}")
    r = np.zeros_like(v)
    if v.shape[0] > 1:
        np.cumsum(v[:-1], axis=0, out=r[1:])
    return Trajectory(velocities=v, positions=r)


def differentiate_trajectory(positions) -> np.ndarray:
    """Finite differences of an origin-anchored position sequence, (T-1, 3).

    Given a Trajectory container this returns its stored velocities, which
    inverts integrate_velocities exactly; raw position arrays go through
    floating-point differences instead.
    """
    if isinstance(positions, Trajectory):
        return positions.velocities[:-1].copy()
    r = _as_float_array(positions, "positions")
    if r.ndim != 2 or r.shape[1] != 3 or r.shape[0] < 2:
        raise ValidationError(f"positions must be (T, 3) with T >= 2, got {r.shape}")
    if np.abs(r[0]).max() > _ORIGIN_ATOL:
        raise ValidationError("positions must start at the origin")
    return np.diff(r, axis=0)


def compose_motion(pose: PoseSequence, trajectory: Trajectory) -> Motion:
    """Broadcast-add the trajectory onto the pose sequence, X = P + R."""
    if pose.length != trajectory.length:
        raise ValidationError(
            f"pose has {pose.length} frames but trajectory has {trajectory.length}"
        )
    track = trajectory.positions
    joints = pose.values + track.T[:, None, :]
    return Motion(joints=joints, pose=pose, root_track=track)


def center_subtract(raw, graph: SkeletonGraph) -> tuple[PoseSequence, np.ndarray]:
    """Split a (3, J, T) sequence into a zero-root pose and its root track."""
    x = _as_float_array(raw, "raw motion")
    if x.ndim != 3 or x.shape[0] != 3:
        raise ValidationError(f"raw motion must be (3, J, T), got {x.shape}")
    if x.shape[1] != graph.joint_count:
        raise ValidationError(
            f"raw motion has {x.shape[1]} joints but the skeleton defines {graph.joint_count}"
        )
    root = graph.root_index
    track = x[:, root, :].T.copy()
    pose = PoseSequence(values=x - x[:, root : root + 1, :], root_index=root)
    return pose, track
