"""Trajectory and pose sequence generators.

Both nets tile their condition vectors along the base timeline, concatenate
them with GP noise channel-wise, and upsample through kernel-3 stages (the
first one unpadded, the rest doubling the timeline).  Velocities leave the
trajectory net through max_speed * tanh; poses leave the pose net through
pose_scale * tanh and are root subtracted.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn

from ..errors import ValidationError
from ..skeleton import SkeletonGraph, level_adjacency, with_track_node
from .blocks import (
    NEGATIVE_SLOPE,
    GraphTemporalConv,
    build_graph_stages,
    trivial_graph,
)
from .config import GeneratorConfig


def velocities_to_positions(velocities: torch.Tensor) -> torch.Tensor:
    """Differentiable prefix sums over the last axis; position 0 is the origin."""
    zero = torch.zeros_like(velocities[..., :1])
    return torch.cat([zero, torch.cumsum(velocities[..., :-1], dim=-1)], dim=-1)


def _tile_conditions(parts: list[torch.Tensor], nodes: int, frames: int) -> torch.Tensor:
    cond = torch.cat([p.reshape(p.shape[0], -1) for p in parts], dim=1)
    return cond[:, :, None, None].expand(-1, -1, nodes, frames)


def _check_latent(z: torch.Tensor, channels: int, length: int) -> torch.Tensor:
    if z.dim() != 3 or z.shape[1] != channels or z.shape[2] != length:
        raise ValidationError(
            f"latents must be (N, {channels}, {length}), got {tuple(z.shape)}"
        )
    return z


class TrajectoryGenerator(nn.Module):
    """Samples a velocity sequence conditioned on scene feature and start pose."""

    def __init__(self, cfg: GeneratorConfig, graph: SkeletonGraph):
        super().__init__()
        self.cfg = cfg
        self.condition_dim = cfg.scene_feature_dim + 3 * graph.joint_count
        self.input_channels = cfg.traj_latent_channels + self.condition_dim
        self.stages, _ = build_graph_stages(
            cfg.traj_stage_channels, self.input_channels, trivial_graph(), "up"
        )
        self.out = GraphTemporalConv(cfg.traj_stage_channels[-1], 3, [[0.0]])

    def forward(self, z, f_scene, initial_pose):
        """Returns (velocities, positions), both (N, 3, 1, T)."""
        cfg = self.cfg
        z = _check_latent(z, cfg.traj_latent_channels, cfg.base_length)
        cond = _tile_conditions([f_scene, initial_pose], 1, cfg.base_length)
        if cond.shape[1] != self.condition_dim:
            raise ValidationError(
                f"conditions supply {cond.shape[1]} channels, expected {self.condition_dim}"
            )
        x = torch.cat([z[:, :, None, :], cond], dim=1)
        for stage in self.stages:
            x = stage(x)
        velocities = cfg.max_speed * torch.tanh(self.out(F.leaky_relu(x, NEGATIVE_SLOPE)))
        return velocities, velocities_to_positions(velocities)


class PoseGenerator(nn.Module):
    """Samples a center-subtracted pose sequence guided by a trajectory."""

    def __init__(self, cfg: GeneratorConfig, graph: SkeletonGraph):
        super().__init__()
        if graph.joint_count != cfg.joint_count:
            raise ValidationError("skeleton joint count does not match the configuration")
        self.cfg = cfg
        self.graph = graph
        self.condition_dim = (
            cfg.scene_feature_dim + 3 * cfg.sequence_length + 3 * graph.joint_count
        )
        self.input_channels = cfg.pose_latent_channels + self.condition_dim
        self.stages, _ = build_graph_stages(
            cfg.pose_stage_channels, self.input_channels, graph, "up"
        )
        self.out = GraphTemporalConv(
            cfg.pose_stage_channels[-1], 3, _final_adjacency(graph)
        )

    def forward(self, z, f_scene, trajectory, initial_pose):
        """Returns poses (N, 3, J, T) with an exactly zero root track."""
        cfg = self.cfg
        z = _check_latent(z, cfg.pose_latent_channels, cfg.base_length)
        if trajectory.shape[-1] != cfg.sequence_length:
            raise ValidationError(
                f"trajectory must span {cfg.sequence_length} frames, got {trajectory.shape[-1]}"
            )
        cond = _tile_conditions([f_scene, trajectory, initial_pose], 1, cfg.base_length)
        if cond.shape[1] != self.condition_dim:
            raise ValidationError(
                f"conditions supply {cond.shape[1]} channels, expected {self.condition_dim}"
            )
        x = torch.cat([z[:, :, None, :], cond], dim=1)
        for stage in self.stages:
            x = stage(x)
        poses = cfg.pose_scale * torch.tanh(self.out(F.leaky_relu(x, NEGATIVE_SLOPE)))
        root = self.graph.root_index
        return poses - poses[:, :, root : root + 1, :]


class JointMotionGenerator(nn.Module):
    """Single-stage baseline: one graph net emits poses plus a track node."""

    def __init__(self, cfg: GeneratorConfig, graph: SkeletonGraph):
        super().__init__()
        self.cfg = cfg
        self.body_graph = graph
        self.graph = with_track_node(graph)
        self.track_index = self.graph.joint_count - 1
        self.condition_dim = cfg.scene_feature_dim + 3 * graph.joint_count
        self.input_channels = cfg.pose_latent_channels + self.condition_dim
        self.stages, _ = build_graph_stages(
            cfg.pose_stage_channels, self.input_channels, self.graph, "up"
        )
        self.out = GraphTemporalConv(
            cfg.pose_stage_channels[-1], 3, _final_adjacency(self.graph)
        )

    def forward(self, z, f_scene, initial_pose):
        """Returns (velocities, positions, poses) like the two-stage pair."""
        cfg = self.cfg
        z = _check_latent(z, cfg.pose_latent_channels, cfg.base_length)
        cond = _tile_conditions([f_scene, initial_pose], 1, cfg.base_length)
        x = torch.cat([z[:, :, None, :], cond], dim=1)
        for stage in self.stages:
            x = stage(x)
        raw = self.out(F.leaky_relu(x, NEGATIVE_SLOPE))
        track = self.track_index
        velocities = cfg.max_speed * torch.tanh(raw[:, :, track : track + 1, :])
        poses = cfg.pose_scale * torch.tanh(raw[:, :, :track, :])
        root = self.body_graph.root_index
        poses = poses - poses[:, :, root : root + 1, :]
        return velocities, velocities_to_positions(velocities), poses


def _final_adjacency(graph: SkeletonGraph):
    return level_adjacency(graph, graph.level_count - 1)
