"""The four critics: trajectory, pose, projection and context.

Every critic maps its sample plus conditions to one real score per batch
element via downsampling stages, a global average pool and a linear head.
None of them contains normalization layers, because the gradient penalty
needs well-defined per-sample gradients.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn

from ..errors import ValidationError
from ..skeleton import SkeletonGraph
from .blocks import NEGATIVE_SLOPE, CriticHead, build_graph_stages, trivial_graph
from .config import GeneratorConfig


def _tile(conditions: list[torch.Tensor], nodes: int, frames: int) -> torch.Tensor:
    cond = torch.cat([c.reshape(c.shape[0], -1) for c in conditions], dim=1)
    return cond[:, :, None, None].expand(-1, -1, nodes, frames)


class TrajectoryCritic(nn.Module):
    """Scores origin-anchored root position sequences, (N, 3, 1, T)."""

    def __init__(self, cfg: GeneratorConfig, graph: SkeletonGraph):
        super().__init__()
        self.cfg = cfg
        self.input_channels = 3 + cfg.scene_feature_dim + 3 * graph.joint_count
        self.stages, _ = build_graph_stages(
            cfg.critic_stage_channels, self.input_channels, trivial_graph(), "down"
        )
        self.head = CriticHead(cfg.critic_stage_channels[-1], cfg.critic_head_dim, [[0.0]])

    def forward(self, positions, f_scene, initial_pose):
        if positions.dim() != 4 or positions.shape[1:3] != (3, 1):
            raise ValidationError(f"positions must be (N, 3, 1, T), got {tuple(positions.shape)}")
        if positions.shape[-1] != self.cfg.sequence_length:
            raise ValidationError(
                f"expected {self.cfg.sequence_length} frames, got {positions.shape[-1]}"
            )
        x = torch.cat([positions, _tile([f_scene, initial_pose], 1, positions.shape[-1])], dim=1)
        for stage in self.stages:
            x = stage(x)
        return self.head(x)


class PoseCritic(nn.Module):
    """Scores pose sequences with the start pose prepended, plus the trajectory."""

    def __init__(self, cfg: GeneratorConfig, graph: SkeletonGraph):
        super().__init__()
        self.cfg = cfg
        self.joint_count = graph.joint_count
        self.input_channels = 3 + cfg.scene_feature_dim + 3
        self.stages, _ = build_graph_stages(
            cfg.critic_stage_channels, self.input_channels, graph, "down"
        )
        self.head = CriticHead(cfg.critic_stage_channels[-1], cfg.critic_head_dim, [[0.0]])

    def forward(self, poses, trajectory, f_scene):
        frames = self.cfg.sequence_length + 1
        if poses.dim() != 4 or poses.shape[1:] != (3, self.joint_count, frames):
            raise ValidationError(
                f"poses must be (N, 3, {self.joint_count}, {frames}), got {tuple(poses.shape)}"
            )
        if trajectory.shape[1:] != (3, 1, frames):
            raise ValidationError(
                f"trajectory must be (N, 3, 1, {frames}), got {tuple(trajectory.shape)}"
            )
        joints = poses.shape[2]
        cond = _tile([f_scene], joints, frames)
        track = trajectory.expand(-1, -1, joints, -1)
        x = torch.cat([poses, cond, track], dim=1)
        for stage in self.stages:
            x = stage(x)
        return self.head(x)


class ProjectionCritic(nn.Module):
    """Scores image-plane motions (start frame included), (N, 2, J, T + 1)."""

    def __init__(self, cfg: GeneratorConfig, graph: SkeletonGraph):
        super().__init__()
        self.cfg = cfg
        self.joint_count = graph.joint_count
        self.input_channels = 2 + cfg.scene_feature_dim
        self.stages, _ = build_graph_stages(
            cfg.critic_stage_channels, self.input_channels, graph, "down"
        )
        self.head = CriticHead(cfg.critic_stage_channels[-1], cfg.critic_head_dim, [[0.0]])

    def forward(self, motion2d, f_scene):
        frames = self.cfg.sequence_length + 1
        if motion2d.dim() != 4 or motion2d.shape[1:] != (2, self.joint_count, frames):
            raise ValidationError(
                f"projected motion must be (N, 2, {self.joint_count}, {frames}), "
                f"got {tuple(motion2d.shape)}"
            )
        x = torch.cat([motion2d, _tile([f_scene], self.joint_count, frames)], dim=1)
        for stage in self.stages:
            x = stage(x)
        return self.head(x)


class _ContextStage(nn.Module):
    def __init__(self, in_channels, out_channels):
        super().__init__()
        self.conv = nn.Conv2d(in_channels, out_channels, 3, padding=1)

    def forward(self, x):
        x = self.conv(F.leaky_relu(x, NEGATIVE_SLOPE))
        return F.avg_pool2d(x, 2, stride=2)


class ContextCritic(nn.Module):
    """Scores stacks of relative depth crops, (N, crops, Hc, Wc)."""

    def __init__(self, cfg: GeneratorConfig):
        super().__init__()
        self.cfg = cfg
        self.input_channels = cfg.context_crop_count
        widths = [self.input_channels, *cfg.context_stage_channels]
        self.stages = nn.ModuleList(
            [_ContextStage(widths[i - 1], widths[i]) for i in range(1, len(widths))]
        )
        self.out = nn.Conv2d(cfg.context_stage_channels[-1], cfg.critic_head_dim, 3, padding=1)
        self.score = nn.Linear(cfg.critic_head_dim, 1)

    def forward(self, crops):
        cfg = self.cfg
        expected = (cfg.context_crop_count, cfg.crop_height, cfg.crop_width)
        if crops.dim() != 4 or crops.shape[1:] != expected:
            raise ValidationError(
                f"crops must be (N, {expected[0]}, {expected[1]}, {expected[2]}), "
                f"got {tuple(crops.shape)}"
            )
        x = crops
        for stage in self.stages:
            x = stage(x)
        x = self.out(F.leaky_relu(x, NEGATIVE_SLOPE))
        return self.score(x.mean(dim=(2, 3))).squeeze(-1)
