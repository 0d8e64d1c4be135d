"""Building blocks: graph-temporal convolutions and resampling stages.

Feature tensors are (N, C, V, T) with V graph nodes and T frames.  A stage is
pre-activated: LeakyReLU, optional graph and temporal resampling, then a
kernel-3 temporal convolution mixed over the normalized adjacency.  Generator
stages end in batch normalization; critic stages carry no normalization so
per-sample gradient penalties stay well defined.
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from ..skeleton import (
    SkeletonGraph,
    expand_matrix,
    level_adjacency,
    normalized_adjacency,
    reduce_matrix,
)

NEGATIVE_SLOPE = 0.2


def transition_stages(stage_count: int, transition_count: int) -> tuple[int, ...]:
    """1-based stages at which graph level transitions happen, spread evenly."""
    if transition_count == 0:
        return ()
    if transition_count == 1:
        return (1,)
    positions = np.linspace(1, stage_count, transition_count)
    stages = tuple(int(round(p)) for p in positions)
    if len(set(stages)) != transition_count:
        raise ValueError(
            f"cannot place {transition_count} graph transitions over {stage_count} stages"
        )
    return stages


def generator_level_plan(stage_count: int, level_count: int) -> list[int]:
    """Graph level (coarse 0 -> fine) after each generator stage."""
    at = transition_stages(stage_count, level_count - 1)
    levels, current = [], 0
    for stage in range(1, stage_count + 1):
        if stage in at:
            current += 1
        levels.append(current)
    return levels


def critic_level_plan(stage_count: int, level_count: int) -> list[int]:
    """Graph level (fine -> coarse 0) after each critic stage."""
    at = transition_stages(stage_count, level_count - 1)
    levels, current = [], level_count - 1
    for stage in range(1, stage_count + 1):
        if stage in at:
            current -= 1
        levels.append(current)
    return levels


class GraphTemporalConv(nn.Module):
    """Adjacency mixing followed by a 1 x kernel temporal convolution."""

    def __init__(self, in_channels, out_channels, adjacency, kernel=3, padding=1):
        super().__init__()
        mix = torch.as_tensor(normalized_adjacency(np.asarray(adjacency)), dtype=torch.float32)
        self.register_buffer("mix", mix)
        self.conv = nn.Conv2d(in_channels, out_channels, (1, kernel), padding=(0, padding))

    def forward(self, x):
        x = torch.einsum("vw,ncwt->ncvt", self.mix, x)
        return self.conv(x)


class _Resample(nn.Module):
    """Applies a fixed (V_out, V_in) node map, e.g. parent copy or mean pool."""

    def __init__(self, matrix: np.ndarray):
        super().__init__()
        self.register_buffer("matrix", torch.as_tensor(matrix, dtype=torch.float32))

    def forward(self, x):
        return torch.einsum("vw,ncwt->ncvt", self.matrix, x)


class GeneratorStage(nn.Module):
    def __init__(self, in_channels, out_channels, adjacency, node_expand=None,
                 temporal_up=False, temporal_padding=1):
        super().__init__()
        self.expand = _Resample(node_expand) if node_expand is not None else None
        self.temporal_up = temporal_up
        self.conv = GraphTemporalConv(in_channels, out_channels, adjacency,
                                      padding=temporal_padding)
        self.norm = nn.BatchNorm2d(out_channels)

    def forward(self, x):
        x = F.leaky_relu(x, NEGATIVE_SLOPE)
        if self.expand is not None:
            x = self.expand(x)
        if self.temporal_up:
            x = F.interpolate(x, scale_factor=(1, 2), mode="nearest")
        return self.norm(self.conv(x))


class CriticStage(nn.Module):
    def __init__(self, in_channels, out_channels, adjacency, node_reduce=None,
                 temporal_down=False):
        super().__init__()
        self.conv = GraphTemporalConv(in_channels, out_channels, adjacency)
        self.reduce = _Resample(node_reduce) if node_reduce is not None else None
        self.temporal_down = temporal_down

    def forward(self, x):
        x = self.conv(F.leaky_relu(x, NEGATIVE_SLOPE))
        if self.reduce is not None:
            x = self.reduce(x)
        if self.temporal_down:
            x = F.avg_pool2d(x, (1, 2), stride=(1, 2))
        return x


class CriticHead(nn.Module):
    """Final convolution, global average pool and the scalar score map."""

    def __init__(self, in_channels, head_dim, adjacency):
        super().__init__()
        self.conv = GraphTemporalConv(in_channels, head_dim, adjacency)
        self.score = nn.Linear(head_dim, 1)

    def forward(self, x):
        x = self.conv(F.leaky_relu(x, NEGATIVE_SLOPE))
        pooled = x.mean(dim=(2, 3))
        return self.score(pooled).squeeze(-1)


def build_graph_stages(cfg_channels, input_channels, graph: SkeletonGraph, direction: str):
    """Stage list plus the per-stage graph levels for one graph network."""
    stage_count = len(cfg_channels)
    level_count = graph.level_count
    widths = [input_channels, *cfg_channels]
    stages = nn.ModuleList()
    if direction == "up":
        plan = generator_level_plan(stage_count, level_count)
        previous = 0
        for i, level in enumerate(plan, start=1):
            expand = None
            if level != previous:
                expand = expand_matrix(graph, level)
            stages.append(
                GeneratorStage(
                    widths[i - 1], widths[i],
                    level_adjacency(graph, level),
                    node_expand=expand,
                    temporal_up=i >= 2,
                    temporal_padding=0 if i == 1 else 1,
                )
            )
            previous = level
        return stages, plan
    if direction == "down":
        plan = critic_level_plan(stage_count, level_count)
        previous = level_count - 1
        for i, level in enumerate(plan, start=1):
            reduce = None
            if level != previous:
                reduce = reduce_matrix(graph, previous)
            stages.append(
                CriticStage(
                    widths[i - 1], widths[i],
                    level_adjacency(graph, previous),
                    node_reduce=reduce,
                    temporal_down=i >= 2,
                )
            )
            previous = level
        return stages, plan
    raise ValueError(f"unknown direction {direction!r}")


def trivial_graph() -> SkeletonGraph:
    """A single-node graph so trajectory nets reuse the graph machinery."""
    return SkeletonGraph(
        joint_count=1, root_index=0, bones=(), coarsening_levels=(1,),
        level_assignments=((0,),),
    )
