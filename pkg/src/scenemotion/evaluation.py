"""Evaluation suite: motion feature FID, non-collision ratios, diversity.

Motion FID trains encoder-recurrent-decoder next-frame predictors at several
clip lengths, embeds non-overlapping clips of real and generated motions with
the final recurrent state, and takes Frechet distances between the two
feature Gaussians per (model, clip length) pair.  Clips are translation
normalized by their first-frame root so features describe dynamics, not
scene placement.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from .errors import NumericalError, ValidationError
from .geometry import PointCloud, motion_collision_count
from .motion import Motion
from .skeleton import SkeletonGraph

DEFAULT_RADII_MM = (30.0, 45.0, 60.0)
DEFAULT_THRESHOLDS = (40, 60, 80, 100)


def _as_joint_array(motion) -> np.ndarray:
    x = motion.joints if isinstance(motion, Motion) else np.asarray(motion, dtype=np.float64)
    if x.ndim != 3 or x.shape[0] != 3:
        raise ValidationError(f"motions must be (3, J, T), got {x.shape}")
    return x


# --------------------------------------------------------------------------
# ERD feature extractor
# --------------------------------------------------------------------------

class ERDModel(nn.Module):
    """Per-frame encoder, GRU, and next-frame decoder over flattened poses."""

    def __init__(self, joint_count: int, clip_length: int, feature_dim: int = 48,
                 root_index: int = 0):
        super().__init__()
        self.joint_count = joint_count
        self.clip_length = clip_length
        self.feature_dim = feature_dim
        self.root_index = root_index
        width = 3 * joint_count
        self.encoder = nn.Sequential(nn.Linear(width, 64), nn.Tanh(), nn.Linear(64, 64))
        self.recurrent = nn.GRU(64, feature_dim, batch_first=True)
        self.decoder = nn.Sequential(nn.Linear(feature_dim, 64), nn.Tanh(), nn.Linear(64, width))

    def forward(self, frames: torch.Tensor) -> torch.Tensor:
        """Next-frame predictions for every input position, (B, L, 3J)."""
        hidden, _ = self.recurrent(self.encoder(frames))
        return self.decoder(hidden)

    def final_state(self, frames: torch.Tensor) -> torch.Tensor:
        _, state = self.recurrent(self.encoder(frames))
        return state[-1]


def _clips_to_frames(clips: np.ndarray, root_index: int) -> torch.Tensor:
    """(B, 3, J, L) clips to (B, L, 3J) frames, first-frame root subtracted."""
    clips = np.asarray(clips, dtype=np.float64)
    if clips.ndim != 4 or clips.shape[1] != 3:
        raise ValidationError(f"clips must be (B, 3, J, L), got {clips.shape}")
    anchored = clips - clips[:, :, root_index : root_index + 1, :1]
    frames = anchored.transpose(0, 3, 1, 2).reshape(clips.shape[0], clips.shape[3], -1)
    return torch.from_numpy(frames.astype(np.float32))


def extract_clips(motions, length: int) -> np.ndarray:
    """Non-overlapping windows of `length` frames from every motion."""
    if length < 2:
        raise ValidationError("clip length must be at least 2")
    windows = []
    for motion in motions:
        x = _as_joint_array(motion)
        for lo in range(0, x.shape[2] - length + 1, length):
            windows.append(x[:, :, lo : lo + length])
    if not windows:
        raise ValidationError(f"no motion is long enough for clip length {length}")
    return np.stack(windows)


def train_erd(motions, clip_length: int, feature_dim: int = 48, seed: int = 0,
              steps: int = 300, batch_size: int = 64, lr: float = 1e-3) -> ERDModel:
    """Fit a next-frame predictor on real clips; deterministic per seed."""
    clips = extract_clips(motions, clip_length)
    if clips.shape[0] < 2:
        raise ValidationError("need at least two clips to train a feature model")
    joint_count = clips.shape[2]
    torch.manual_seed(seed)
    model = ERDModel(joint_count, clip_length, feature_dim)
    frames = _clips_to_frames(clips, model.root_index)
    rng = np.random.default_rng(seed)
    opt = torch.optim.Adam(model.parameters(), lr=lr)
    loss_fn = nn.MSELoss()
    model.train()
    for _ in range(steps):
        idx = rng.integers(0, frames.shape[0], size=min(batch_size, frames.shape[0]))
        batch = frames[idx]
        pred = model(batch[:, :-1])
        loss = loss_fn(pred, batch[:, 1:])
        opt.zero_grad(set_to_none=True)
        loss.backward()
        opt.step()
    model.eval()
    return model


def erd_features(model: ERDModel, clips) -> np.ndarray:
    """Final recurrent state per clip; clips may be shorter than the model's."""
    clips = np.asarray(clips, dtype=np.float64)
    if clips.shape[3] > model.clip_length:
        raise ValidationError(
            f"clips of {clips.shape[3]} frames exceed the model length {model.clip_length}"
        )
    frames = _clips_to_frames(clips, model.root_index)
    model.eval()
    with torch.no_grad():
        return model.final_state(frames).numpy().astype(np.float64)


# --------------------------------------------------------------------------
# Frechet distance and the FID report
# --------------------------------------------------------------------------

def _sqrt_psd(matrix: np.ndarray) -> np.ndarray:
    eigenvalues, eigenvectors = np.linalg.eigh(matrix)
    if eigenvalues.min() < -1e-6 * max(1.0, abs(eigenvalues.max())):
        raise NumericalError(f"matrix is not PSD (min eigenvalue {eigenvalues.min():.3g})")
    rooted = np.sqrt(np.clip(eigenvalues, 0.0, None))
    return (eigenvectors * rooted) @ eigenvectors.T


def frechet_distance(mean1, cov1, mean2, cov2) -> float:
    """|mu1 - mu2|^2 + Tr(S1 + S2 - 2 (S1 S2)^(1/2)) via eigendecompositions."""
    mean1 = np.asarray(mean1, dtype=np.float64).ravel()
    mean2 = np.asarray(mean2, dtype=np.float64).ravel()
    cov1 = np.asarray(cov1, dtype=np.float64)
    cov2 = np.asarray(cov2, dtype=np.float64)
    if mean1.shape != mean2.shape or cov1.shape != cov2.shape:
        raise ValidationError("Gaussian moments disagree in shape")
    cov1 = (cov1 + cov1.T) / 2.0 + 1e-9 * np.eye(cov1.shape[0])
    cov2 = (cov2 + cov2.T) / 2.0 + 1e-9 * np.eye(cov2.shape[0])
    root1 = _sqrt_psd(cov1)
    inner = root1 @ cov2 @ root1
    cross = _sqrt_psd((inner + inner.T) / 2.0)
    delta = mean1 - mean2
    value = float(delta @ delta + np.trace(cov1) + np.trace(cov2) - 2.0 * np.trace(cross))
    if value < -1e-6:
        raise NumericalError(f"Frechet distance collapsed to {value:.3g}")
    return max(value, 0.0)


def default_clip_lengths(sequence_length: int) -> tuple[int, ...]:
    """Powers of two from 2 up to the motion length."""
    lengths = []
    k = 2
    while k <= sequence_length:
        lengths.append(k)
        k *= 2
    if not lengths:
        raise ValidationError("motions are too short for any clip")
    return tuple(lengths)


def split_clip_groups(lengths) -> tuple[tuple[int, ...], ...]:
    """Short/mid/long split: three consecutive groups of the sorted grid."""
    ordered = sorted(lengths)
    parts = np.array_split(np.asarray(ordered), 3)
    return tuple(tuple(int(v) for v in p) for p in parts)


@dataclass(frozen=True)
class FIDReport:
    cells: dict
    short: float
    mid: float
    long: float
    average: float
    clip_groups: tuple[tuple[int, ...], ...]

    def to_dict(self) -> dict:
        return {
            "cells": {f"erd{m}/clip{c}": v for (m, c), v in self.cells.items()},
            "short": self.short,
            "mid": self.mid,
            "long": self.long,
            "average": self.average,
            "clip_groups": [list(g) for g in self.clip_groups],
        }


def _moments(features: np.ndarray):
    if features.shape[0] < 2:
        raise ValidationError("need at least two feature vectors per side")
    return features.mean(axis=0), np.cov(features, rowvar=False)


def motion_fid(real_motions, generated_motions, models, clip_lengths=None) -> FIDReport:
    """FID per (feature model, clip length <= model length), plus aggregates."""
    if not real_motions or not generated_motions:
        raise ValidationError("both motion sets must be non-empty")
    if clip_lengths is None:
        shortest = min(_as_joint_array(m).shape[2] for m in list(real_motions) + list(generated_motions))
        clip_lengths = default_clip_lengths(shortest)
    cells = {}
    for model in models:
        for length in clip_lengths:
            if length > model.clip_length:
                continue
            real = erd_features(model, extract_clips(real_motions, length))
            fake = erd_features(model, extract_clips(generated_motions, length))
            cells[(model.clip_length, length)] = frechet_distance(*_moments(real), *_moments(fake))
    if not cells:
        raise ValidationError("no (model, clip length) pair was scorable")
    groups = split_clip_groups(clip_lengths)

    def group_mean(group):
        values = [v for (m, c), v in cells.items() if c in group]
        return float(np.mean(values)) if values else float("nan")

    return FIDReport(
        cells=cells,
        short=group_mean(groups[0]),
        mid=group_mean(groups[1]),
        long=group_mean(groups[2]),
        average=float(np.mean(list(cells.values()))),
        clip_groups=groups,
    )


# --------------------------------------------------------------------------
# Non-collision ratios
# --------------------------------------------------------------------------

def non_collision_ratio(motions, cloud: PointCloud, graph: SkeletonGraph,
                        radius: float, threshold: int) -> float:
    """Fraction of motions whose cylinder collision count stays <= threshold."""
    motions = list(motions)
    if not motions:
        raise ValidationError("no motions to score")
    if threshold < 0:
        raise ValidationError("threshold must be non-negative")
    counts = [motion_collision_count(m, graph, radius, cloud) for m in motions]
    return float(np.mean([c <= threshold for c in counts]))


@dataclass(frozen=True)
class CollisionReport:
    cells: dict
    per_radius: dict
    radii_mm: tuple[float, ...] = DEFAULT_RADII_MM
    thresholds: tuple[int, ...] = DEFAULT_THRESHOLDS

    def to_dict(self) -> dict:
        return {
            "cells": {f"r{int(r)}mm/t{t}": v for (r, t), v in self.cells.items()},
            "per_radius": {f"r{int(r)}mm": v for r, v in self.per_radius.items()},
            "radii_mm": list(self.radii_mm),
            "thresholds": list(self.thresholds),
        }


def collision_report(motions, clouds, graph: SkeletonGraph,
                     radii_mm=DEFAULT_RADII_MM, thresholds=DEFAULT_THRESHOLDS) -> CollisionReport:
    """Non-collision ratios over the radius/threshold grid.

    `clouds` is either one PointCloud or a sequence aligned with `motions`.
    The grid's monotonicity (looser thresholds never lower the ratio, larger
    radii never raise it) is asserted on every call.
    """
    motions = list(motions)
    if not motions:
        raise ValidationError("no motions to score")
    if isinstance(clouds, PointCloud):
        clouds = [clouds] * len(motions)
    else:
        clouds = list(clouds)
        if len(clouds) != len(motions):
            raise ValidationError("one cloud per motion is required")
    radii = sorted(radii_mm)
    counts = {
        r: np.array(
            [motion_collision_count(m, graph, r / 1000.0, c) for m, c in zip(motions, clouds)]
        )
        for r in radii
    }
    cells = {}
    for r in radii:
        for t in sorted(thresholds):
            cells[(r, t)] = float(np.mean(counts[r] <= t))
    for r in radii:
        ratios = [cells[(r, t)] for t in sorted(thresholds)]
        assert all(a <= b + 1e-12 for a, b in zip(ratios, ratios[1:])), "threshold monotonicity"
    for t in sorted(thresholds):
        ratios = [cells[(r, t)] for r in radii]
        assert all(a >= b - 1e-12 for a, b in zip(ratios, ratios[1:])), "radius monotonicity"
    per_radius = {
        r: float(np.mean([cells[(r, t)] for t in sorted(thresholds)])) for r in radii
    }
    return CollisionReport(
        cells=cells, per_radius=per_radius,
        radii_mm=tuple(radii), thresholds=tuple(sorted(thresholds)),
    )


# --------------------------------------------------------------------------
# Trajectory diversity
# --------------------------------------------------------------------------

def trajectory_std_curve(tracks, endpoint_tolerance: float | None = None) -> np.ndarray:
    """Per-frame spread of origin-anchored trajectories.

    Returns the across-sample standard deviation of position at each frame,
    averaged over the two ground-plane axes (x and z).  With a tolerance, only
    samples whose endpoints lie within it of the medoid endpoint are kept.
    """
    arr = np.asarray(tracks, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3 or arr.shape[0] < 2:
        raise ValidationError(f"tracks must be (S >= 2, T, 3), got {arr.shape}")
    if np.abs(arr[:, 0, :]).max() > 1e-9:
        raise ValidationError("all trajectories must start at the origin")
    if endpoint_tolerance is not None:
        ends = arr[:, -1, :]
        pairwise = np.linalg.norm(ends[:, None, :] - ends[None, :, :], axis=-1)
        medoid = int(pairwise.sum(axis=1).argmin())
        keep = np.linalg.norm(ends - ends[medoid], axis=-1) <= endpoint_tolerance
        if keep.sum() < 2:
            raise ValidationError("endpoint filter left fewer than two samples")
        arr = arr[keep]
    std = arr.std(axis=0)  # (T, 3), population std
    return std[:, [0, 2]].mean(axis=1)
