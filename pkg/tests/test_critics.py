import numpy as np
import pytest
import torch
from torch import nn

from scenemotion.errors import ValidationError
from scenemotion.geometry import relative_depth_crops
from scenemotion.nets.critics import (
    ContextCritic,
    PoseCritic,
    ProjectionCritic,
    TrajectoryCritic,
)


def _cond(cfg, skeleton, batch=3, seed=0):
    torch.manual_seed(seed)
    f_scene = torch.randn(batch, cfg.scene_feature_dim)
    p0 = torch.randn(batch, 3, skeleton.joint_count)
    return f_scene, p0


class TestTrajectoryCritic:
    def test_scalar_per_batch_element(self, tiny_cfg, skeleton):
        torch.manual_seed(1)
        critic = TrajectoryCritic(tiny_cfg, skeleton).eval()
        f, p0 = _cond(tiny_cfg, skeleton)
        traj = torch.randn(3, 3, 1, tiny_cfg.sequence_length) * 0.1
        with torch.no_grad():
            scores = critic(traj, f, p0)
        assert scores.shape == (3,)

    def test_identical_inputs_identical_scores(self, tiny_cfg, skeleton):
        torch.manual_seed(2)
        critic = TrajectoryCritic(tiny_cfg, skeleton).eval()
        f, p0 = _cond(tiny_cfg, skeleton)
        traj = torch.randn(3, 3, 1, tiny_cfg.sequence_length)
        with torch.no_grad():
            assert torch.equal(critic(traj, f, p0), critic(traj.clone(), f, p0))

    def test_finite_under_input_scaling(self, tiny_cfg, skeleton):
        torch.manual_seed(3)
        critic = TrajectoryCritic(tiny_cfg, skeleton).eval()
        f, p0 = _cond(tiny_cfg, skeleton)
        traj = torch.randn(3, 3, 1, tiny_cfg.sequence_length) * 100.0
        with torch.no_grad():
            scores = critic(traj, f * 100.0, p0 * 100.0)
        assert torch.isfinite(scores).all()

    def test_shape_mismatch_rejected(self, tiny_cfg, skeleton):
        critic = TrajectoryCritic(tiny_cfg, skeleton)
        f, p0 = _cond(tiny_cfg, skeleton)
        with pytest.raises(ValidationError):
            critic(torch.randn(3, 3, 1, tiny_cfg.sequence_length + 1), f, p0)


class TestPoseCritic:
    def test_batch_permutation_permutes_scores(self, tiny_cfg, skeleton):
        torch.manual_seed(4)
        critic = PoseCritic(tiny_cfg, skeleton).eval()
        frames = tiny_cfg.sequence_length + 1
        poses = torch.randn(4, 3, skeleton.joint_count, frames)
        traj = torch.randn(4, 3, 1, frames)
        f, _ = _cond(tiny_cfg, skeleton, batch=4)
        with torch.no_grad():
            scores = critic(poses, traj, f)
            perm = torch.tensor([2, 0, 3, 1])
            permuted = critic(poses[perm], traj[perm], f[perm])
        assert torch.allclose(scores[perm], permuted, atol=1e-6)

    def test_shape_validation(self, tiny_cfg, skeleton):
        critic = PoseCritic(tiny_cfg, skeleton)
        f, _ = _cond(tiny_cfg, skeleton)
        frames = tiny_cfg.sequence_length + 1
        with pytest.raises(ValidationError):
            critic(torch.randn(3, 3, skeleton.joint_count, frames - 1),
                   torch.randn(3, 3, 1, frames), f)


class TestProjectionCritic:
    def test_translation_changes_the_score(self, tiny_cfg, skeleton):
        torch.manual_seed(5)
        critic = ProjectionCritic(tiny_cfg, skeleton).eval()
        frames = tiny_cfg.sequence_length + 1
        motion2d = torch.randn(2, 2, skeleton.joint_count, frames) * 0.3
        f, _ = _cond(tiny_cfg, skeleton, batch=2)
        with torch.no_grad():
            base = critic(motion2d, f)
            shifted = critic(motion2d + 0.25, f)
        assert (base - shifted).abs().max() > 1e-6

    def test_deterministic_in_eval_mode(self, tiny_cfg, skeleton):
        torch.manual_seed(6)
        critic = ProjectionCritic(tiny_cfg, skeleton).eval()
        frames = tiny_cfg.sequence_length + 1
        x = torch.randn(2, 2, skeleton.joint_count, frames)
        f, _ = _cond(tiny_cfg, skeleton, batch=2)
        with torch.no_grad():
            assert torch.equal(critic(x, f), critic(x, f))


class TestContextCritic:
    def test_zero_crops_give_finite_score(self, tiny_cfg):
        torch.manual_seed(7)
        critic = ContextCritic(tiny_cfg).eval()
        crops = torch.zeros(2, tiny_cfg.context_crop_count, tiny_cfg.crop_height,
                            tiny_cfg.crop_width)
        with torch.no_grad():
            scores = critic(crops)
        assert scores.shape == (2,) and torch.isfinite(scores).all()

    def test_crop_count_validated(self, tiny_cfg):
        critic = ContextCritic(tiny_cfg)
        with pytest.raises(ValidationError):
            critic(torch.zeros(1, tiny_cfg.context_crop_count + 1, tiny_cfg.crop_height,
                               tiny_cfg.crop_width))

    def test_score_gradient_reaches_root_positions(self, tiny_cfg):
        torch.manual_seed(8)
        critic = ContextCritic(tiny_cfg).double().eval()
        h, w = 64, 128
        uu, vv = np.meshgrid(np.arange(float(w)), np.arange(float(h)))
        smooth = 2.0 + 0.5 * np.sin(uu / 11.0) + 0.3 * np.cos(vv / 9.0)
        depth = torch.tensor(smooth, dtype=torch.float64)[None]
        fx = fy = 60.0
        cx, cy = w / 2.0, h / 2.0
        k = tiny_cfg.context_crop_count
        roots = torch.tensor(
            np.stack([np.linspace(-0.2, 0.2, k), np.zeros(k), np.full(k, 2.3)], axis=-1)[None],
            dtype=torch.float64, requires_grad=True,
        )

        def score_for(r):
            crops = relative_depth_crops(depth, fx, fy, cx, cy, w, h, r,
                                         tiny_cfg.crop_height, tiny_cfg.crop_width)
            return critic(crops).sum()

        score = score_for(roots)
        (grad,) = torch.autograd.grad(score, roots)
        assert grad.abs().sum() > 0

        # Finite-difference check on one coordinate.
        eps = 1e-5
        hi = roots.detach().clone()
        lo = roots.detach().clone()
        hi[0, 0, 0] += eps
        lo[0, 0, 0] -= eps
        numeric = (score_for(hi).item() - score_for(lo).item()) / (2 * eps)
        analytic = grad[0, 0, 0].item()
        scale = max(1.0, abs(numeric), abs(analytic))
        assert abs(numeric - analytic) / scale <= 1e-2


def test_no_normalization_layers_in_any_critic(tiny_cfg, skeleton):
    critics = [
        TrajectoryCritic(tiny_cfg, skeleton),
        PoseCritic(tiny_cfg, skeleton),
        ProjectionCritic(tiny_cfg, skeleton),
        ContextCritic(tiny_cfg),
    ]
    banned = (nn.BatchNorm1d, nn.BatchNorm2d, nn.BatchNorm3d, nn.LayerNorm,
              nn.GroupNorm, nn.InstanceNorm1d, nn.InstanceNorm2d)
    for critic in critics:
        assert not any(isinstance(m, banned) for m in critic.modules())
