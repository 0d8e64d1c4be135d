import numpy as np
import pytest
import torch

from scenemotion.errors import ValidationError
from scenemotion.nets.encoder import DepthHead, SceneEncoder, berhu_loss, image_to_tensor
from scenemotion.worldgen import WorldConfig, generate_scene


class TestSceneEncoder:
    def test_identical_images_identical_features(self, tiny_cfg):
        torch.manual_seed(0)
        encoder = SceneEncoder(tiny_cfg).eval()
        image = torch.rand(1, 3, tiny_cfg.image_height, tiny_cfg.image_width)
        with torch.no_grad():
            a, _ = encoder(image)
            b, _ = encoder(image.clone())
        assert torch.equal(a, b)

    def test_feature_dimension(self, tiny_cfg):
        encoder = SceneEncoder(tiny_cfg).eval()
        with torch.no_grad():
            f, _ = encoder(torch.rand(2, 3, tiny_cfg.image_height, tiny_cfg.image_width))
        assert f.shape == (2, tiny_cfg.scene_feature_dim)

    def test_wrong_spatial_size_rejected(self, tiny_cfg):
        encoder = SceneEncoder(tiny_cfg)
        with pytest.raises(ValidationError):
            encoder(torch.rand(1, 3, tiny_cfg.image_height + 2, tiny_cfg.image_width))

    def test_untrained_output_stays_bounded(self, tiny_cfg):
        torch.manual_seed(3)
        encoder = SceneEncoder(tiny_cfg).eval()
        with torch.no_grad():
            f, _ = encoder(torch.rand(4, 3, tiny_cfg.image_height, tiny_cfg.image_width))
        assert torch.isfinite(f).all()
        assert f.abs().max() < 1e3


class TestDepthHead:
    def test_strictly_positive_output(self, tiny_cfg):
        torch.manual_seed(1)
        encoder = SceneEncoder(tiny_cfg).eval()
        head = DepthHead(tiny_cfg).eval()
        with torch.no_grad():
            _, feature_map = encoder(torch.rand(2, 3, tiny_cfg.image_height, tiny_cfg.image_width))
            depth = head(feature_map)
        assert (depth > 0).all()

    def test_output_matches_image_shape(self, tiny_cfg):
        encoder = SceneEncoder(tiny_cfg).eval()
        head = DepthHead(tiny_cfg).eval()
        with torch.no_grad():
            _, feature_map = encoder(torch.rand(1, 3, tiny_cfg.image_height, tiny_cfg.image_width))
            depth = head(feature_map)
        assert depth.shape == (1, tiny_cfg.image_height, tiny_cfg.image_width)

    def test_training_halves_the_depth_loss(self, tiny_cfg, tiny_world):
        scenes = [generate_scene(s, tiny_world) for s in range(4)]
        images = torch.stack([image_to_tensor(s.image) for s in scenes])
        target = torch.stack(
            [torch.from_numpy(s.depth.values.astype(np.float32)) for s in scenes]
        )
        torch.manual_seed(2)
        encoder = SceneEncoder(tiny_cfg)
        head = DepthHead(tiny_cfg)
        params = list(encoder.parameters()) + list(head.parameters())
        opt = torch.optim.Adam(params, lr=1e-3)

        def loss():
            _, fmap = encoder(images)
            return berhu_loss(head(fmap), target)

        with torch.no_grad():
            initial = float(loss())
        for _ in range(500):
            value = loss()
            opt.zero_grad(set_to_none=True)
            value.backward()
            opt.step()
        with torch.no_grad():
            final = float(loss())
        assert final < 0.5 * initial


class TestBerhuLoss:
    def test_zero_for_perfect_prediction(self):
        x = torch.rand(4, 8)
        assert float(berhu_loss(x, x)) == 0.0

    def test_closed_form_for_unit_residuals(self):
        pred = torch.ones(5, 5)
        target = torch.zeros(5, 5)
        # All residuals are 1, so the cutoff is 0.2 and every element takes
        # the quadratic branch: (1 + 0.04) / 0.4 = 2.6.
        assert float(berhu_loss(pred, target)) == pytest.approx(2.6, abs=1e-6)

    def test_continuity_at_the_cutoff(self):
        base = torch.tensor([[1.0, 0.0]], dtype=torch.float64)
        target = torch.zeros_like(base)
        # Cutoff c = 0.2; probe the second residual just around it.
        lo = base.clone()
        hi = base.clone()
        lo[0, 1] = 0.2 * (1 - 1e-6)
        hi[0, 1] = 0.2 * (1 + 1e-6)
        assert abs(float(berhu_loss(lo, target)) - float(berhu_loss(hi, target))) < 1e-5

    def test_empty_mask_rejected(self):
        x = torch.rand(3, 3)
        with pytest.raises(ValidationError):
            berhu_loss(x, x, torch.zeros(3, 3, dtype=torch.bool))

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValidationError):
            berhu_loss(torch.rand(2, 2), torch.rand(2, 3))
