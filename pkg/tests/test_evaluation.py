import numpy as np
import pytest

from scenemotion.errors import ValidationError
from scenemotion.evaluation import (
    ERDModel,
    collision_report,
    default_clip_lengths,
    erd_features,
    extract_clips,
    frechet_distance,
    motion_fid,
    non_collision_ratio,
    split_clip_groups,
    train_erd,
    trajectory_std_curve,
)
from scenemotion.geometry import PointCloud, motion_collision_count
from scenemotion.training import parameter_fingerprint
from scenemotion.worldgen import WorldConfig, generate_scene, generate_walk


@pytest.fixture(scope="module")
def walk_motions(tiny_world):
    motions = []
    for scene_seed in range(4):
        scene = generate_scene(scene_seed + 40, tiny_world)
        for walk_seed in range(6):
            motions.append(generate_walk(scene, walk_seed, 16).joints)
    return motions


class TestFrechetDistance:
    def test_identical_gaussians(self):
        rng = np.random.default_rng(0)
        mu = rng.normal(size=5)
        a = rng.normal(size=(20, 5))
        cov = np.cov(a, rowvar=False)
        assert frechet_distance(mu, cov, mu, cov) <= 1e-6

    def test_reduces_to_mean_distance_for_equal_identity_covariances(self):
        eye = np.eye(2)
        d = frechet_distance([0.0, 0.0], eye, [3.0, 4.0], eye)
        assert d == pytest.approx(25.0, abs=1e-9)

    def test_commuting_diagonal_closed_form(self):
        # Per-axis (sigma1 - sigma2)^2 oracle for aligned diagonals.
        d = frechet_distance([0, 0], np.diag([1.0, 4.0]), [0, 0], np.diag([9.0, 1.0]))
        assert d == pytest.approx((1 - 3) ** 2 + (2 - 1) ** 2, abs=1e-6)

    def test_symmetry(self):
        rng = np.random.default_rng(1)
        a = rng.normal(size=(30, 4))
        b = rng.normal(size=(30, 4)) + 0.5
        m1, c1 = a.mean(0), np.cov(a, rowvar=False)
        m2, c2 = b.mean(0), np.cov(b, rowvar=False)
        assert abs(frechet_distance(m1, c1, m2, c2) - frechet_distance(m2, c2, m1, c1)) <= 1e-8

    def test_nonnegative(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            a = rng.normal(size=(12, 3))
            m, c = a.mean(0), np.cov(a, rowvar=False)
            assert frechet_distance(m, c, m + 1e-9, c) >= 0.0


class TestERD:
    def test_training_beats_repeat_last_frame(self, walk_motions):
        train, held = walk_motions[:18], walk_motions[18:]
        model = train_erd(train, clip_length=8, seed=0)
        clips = extract_clips(held, 8)
        import torch

        from scenemotion.evaluation import _clips_to_frames

        frames = _clips_to_frames(clips, model.root_index)
        with torch.no_grad():
            pred = model(frames[:, :-1])
        model_err = float(((pred - frames[:, 1:]) ** 2).mean())
        repeat_err = float(((frames[:, :-1] - frames[:, 1:]) ** 2).mean())
        assert model_err < repeat_err

    def test_seed_determinism(self, walk_motions):
        a = train_erd(walk_motions[:8], clip_length=4, seed=3, steps=40)
        b = train_erd(walk_motions[:8], clip_length=4, seed=3, steps=40)
        assert parameter_fingerprint(a) == parameter_fingerprint(b)

    def test_accepts_shorter_clips_rejects_longer(self, walk_motions):
        model = train_erd(walk_motions[:8], clip_length=8, steps=20)
        short = extract_clips(walk_motions[:2], 4)
        assert erd_features(model, short).shape[1] == model.feature_dim
        with pytest.raises(ValidationError):
            erd_features(model, extract_clips(walk_motions[:2], 16))

    def test_identical_clips_identical_features(self, walk_motions):
        model = train_erd(walk_motions[:8], clip_length=4, steps=20)
        clips = extract_clips(walk_motions[:2], 4)
        f1 = erd_features(model, clips)
        f2 = erd_features(model, clips.copy())
        assert np.array_equal(f1, f2)

    def test_feature_dimension_constant_across_clip_lengths(self, walk_motions):
        model = train_erd(walk_motions[:8], clip_length=8, steps=20)
        for length in (2, 4, 8):
            feats = erd_features(model, extract_clips(walk_motions[:2], length))
            assert feats.shape[1] == model.feature_dim

    def test_scrambled_clips_are_separable(self, walk_motions):
        model = train_erd(walk_motions, clip_length=8, seed=1)
        clips = extract_clips(walk_motions, 8)
        rng = np.random.default_rng(0)
        scrambled = np.stack([c[:, :, rng.permutation(8)] for c in clips])
        real_f = erd_features(model, clips)
        scram_f = erd_features(model, scrambled)
        # Scrambled clips land far from every real feature, while real clips
        # have close real neighbours: the mean nearest-real distance ratio
        # separates the two sets.
        d_rr = np.linalg.norm(real_f[:, None] - real_f[None], axis=-1)
        np.fill_diagonal(d_rr, np.inf)
        d_sr = np.linalg.norm(scram_f[:, None] - real_f[None], axis=-1)
        assert d_sr.min(axis=1).mean() / d_rr.min(axis=1).mean() > 1.0


class TestMotionFID:
    def _models(self, motions):
        return [train_erd(motions, length, steps=60, seed=length) for length in (4, 8, 16)]

    def test_identical_sets_score_near_zero(self, walk_motions):
        models = self._models(walk_motions)
        report = motion_fid(walk_motions, walk_motions, models)
        assert all(v < 1e-3 for v in report.cells.values())
        assert report.average < 1e-3

    def test_sample_permutation_invariance(self, walk_motions):
        models = self._models(walk_motions)
        a = motion_fid(walk_motions[:12], walk_motions[12:], models)
        b = motion_fid(walk_motions[:12][::-1], walk_motions[12:][::-1], models)
        # Permutation only reorders float summations inside the moments.
        assert a.average == pytest.approx(b.average, rel=1e-5)

    def test_too_few_samples_rejected(self, walk_motions):
        models = self._models(walk_motions)
        with pytest.raises(ValidationError):
            motion_fid(walk_motions[:1], walk_motions[:1], models, clip_lengths=(16,))

    def test_full_scale_grouping(self):
        # Length-64 motions follow the 2..64 grid with pairwise aggregates.
        lengths = default_clip_lengths(64)
        assert lengths == (2, 4, 8, 16, 32, 64)
        groups = split_clip_groups(lengths)
        assert groups == ((2, 4), (8, 16), (32, 64))
        rng = np.random.default_rng(0)
        motions = [rng.normal(size=(3, 19, 64)) for _ in range(6)]
        import torch

        models = []
        for length in (16, 32, 64):
            torch.manual_seed(length)
            models.append(ERDModel(19, length, feature_dim=8).eval())
        report = motion_fid(motions[:3], motions[3:], models)
        short = [v for (m, c), v in report.cells.items() if c in (2, 4)]
        mid = [v for (m, c), v in report.cells.items() if c in (8, 16)]
        long_ = [v for (m, c), v in report.cells.items() if c in (32, 64)]
        assert report.short == pytest.approx(np.mean(short))
        assert report.mid == pytest.approx(np.mean(mid))
        assert report.long == pytest.approx(np.mean(long_))
        assert report.average == pytest.approx(np.mean(list(report.cells.values())))
        # Models only score clips up to their own training length.
        assert (16, 32) not in report.cells and (16, 64) not in report.cells
        assert (32, 64) not in report.cells


class TestNonCollision:
    def test_far_motions_score_one(self, skeleton):
        rng = np.random.default_rng(3)
        motions = [rng.normal(size=(3, 19, 8)) * 0.2 for _ in range(5)]
        cloud = PointCloud(np.full((50, 3), 100.0))
        for r in (0.03, 0.045, 0.06):
            for t in (40, 60, 80, 100):
                assert non_collision_ratio(motions, cloud, skeleton, r, t) == 1.0

    def test_embedded_motion_is_flagged_everywhere(self, tiny_world, skeleton):
        cfg = WorldConfig(image_height=64, image_width=128, focal=60.0,
                          obstacle_count=(2, 4))
        scene = generate_scene(8, cfg)
        box_min, box_max = scene.obstacles[0]
        centre = (box_min + box_max) / 2.0
        # Anchor the pose on the box's visible surface: the cloud point
        # nearest its centre lies on a face seen by the camera.
        pts = scene.cloud.points
        anchor = pts[np.linalg.norm(pts - centre, axis=1).argmin()]
        # Joints zigzag across a 0.6 m square in the face plane, so the bone
        # tree sweeps plenty of surface points at the smallest radius.
        j = skeleton.joint_count
        grid = np.stack([
            np.linspace(-0.3, 0.3, j),
            np.tile([-0.3, 0.3], (j + 1) // 2)[:j],
            np.zeros(j),
        ])
        motion = np.repeat(grid[:, :, None], 16, axis=2) + anchor[:, None, None]
        count = motion_collision_count(motion, skeleton, 0.03, scene.cloud)
        brute = 0
        for t in range(16):
            for a_idx, b_idx in skeleton.bones:
                a, b = motion[:, a_idx, t], motion[:, b_idx, t]
                d = b - a
                for p in pts:
                    s = float((p - a) @ d / (d @ d))
                    if 0 <= s <= 1 and np.linalg.norm(p - a - s * d) <= 0.03:
                        brute += 1
        assert count == brute
        assert count > 100
        report = collision_report([motion], scene.cloud, skeleton)
        assert all(v == 0.0 for v in report.cells.values())

    def test_empty_motion_set_rejected(self, skeleton):
        with pytest.raises(ValidationError):
            non_collision_ratio([], PointCloud(np.zeros((1, 3))), skeleton, 0.03, 40)

    def test_report_grid_and_monotonicity(self, walk_motions, tiny_world, skeleton):
        scene = generate_scene(40, tiny_world)
        report = collision_report(walk_motions[:6], scene.cloud, skeleton)
        assert set(report.radii_mm) == {30.0, 45.0, 60.0}
        assert set(report.thresholds) == {40, 60, 80, 100}
        assert len(report.cells) == 12
        assert set(report.per_radius) == {30.0, 45.0, 60.0}


class TestTrajectoryStdCurve:
    def test_identical_samples_give_zero(self):
        track = np.zeros((1, 10, 3))
        track[0, :, 0] = np.linspace(0, 1, 10)
        tracks = np.repeat(track, 5, axis=0)
        assert np.abs(trajectory_std_curve(tracks)).max() <= 1e-12

    def test_repeated_deterministic_sample_gives_zero(self):
        rng = np.random.default_rng(4)
        one = np.cumsum(rng.normal(size=(12, 3)) * 0.01, axis=0)
        one[0] = 0.0
        tracks = np.stack([one] * 5)
        assert np.abs(trajectory_std_curve(tracks)).max() <= 1e-12

    def test_bowed_pair_peaks_at_the_bow(self):
        # Two straight runs to a shared endpoint, bowed by +/- d in x and z
        # at the midpoint; the population std across the two samples is d at
        # mid-frame and zero at the ends.
        frames, d = 9, 0.35
        base = np.zeros((frames, 3))
        base[:, 0] = np.linspace(0.0, 1.0, frames)
        bow = np.sin(np.linspace(0.0, np.pi, frames)) * d
        a, b = base.copy(), base.copy()
        a[:, 0] += bow
        a[:, 2] += bow
        b[:, 0] -= bow
        b[:, 2] -= bow
        a[0] = b[0] = 0.0
        curve = trajectory_std_curve(np.stack([a, b]))
        assert curve[frames // 2] == pytest.approx(d, abs=1e-9)
        assert curve[0] == 0.0
        assert curve[-1] == pytest.approx(0.0, abs=1e-9)

    def test_endpoint_filter(self):
        rng = np.random.default_rng(5)
        tracks = np.cumsum(rng.normal(size=(6, 8, 3)) * 0.02, axis=1)
        tracks[:, 0] = 0.0
        tracks[5, -1] += 10.0  # one outlier endpoint
        filtered = trajectory_std_curve(tracks, endpoint_tolerance=1.0)
        assert filtered.shape == (8,)

    def test_filter_leaving_one_sample_rejected(self):
        spread = np.zeros((3, 4, 3))
        spread[1, -1, 0] = 5.0
        spread[2, -1, 0] = -5.0
        with pytest.raises(ValidationError):
            trajectory_std_curve(spread, endpoint_tolerance=0.5)

    def test_too_few_samples_rejected(self):
        with pytest.raises(ValidationError):
            trajectory_std_curve(np.zeros((1, 5, 3)))
