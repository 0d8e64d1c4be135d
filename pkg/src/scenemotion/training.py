"""Adversarial training of the synthesis stack against the four critics.

Each round runs `n_critic` critic updates followed by one generator update.
Critic updates use E[D(fake)] - E[D(real)] plus a gradient penalty pulling
the per-sample gradient norm toward the target (weight 10, target 0.1); the
generator update combines the negated critic scores with the depth loss and
steps the encoder and both generators jointly.  Fakes fed to critics are
generated with the stack in eval mode, so critic updates leave generator
parameters and normalization buffers bitwise untouched.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .dataio import Dataset, _blob_entry, _verify_blob, read_tensor, write_tensor
from .errors import ConfigError, DataFormatError, NumericalError, ValidationError
from .geometry import project_motion_torch, relative_depth_crops
from .nets.config import GeneratorConfig
from .nets.critics import ContextCritic, PoseCritic, ProjectionCritic, TrajectoryCritic
from .nets.encoder import berhu_loss
from .nets.stack import SynthesisStack
from .skeleton import SkeletonGraph

ABLATION_FLAGS = {
    "M": "two_stage",
    "D": "depth_supervision",
    "P": "projection_critic",
    "C": "context_critic",
}


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    gp_weight: float = 10.0
    gp_target: float = 0.1
    n_critic: int = 5
    epochs: int = 1
    steps: int | None = None
    batch_size: int = 8
    w_traj: float = 1.0
    w_pose: float = 1.0
    w_proj: float = 1.0
    w_context: float = 1.0
    w_depth: float = 1.0
    two_stage: bool = True
    depth_supervision: bool = True
    projection_critic: bool = True
    context_critic: bool = True
    trajectory_critic: bool = True
    pose_critic: bool = True
    seed: int = 0
    checkpoint_interval: int = 0
    isolation_check_interval: int = 0

    def __post_init__(self):
        if self.gp_weight < 0 or self.gp_target < 0:
            raise ConfigError("gradient penalty weight and target must be non-negative")
        if self.n_critic < 1:
            raise ConfigError("n_critic must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, payload: dict) -> "TrainConfig":
        known = {f: payload[f] for f in payload if f in cls.__dataclass_fields__}
        return cls(**known)


def parameter_fingerprint(*modules: nn.Module) -> str:
    """sha256 over all parameters and buffers, for bitwise isolation checks."""
    digest = hashlib.sha256()
    for module in modules:
        for _, tensor in sorted(module.state_dict().items()):
            digest.update(tensor.detach().cpu().numpy().tobytes())
    return digest.hexdigest()


def gradient_penalty(critic_fn, real, fake, rng: torch.Generator | None = None,
                     weight: float = 10.0, target: float = 0.1) -> torch.Tensor:
    """Two-sided gradient penalty on per-sample random interpolates.

    `real` and `fake` may be single tensors or tuples of tensors; the same
    per-sample mixing coefficient applies to every tensor of a sample, and the
    gradient norm is taken jointly over all of them.
    """
    reals = real if isinstance(real, (tuple, list)) else (real,)
    fakes = fake if isinstance(fake, (tuple, list)) else (fake,)
    if len(reals) != len(fakes):
        raise ValidationError("real and fake samples must carry the same tensors")
    for r, f in zip(reals, fakes):
        if r.shape != f.shape:
            raise ValidationError(f"batch shape mismatch: {tuple(r.shape)} vs {tuple(f.shape)}")
    batch = reals[0].shape[0]
    eps = torch.rand(batch, generator=rng, dtype=reals[0].dtype, device=reals[0].device)
    mixed = []
    for r, f in zip(reals, fakes):
        shape = (batch,) + (1,) * (r.dim() - 1)
        e = eps.reshape(shape)
        mixed.append((e * r.detach() + (1.0 - e) * f.detach()).requires_grad_(True))
    scores = critic_fn(*mixed)
    grads = torch.autograd.grad(scores.sum(), mixed, create_graph=True)
    flat = torch.cat([g.reshape(batch, -1) for g in grads], dim=1)
    if not torch.isfinite(flat).all():
        raise NumericalError("non-finite critic gradients inside the penalty")
    norms = flat.pow(2).sum(dim=1).sqrt()
    return weight * ((norms - target) ** 2).mean()


@dataclass
class _Batch:
    images: torch.Tensor      # (N, 3, H, W)
    depth_gt: torch.Tensor    # (N, H, W)
    joints: torch.Tensor      # (N, 3, J, T)
    scene_index: np.ndarray   # (N,)


class Trainer:
    """Owns the stack, the critics, their optimizers and the data plumbing."""

    def __init__(self, dataset: Dataset, model_cfg: GeneratorConfig,
                 train_cfg: TrainConfig):
        self.dataset = dataset
        self.model_cfg = model_cfg
        self.train_cfg = train_cfg
        self.graph = dataset.skeleton
        if self.graph.joint_count != model_cfg.joint_count:
            raise ValidationError("dataset skeleton does not match the model configuration")
        frames = {m.joints.shape[2] for m in dataset.motions}
        if frames and frames != {model_cfg.sequence_length}:
            raise ValidationError(
                f"dataset motions span {sorted(frames)} frames, "
                f"model expects {model_cfg.sequence_length}"
            )
        torch.manual_seed(train_cfg.seed)
        self.stack = SynthesisStack(model_cfg, self.graph, two_stage=train_cfg.two_stage)
        self.critics: dict[str, nn.Module] = {}
        if train_cfg.trajectory_critic:
            self.critics["traj"] = TrajectoryCritic(model_cfg, self.graph)
        if train_cfg.pose_critic:
            self.critics["pose"] = PoseCritic(model_cfg, self.graph)
        if train_cfg.projection_critic:
            self.critics["proj"] = ProjectionCritic(model_cfg, self.graph)
        if train_cfg.context_critic:
            self.critics["context"] = ContextCritic(model_cfg)
        betas = (train_cfg.beta1, train_cfg.beta2)
        self.generator_opt = torch.optim.Adam(
            self.stack.parameters(), lr=train_cfg.learning_rate, betas=betas
        )
        self.critic_opts = {
            name: torch.optim.Adam(critic.parameters(), lr=train_cfg.learning_rate, betas=betas)
            for name, critic in self.critics.items()
        }
        self.np_rng = np.random.default_rng(train_cfg.seed)
        self.torch_rng = torch.Generator().manual_seed(train_cfg.seed)

        cam0 = dataset.scenes[0].camera if dataset.scenes else None
        for record in dataset.scenes:
            if record.image.shape[:2] != (model_cfg.image_height, model_cfg.image_width):
                raise ValidationError("scene image size does not match the model configuration")
            if record.camera != cam0:
                raise ValidationError("all scenes must share one set of intrinsics")
        self.camera = cam0
        self._scene_images = torch.stack(
            [torch.from_numpy(np.ascontiguousarray(s.image.transpose(2, 0, 1))).float()
             for s in dataset.scenes]
        ) if dataset.scenes else torch.zeros(0)
        self._scene_depths = torch.stack(
            [torch.from_numpy(s.depth.values.astype(np.float32)) for s in dataset.scenes]
        ) if dataset.scenes else torch.zeros(0)
        self._scene_cache: dict[int, tuple[torch.Tensor, torch.Tensor]] = {}

    # -- data ---------------------------------------------------------------

    def make_batch(self, indices) -> _Batch:
        indices = np.asarray(indices, dtype=np.int64)
        scene_idx = np.array([self.dataset.motions[i].scene_index for i in indices])
        joints = torch.from_numpy(
            np.stack([self.dataset.motions[i].joints for i in indices]).astype(np.float32)
        )
        return _Batch(
            images=self._scene_images[scene_idx],
            depth_gt=self._scene_depths[scene_idx],
            joints=joints,
            scene_index=scene_idx,
        )

    def _batch_stream(self):
        count = len(self.dataset.motions)
        if count == 0:
            raise ValidationError("the dataset holds no motions")
        batch = self.train_cfg.batch_size
        while True:
            order = self.np_rng.permutation(count)
            for lo in range(0, count - batch + 1, batch):
                yield order[lo : lo + batch]
            if count < batch:
                yield self.np_rng.choice(count, size=batch, replace=True)

    # -- shared assembly ----------------------------------------------------

    def _frozen_scene_features(self, scene_idx: np.ndarray):
        """Cached eval-mode encoder outputs; valid until the next generator step."""
        missing = [int(i) for i in np.unique(scene_idx) if int(i) not in self._scene_cache]
        if missing:
            with torch.no_grad():
                images = self._scene_images[missing]
                f_scene, feature_map = self.stack.encoder(images)
                depth_est = self.stack.depth_head(feature_map)
            for row, idx in enumerate(missing):
                self._scene_cache[idx] = (f_scene[row], depth_est[row])
        f = torch.stack([self._scene_cache[int(i)][0] for i in scene_idx])
        d = torch.stack([self._scene_cache[int(i)][1] for i in scene_idx])
        return f, d

    def _split_real(self, batch: _Batch):
        root = self.graph.root_index
        track = batch.joints[:, :, root, :]                      # (N, 3, T)
        anchor = track[:, :, 0]                                  # (N, 3)
        positions = (track - anchor[:, :, None])[:, :, None, :]  # (N, 3, 1, T)
        poses = batch.joints - batch.joints[:, :, root : root + 1, :]
        p0 = batch.joints[:, :, :, 0]                            # (N, 3, J)
        return positions, poses, p0, anchor

    def _critic_inputs(self, positions, poses, p0, anchor, f_scene, depth_est):
        """Sample tensors per critic, shared by the real and fake routes."""
        cfg = self.model_cfg
        cam = self.camera
        zero = torch.zeros_like(positions[..., :1])
        traj_ext = torch.cat([zero, positions], dim=-1)           # (N, 3, 1, T+1)
        p0_centered = p0 - p0[:, :, self.graph.root_index : self.graph.root_index + 1]
        pose_ext = torch.cat([p0_centered[:, :, :, None], poses], dim=-1)
        absolute = pose_ext + traj_ext + anchor[:, :, None, None]
        pixels = project_motion_torch(absolute, cam.fx, cam.fy, cam.cx, cam.cy)
        norm = torch.stack(
            [pixels[:, 0] * (2.0 / (cam.width - 1)) - 1.0,
             pixels[:, 1] * (2.0 / (cam.height - 1)) - 1.0],
            dim=1,
        )
        samples = {"traj": (positions,), "pose": (pose_ext, traj_ext), "proj": (norm,)}
        if "context" in self.critics:
            frames = torch.arange(0, cfg.sequence_length + 1, cfg.context_frame_stride)
            roots = (anchor[:, :, None] + traj_ext[:, :, 0, :])[:, :, frames]
            roots = roots.permute(0, 2, 1)                        # (N, crops, 3)
            # The depth estimate enters the crops as data: generator gradients
            # reach the context critic through the crop centres, while the
            # depth head itself is trained only by the depth supervision term.
            crops = relative_depth_crops(
                depth_est.detach(), cam.fx, cam.fy, cam.cx, cam.cy, cam.width, cam.height,
                roots, cfg.crop_height, cfg.crop_width,
            )
            samples["context"] = (crops,)
        return samples

    def _conditions(self, f_scene, p0):
        return {
            "traj": (f_scene, p0),
            "pose": (f_scene,),
            "proj": (f_scene,),
            "context": (),
        }

    @staticmethod
    def _check_finite(name: str, value: torch.Tensor, report: dict):
        if not torch.isfinite(value).all():
            raise NumericalError(f"non-finite loss in {name}; components so far: {report}")

    # -- optimization steps ---------------------------------------------------

    def critic_step(self, batch: _Batch) -> dict:
        """One optimizer step per enabled critic; the generator stays frozen."""
        if not self.critics:
            return {}
        cfg = self.train_cfg
        self.stack.eval()
        with torch.no_grad():
            f_scene, depth_est = self._frozen_scene_features(batch.scene_index)
            positions_r, poses_r, p0, anchor = self._split_real(batch)
            latents = self.stack.sample_latents(batch.joints.shape[0], self.np_rng)
            _, positions_f, poses_f = self.stack.generate(latents, f_scene, p0)
            real = self._critic_inputs(positions_r, poses_r, p0, anchor, f_scene, depth_est)
            fake = self._critic_inputs(positions_f, poses_f, p0, anchor, f_scene, depth_est)
            conds = self._conditions(f_scene, p0)

        report = {}
        for name, critic in self.critics.items():
            opt = self.critic_opts[name]

            def scorer(*sample_tensors, _critic=critic, _cond=conds[name]):
                return _critic(*sample_tensors, *_cond)

            wasserstein = scorer(*fake[name]).mean() - scorer(*real[name]).mean()
            penalty = gradient_penalty(
                scorer, real[name], fake[name], rng=self.torch_rng,
                weight=cfg.gp_weight, target=cfg.gp_target,
            )
            loss = wasserstein + penalty
            self._check_finite(f"critic_{name}", loss, report)
            opt.zero_grad(set_to_none=True)
            loss.backward()
            opt.step()
            report[f"critic_{name}_w"] = float(wasserstein.detach())
            report[f"critic_{name}_gp"] = float(penalty.detach())
            report[f"critic_{name}_loss"] = float(loss.detach())
        return report

    def _generator_objective(self, batch: _Batch, latents=None):
        """The generator-side loss and its report; the caller sets the mode."""
        cfg = self.train_cfg
        f_scene, feature_map = self.stack.encoder(batch.images)
        depth_est = self.stack.depth_head(feature_map)
        positions_r, poses_r, p0, anchor = self._split_real(batch)
        if latents is None:
            latents = self.stack.sample_latents(batch.joints.shape[0], self.np_rng)
        _, positions_f, poses_f = self.stack.generate(latents, f_scene, p0)
        fake = self._critic_inputs(positions_f, poses_f, p0, anchor, f_scene, depth_est)
        conds = self._conditions(f_scene.detach(), p0)

        weights = {"traj": cfg.w_traj, "pose": cfg.w_pose, "proj": cfg.w_proj,
                   "context": cfg.w_context}
        report = {}
        total = torch.zeros(())
        for name, critic in self.critics.items():
            adversarial = -critic(*fake[name], *conds[name]).mean()
            self._check_finite(f"generator_{name}", adversarial, report)
            report[f"gen_adv_{name}"] = float(adversarial.detach())
            total = total + weights[name] * adversarial
        if cfg.depth_supervision:
            mask = batch.depth_gt > 0
            depth = berhu_loss(depth_est, batch.depth_gt, mask)
            self._check_finite("depth", depth, report)
            report["gen_depth"] = float(depth.detach())
            total = total + cfg.w_depth * depth
        self._check_finite("generator_total", total, report)
        report["gen_total"] = float(total.detach())
        return total, report

    def generator_loss(self, batch: _Batch, latents=None) -> float:
        """The generator objective on a frozen batch, without stepping."""
        self.stack.train()
        with torch.no_grad():
            _, report = self._generator_objective(batch, latents)
        return report["gen_total"]

    def generator_step(self, batch: _Batch, latents=None) -> dict:
        """One joint step over encoder, depth head and generators."""
        self.stack.train()
        total, report = self._generator_objective(batch, latents)
        self.generator_opt.zero_grad(set_to_none=True)
        if total.requires_grad:
            total.backward()
        self.generator_opt.step()
        self._scene_cache.clear()
        return report

    # -- the loop -------------------------------------------------------------

    def fit(self, checkpoint_dir=None) -> list[dict]:
        cfg = self.train_cfg
        per_epoch = max(1, len(self.dataset.motions) // (cfg.batch_size * (cfg.n_critic + 1)))
        rounds = cfg.steps if cfg.steps is not None else cfg.epochs * per_epoch
        stream = self._batch_stream() if rounds > 0 else None
        sink = Path(checkpoint_dir) if checkpoint_dir is not None else None
        log: list[dict] = []
        started = time.perf_counter()
        for step in range(rounds):
            record: dict = {"step": step}
            if cfg.isolation_check_interval and step % cfg.isolation_check_interval == 0:
                before_gen = parameter_fingerprint(self.stack)
                for _ in range(cfg.n_critic):
                    record.update(self.critic_step(self.make_batch(next(stream))))
                if parameter_fingerprint(self.stack) != before_gen:
                    raise NumericalError("critic steps modified generator state")
                before_critics = parameter_fingerprint(*self.critics.values())
                record.update(self.generator_step(self.make_batch(next(stream))))
                if parameter_fingerprint(*self.critics.values()) != before_critics:
                    raise NumericalError("the generator step modified critic state")
            else:
                for _ in range(cfg.n_critic):
                    record.update(self.critic_step(self.make_batch(next(stream))))
                record.update(self.generator_step(self.make_batch(next(stream))))
            record["wall_time_s"] = time.perf_counter() - started
            log.append(record)
            if sink and cfg.checkpoint_interval and (step + 1) % cfg.checkpoint_interval == 0:
                self.save(sink / f"checkpoint-{step + 1:06d}")
        if sink:
            self.save(sink / "checkpoint-final")
        return log

    def save(self, directory) -> Path:
        return save_checkpoint(
            directory, self.stack, self.critics, self.model_cfg, self.train_cfg, self.graph
        )


# --------------------------------------------------------------------------
# Checkpoints: JSON manifest plus one float32 blob per tensor
# --------------------------------------------------------------------------

def save_checkpoint(directory, stack: SynthesisStack, critics: dict,
                    model_cfg: GeneratorConfig, train_cfg: TrainConfig,
                    skeleton: SkeletonGraph) -> Path:
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    modules = {"stack": stack}
    modules.update({f"critic_{name}": critic for name, critic in critics.items()})
    tensors = {}
    for prefix, module in modules.items():
        for key, tensor in module.state_dict().items():
            name = f"{prefix}.{key}"
            rel = f"tensors/{name}.smlb"
            array = tensor.detach().cpu().numpy()
            write_tensor(root / rel, array.astype(np.float32))
            entry = _blob_entry(root, rel)
            entry["dtype"] = str(array.dtype)
            entry["shape"] = list(array.shape)
            tensors[name] = entry
    manifest = {
        "format_version": 1,
        "kind": "checkpoint",
        "model_config": model_cfg.to_dict(),
        "train_config": train_cfg.to_dict(),
        "skeleton": skeleton.to_dict(),
        "tensors": tensors,
    }
    path = root / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return path


def load_checkpoint(directory):
    """Rebuilds (stack, critics, model_cfg, train_cfg, skeleton) from disk."""
    root = Path(directory)
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise DataFormatError(f"{manifest_path}: no manifest found")
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("kind") != "checkpoint":
        raise DataFormatError(f"{manifest_path}: not a checkpoint manifest")
    model_cfg = GeneratorConfig.from_dict(manifest["model_config"])
    train_cfg = TrainConfig.from_dict(manifest["train_config"])
    skeleton = SkeletonGraph.from_dict(manifest["skeleton"])
    stack = SynthesisStack(model_cfg, skeleton, two_stage=train_cfg.two_stage)
    critics: dict[str, nn.Module] = {}
    if train_cfg.trajectory_critic:
        critics["traj"] = TrajectoryCritic(model_cfg, skeleton)
    if train_cfg.pose_critic:
        critics["pose"] = PoseCritic(model_cfg, skeleton)
    if train_cfg.projection_critic:
        critics["proj"] = ProjectionCritic(model_cfg, skeleton)
    if train_cfg.context_critic:
        critics["context"] = ContextCritic(model_cfg)
    modules = {"stack": stack}
    modules.update({f"critic_{name}": critic for name, critic in critics.items()})
    for prefix, module in modules.items():
        state = {}
        for key, reference in module.state_dict().items():
            name = f"{prefix}.{key}"
            if name not in manifest["tensors"]:
                raise DataFormatError(f"checkpoint lacks tensor {name}")
            entry = manifest["tensors"][name]
            array = read_tensor(_verify_blob(root, entry))
            array = array.reshape(entry["shape"])
            state[key] = torch.as_tensor(array.astype(entry["dtype"]))
        module.load_state_dict(state)
    return stack, critics, model_cfg, train_cfg, skeleton
