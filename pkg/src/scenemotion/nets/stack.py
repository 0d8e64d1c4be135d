"""The synthesis stack: scene encoder, depth head and the generator pair."""

from __future__ import annotations

import numpy as np
import torch
from torch import nn

from ..errors import ValidationError
from ..gp import sample_latent_batch
from ..motion import Motion, PoseSequence, compose_motion, integrate_velocities
from ..skeleton import SkeletonGraph, default_skeleton
from .config import GeneratorConfig
from .encoder import DepthHead, SceneEncoder, image_to_tensor
from .generators import JointMotionGenerator, PoseGenerator, TrajectoryGenerator


class SynthesisStack(nn.Module):
    """Bundles the scene branch with either the two-stage or joint generator."""

    def __init__(self, cfg: GeneratorConfig, graph: SkeletonGraph | None = None,
                 two_stage: bool = True):
        super().__init__()
        self.cfg = cfg
        self.graph = graph if graph is not None else default_skeleton()
        self.two_stage = two_stage
        self.encoder = SceneEncoder(cfg)
        self.depth_head = DepthHead(cfg)
        if two_stage:
            self.trajectory_generator = TrajectoryGenerator(cfg, self.graph)
            self.pose_generator = PoseGenerator(cfg, self.graph)
        else:
            self.joint_generator = JointMotionGenerator(cfg, self.graph)
        self._traj_latent_cfg = cfg.trajectory_latent_config()
        self._pose_latent_cfg = cfg.pose_latent_config()

    def sample_latents(self, count: int, rng: np.random.Generator) -> dict[str, torch.Tensor]:
        """Draw GP latents for `count` motions as float32 tensors."""
        latents = {}
        if self.two_stage:
            latents["traj"] = torch.from_numpy(
                sample_latent_batch(self._traj_latent_cfg, count, rng).astype(np.float32)
            )
        latents["pose"] = torch.from_numpy(
            sample_latent_batch(self._pose_latent_cfg, count, rng).astype(np.float32)
        )
        return latents

    def generate(self, latents: dict[str, torch.Tensor], f_scene: torch.Tensor,
                 initial_pose: torch.Tensor):
        """Returns (velocities, positions, poses) for a batch of conditions."""
        if self.two_stage:
            velocities, positions = self.trajectory_generator(
                latents["traj"], f_scene, initial_pose
            )
            poses = self.pose_generator(latents["pose"], f_scene, positions, initial_pose)
            return velocities, positions, poses
        return self.joint_generator(latents["pose"], f_scene, initial_pose)


def synthesize_motions(
    stack: SynthesisStack,
    image: np.ndarray,
    initial_poses,
    rng: np.random.Generator,
) -> list[Motion]:
    """Sample absolute-frame motions for one scene, one per initial pose.

    Each motion is anchored so its first root position coincides with the
    root of its conditioning pose.
    """
    poses_in = [np.asarray(p, dtype=np.float64) for p in initial_poses]
    if not poses_in:
        raise ValidationError("at least one initial pose is required")
    graph = stack.graph
    for p in poses_in:
        if p.shape != (3, graph.joint_count):
            raise ValidationError(f"initial poses must be (3, {graph.joint_count})")
    was_training = stack.training
    stack.eval()
    try:
        with torch.no_grad():
            count = len(poses_in)
            f_scene, _ = stack.encoder(image_to_tensor(image)[None])
            f_scene = f_scene.expand(count, -1)
            p0 = torch.from_numpy(np.stack(poses_in).astype(np.float32))
            latents = stack.sample_latents(count, rng)
            velocities, _, pose_out = stack.generate(latents, f_scene, p0)
    finally:
        stack.train(was_training)

    motions = []
    root = graph.root_index
    for i in range(len(poses_in)):
        trajectory = integrate_velocities(
            velocities[i, :, 0, :].numpy().astype(np.float64).T
        )
        pose_seq = PoseSequence(
            values=pose_out[i].numpy().astype(np.float64), root_index=root
        )
        relative = compose_motion(pose_seq, trajectory)
        anchor = poses_in[i][:, root]
        motions.append(
            Motion.from_joints(relative.joints + anchor[:, None, None], graph)
        )
    return motions
