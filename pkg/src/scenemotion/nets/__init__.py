from .config import GeneratorConfig, desk_scale_config, paper_scale_config
from .critics import ContextCritic, PoseCritic, ProjectionCritic, TrajectoryCritic
from .encoder import DepthHead, SceneEncoder, berhu_loss, image_to_tensor
from .generators import (
    JointMotionGenerator,
    PoseGenerator,
    TrajectoryGenerator,
    velocities_to_positions,
)
from .stack import SynthesisStack, synthesize_motions

__all__ = [
    "GeneratorConfig",
    "desk_scale_config",
    "paper_scale_config",
    "ContextCritic",
    "PoseCritic",
    "ProjectionCritic",
    "TrajectoryCritic",
    "DepthHead",
    "SceneEncoder",
    "berhu_loss",
    "image_to_tensor",
    "JointMotionGenerator",
    "PoseGenerator",
    "TrajectoryGenerator",
    "velocities_to_positions",
    "SynthesisStack",
    "synthesize_motions",
]
