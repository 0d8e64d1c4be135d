"""Scene-conditioned human motion synthesis and its evaluation suite."""

from .errors import (
    BehindCameraError,
    ChecksumError,
    ConfigError,
    DataFormatError,
    MagicError,
    NumericalError,
    TruncatedBlobError,
    ValidationError,
)
from .gp import GPLatentConfig, LatentSequence, build_gp_covariance, sample_latent
from .motion import (
    Motion,
    PoseSequence,
    Trajectory,
    center_subtract,
    compose_motion,
    differentiate_trajectory,
    integrate_velocities,
)
from .skeleton import SkeletonGraph, default_skeleton

__version__ = "0.1.0"

__all__ = [
    "BehindCameraError",
    "ChecksumError",
    "ConfigError",
    "DataFormatError",
    "MagicError",
    "NumericalError",
    "TruncatedBlobError",
    "ValidationError",
    "GPLatentConfig",
    "LatentSequence",
    "build_gp_covariance",
    "sample_latent",
    "Motion",
    "PoseSequence",
    "Trajectory",
    "center_subtract",
    "compose_motion",
    "differentiate_trajectory",
    "integrate_velocities",
    "SkeletonGraph",
    "default_skeleton",
    "__version__",
]
