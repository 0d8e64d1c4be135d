"""Shared architecture configuration for the generator and critic stacks."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

from ..errors import ConfigError
from ..gp import GPLatentConfig, default_sigmas


@dataclass(frozen=True)
class GeneratorConfig:
    """Widths, timeline and conditioning sizes for the full network stack.

    The output length is 2^doubling_stages * (base_length - 2): the first
    stage applies an unpadded temporal convolution (kernel 3) and every later
    stage doubles the timeline.  Critics mirror the stage count with temporal
    halving.  Defaults describe the desk scale; `paper_scale_config` restores
    the full-size stack.
    """

    base_length: int = 6
    doubling_stages: int = 2
    max_speed: float = 0.04
    pose_scale: float = 1.0
    joint_count: int = 19
    scene_feature_dim: int = 64
    traj_latent_channels: int = 64
    pose_latent_channels: int = 256
    traj_stage_channels: tuple[int, ...] = (128, 64, 32)
    pose_stage_channels: tuple[int, ...] = (128, 64, 32)
    critic_stage_channels: tuple[int, ...] = (16, 32, 128)
    critic_head_dim: int = 128
    context_stage_channels: tuple[int, ...] = (16, 32, 64)
    encoder_channels: tuple[int, ...] = (16, 32, 64, 64)
    image_height: int = 128
    image_width: int = 256
    context_frame_stride: int = 8
    gp_sigma_range: tuple[float, float] = (0.5, 8.0)
    gp_jitter: float = 1e-6
    paper_scale: bool = False

    def __post_init__(self):
        if self.base_length < 3:
            raise ConfigError("base_length must be at least 3 for the unpadded first stage")
        if self.doubling_stages < 1:
            raise ConfigError("doubling_stages must be >= 1")
        if self.max_speed <= 0:
            raise ConfigError("max_speed must be positive")
        if self.pose_scale <= 0:
            raise ConfigError("pose_scale must be positive")
        stages = self.stage_count
        for name, widths in (
            ("traj_stage_channels", self.traj_stage_channels),
            ("pose_stage_channels", self.pose_stage_channels),
            ("critic_stage_channels", self.critic_stage_channels),
        ):
            if len(widths) != stages:
                raise ConfigError(f"{name} must list {stages} widths, got {len(widths)}")
        if len(self.encoder_channels) < 2:
            raise ConfigError("encoder_channels needs at least two entries")
        if self.image_height % 4 or self.image_width % 4:
            raise ConfigError("image sides must be divisible by 4 (crop size is a quarter)")
        down = 2 ** len(self.context_stage_channels)
        if self.crop_height % down or self.crop_width % down:
            raise ConfigError("context crops must survive every halving stage")
        if self.context_frame_stride < 1:
            raise ConfigError("context_frame_stride must be >= 1")
        lo, hi = self.gp_sigma_range
        if lo <= 0 or hi < lo:
            raise ConfigError("gp_sigma_range must be 0 < low <= high")

    @property
    def stage_count(self) -> int:
        return self.doubling_stages + 1

    @property
    def sequence_length(self) -> int:
        return 2 ** self.doubling_stages * (self.base_length - 2)

    @property
    def crop_height(self) -> int:
        return self.image_height // 4

    @property
    def crop_width(self) -> int:
        return self.image_width // 4

    @property
    def context_crop_count(self) -> int:
        return self.sequence_length // self.context_frame_stride + 1

    def trajectory_latent_config(self) -> GPLatentConfig:
        return GPLatentConfig(
            channels=self.traj_latent_channels,
            length=self.base_length,
            sigmas=default_sigmas(self.traj_latent_channels, *self.gp_sigma_range),
            jitter=self.gp_jitter,
        )

    def pose_latent_config(self) -> GPLatentConfig:
        return GPLatentConfig(
            channels=self.pose_latent_channels,
            length=self.base_length,
            sigmas=default_sigmas(self.pose_latent_channels, *self.gp_sigma_range),
            jitter=self.gp_jitter,
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, payload: dict) -> "GeneratorConfig":
        known = {f: payload[f] for f in payload if f in cls.__dataclass_fields__}
        for key, value in known.items():
            if isinstance(value, list):
                known[key] = tuple(value)
        return cls(**known)


def desk_scale_config(**overrides) -> GeneratorConfig:
    """The default small configuration: 128x256 scenes, 16-frame motions."""
    return GeneratorConfig(**overrides)


def paper_scale_config() -> GeneratorConfig:
    """Full-size stack: 64-frame motions, 288x512 scenes, 72x128 crops."""
    return GeneratorConfig(
        base_length=6,
        doubling_stages=4,
        scene_feature_dim=256,
        traj_latent_channels=256,
        pose_latent_channels=1024,
        traj_stage_channels=(512, 256, 128, 64, 32),
        pose_stage_channels=(512, 256, 128, 64, 32),
        critic_stage_channels=(64, 64, 128, 256, 512),
        critic_head_dim=512,
        context_stage_channels=(64, 128, 256),
        encoder_channels=(64, 128, 256, 256),
        image_height=288,
        image_width=512,
        paper_scale=True,
    )
