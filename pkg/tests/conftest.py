import numpy as np
import pytest
import torch
from hypothesis import HealthCheck, settings

from scenemotion.nets.config import GeneratorConfig
from scenemotion.skeleton import default_skeleton
from scenemotion.worldgen import WorldConfig

settings.register_profile(
    "suite", max_examples=25, deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")

torch.manual_seed(0)


@pytest.fixture(scope="session")
def skeleton():
    return default_skeleton()


@pytest.fixture(scope="session")
def tiny_cfg():
    """A fast 8-frame configuration for unit tests."""
    return GeneratorConfig(
        base_length=4,
        doubling_stages=2,
        scene_feature_dim=16,
        traj_latent_channels=16,
        pose_latent_channels=32,
        traj_stage_channels=(32, 16, 8),
        pose_stage_channels=(32, 16, 8),
        critic_stage_channels=(8, 16, 32),
        critic_head_dim=32,
        context_stage_channels=(8, 16, 16),
        encoder_channels=(8, 16, 16, 16),
        image_height=64,
        image_width=128,
    )


@pytest.fixture(scope="session")
def tiny_world():
    return WorldConfig(image_height=64, image_width=128, focal=60.0)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(1234)


_ACCEPTANCE_PREFIX = "tests/test_acceptance.py"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    rows = []
    for outcome in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(outcome, []):
            if getattr(report, "when", "call") != "call":
                continue
            if "test_acceptance" in report.nodeid:
                name = report.nodeid.split("::")[-1].replace("test_", "").replace("_", " ")
                rows.append((name, "PASS" if outcome == "passed" else "FAIL"))
    if rows:
        terminalreporter.write_sep("=", "acceptance criteria")
        for name, verdict in rows:
            terminalreporter.write_line(f"{verdict}  {name}")
