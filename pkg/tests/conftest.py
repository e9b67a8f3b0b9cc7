import numpy as np
import pytest

from gears.config import desk_config
from gears.hand import N_BETA
from gears.rotations import random_rotation


def random_pose(rng, max_angle=1.2):
    """Axis-angle pose with magnitudes below ``max_angle``."""
    axis = rng.normal(size=(15, 3))
    axis /= np.linalg.norm(axis, axis=1, keepdims=True)
    return axis * rng.uniform(0, max_angle, size=(15, 1))


def random_scene(rng):
    beta = rng.normal(scale=0.8, size=N_BETA)
    return beta, random_pose(rng), random_rotation(rng), rng.uniform(-0.3, 0.3, size=3)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def desk():
    return desk_config(0)


@pytest.fixture(scope="session")
def tiny_config():
    """Small widths and short sequences so network checks run quickly."""
    cfg = desk_config(0)
    return cfg.replace(
        sensor={"crop_points": 32, "max_points": 8, "window_k": 2},
        init_net={"point_widths": [8, 12], "mlp_widths": [16]},
        disp_net={"feat_widths": [6, 8], "embed_widths": [8], "blocks": ["S", "T"]},
        synth={"frames": 12},
        train={"stage1_epochs": 2, "stage2_epochs": 2, "batch_frames": 8, "stage2_copies": 1},
        fit={"iters": 20},
    )


@pytest.fixture(scope="session")
def tiny_records(tiny_config):
    from gears.synthesis import sequence_seed, synthesize_sequence

    return [synthesize_sequence(tiny_config, sequence_seed(5, "train", i)).to_record({"index": i}) for i in range(3)]


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(LINES):
            terminalreporter.write_line(LINES[n])
