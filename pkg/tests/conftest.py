import sys

import numpy as np
import pytest

from liam.encoders import EncoderConfig, init_encoder_params
from liam.model import ModelConfig, build_params
from liam.params import ParamStore
from liam.worldgen import generate_split


@pytest.fixture(scope="session")
def encoder_params():
    return init_encoder_params(ParamStore(seed=0), EncoderConfig())


@pytest.fixture(scope="session")
def model_cfg():
    return ModelConfig()


@pytest.fixture(scope="session")
def model_params(model_cfg):
    return build_params(model_cfg, seed=0)


@pytest.fixture(scope="session")
def train_episodes():
    return generate_split("train", range(20), 2)


@pytest.fixture(scope="session")
def held_episodes():
    return generate_split("unseen", range(1_000_000, 1_000_010), 2)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    from pathlib import Path

    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "REPORT", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(lines, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
        terminalreporter.write_line(line)
    Path(__file__).with_name("acceptance_report.txt").write_text("\n".join(lines) + "\n")
