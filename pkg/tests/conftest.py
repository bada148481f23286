import numpy as np
import pytest

from lrcalib.config import ExperimentConfig
from lrcalib.harness import base_train
from lrcalib.world import generate_world


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def small_config():
    # short budgets keep harness tests quick; structure matches the defaults
    return ExperimentConfig().replace(
        world__dim=8, world__base_classes=6, world__novel_classes=3,
        train__base_steps=300, train__finetune_steps=80, train__warmup_steps=50,
        train__k_shot=2, run__n_test=200, bank_capacity=1024,
    )


@pytest.fixture(scope="session")
def small_run(small_config):
    world = generate_world(small_config, 7)
    return world, base_train(world, small_config, 7)


def pytest_terminal_summary(terminalreporter):
    lines = [value for reports in terminalreporter.stats.values() for r in reports
             if getattr(r, "when", None) == "call"
             for key, value in getattr(r, "user_properties", []) if key == "acceptance"]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
