import sys

import numpy as np
import pytest

from gramtex import network as NET
from gramtex import rng as R


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    mod = sys.modules.get("test_acceptance")
    verdicts = getattr(mod, "VERDICTS", None) if mod else None
    if verdicts:
        terminalreporter.section("acceptance criteria")
        for line in verdicts:
            terminalreporter.write_line(line)


@pytest.fixture
def gen():
    return R.stream(1234, "tests")


@pytest.fixture
def toy_net():
    layers = [
        NET.LayerSpec("conv1", "conv", out_channels=3, kernel=3, pad=1),
        NET.LayerSpec("relu1", "relu"),
        NET.LayerSpec("pool1", "maxpool", window=2, stride=2),
        NET.LayerSpec("conv2", "conv", out_channels=4, kernel=3, pad=1),
        NET.LayerSpec("relu2", "relu"),
    ]
    return NET.init_random(layers, seed=99)


@pytest.fixture
def tex_net():
    return NET.init_random(NET.tex_net_small_spec(), seed=7,
                           mean=np.full(3, 0.5))
