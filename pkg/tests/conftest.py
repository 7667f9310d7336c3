import numpy as np
import pytest

from echomem import config as cfgmod
from echomem.dynamics import LevelRegister


@pytest.fixture(scope="session")
def cfg():
    return cfgmod.load_config()


@pytest.fixture(scope="session")
def scheme(cfg):
    return cfgmod.scheme_from_config(cfg)


@pytest.fixture(scope="session")
def four(cfg, scheme):
    return cfgmod.four_level_from_config(cfg, scheme)


@pytest.fixture(scope="session")
def presets(cfg, four):
    return cfgmod.all_presets(cfg, four)


@pytest.fixture(scope="session")
def input_template(cfg, four):
    return cfgmod.input_pulse(cfg, four)


@pytest.fixture(scope="session")
def two_level_optical():
    return LevelRegister(("g", "e"), ("g", "e"), np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]))


@pytest.fixture(scope="session")
def two_level_spin():
    return LevelRegister(("a", "b"), ("g", "g"), np.array([[0.0, 0.0, 0.0], [0.0, 1.0, 0.0]]))
