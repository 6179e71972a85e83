import numpy as np
import pytest

from thermobalance.config import RunConfig
from thermobalance.plant import InfluenceTable


@pytest.fixture(scope="session")
def default_cfg():
    return RunConfig({})


@pytest.fixture(scope="session")
def model(default_cfg):
    return default_cfg.build_model()


@pytest.fixture(scope="session")
def influence(default_cfg, model):
    return default_cfg.build_influence(model)


@pytest.fixture(scope="session")
def coarse_model():
    """Cheap model for tests that only need qualitative fields."""
    cfg = RunConfig({"n_axial": 80, "radial_cells_air": 8})
    return cfg.build_model()


@pytest.fixture()
def toy_influence():
    """Hand-built influence table with the default-model sign structure."""
    return InfluenceTable(
        q_ul_min=np.array([0.0, 0.5, 1.0, 2.0]),
        d_up=np.array([-6000.0, -6600.0, -7000.0, -7400.0]),
        d_down=np.array([6000.0, 4800.0, 4000.0, 3000.0]),
        self_up=np.array([11000.0, 10800.0, 10600.0, 10200.0]),
        self_down=np.array([11000.0, 10900.0, 10800.0, 10600.0]),
    )
