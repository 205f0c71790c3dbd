import json

import numpy as np
import pytest

from fluidlb import validate_scenario


@pytest.fixture
def scen_a():
    """Two types, two pools, lightly loaded second pool. Used everywhere."""
    return validate_scenario(
        r=[16.0, 8.0],
        c=[15.0, 10.0],
        tau=[[1.0, 2.0], [2.0, 1.0]],
        epsilon=0.01,
    )


@pytest.fixture
def scen_a_file(tmp_path):
    path = tmp_path / "scen_a.json"
    path.write_text(json.dumps({
        "m": 2,
        "n": 2,
        "r": [16.0, 8.0],
        "c": [15.0, 10.0],
        "tau": [[1.0, 2.0], [2.0, 1.0]],
        "epsilon": 0.01,
    }))
    return path


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
