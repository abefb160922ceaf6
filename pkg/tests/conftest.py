import math

import numpy as np
import pytest

from winterscan import synthgen
from winterscan.ingest import DatasetStore


@pytest.fixture
def store(tmp_path):
    return DatasetStore.at(tmp_path / "data", create=True)


@pytest.fixture
def rng():
    return np.random.default_rng(20240109)


def sigma_for_halfwidth(half_width, peak, level):
    """Sigma of a Gaussian whose ``level`` crossing lies ``half_width`` from its centre."""
    return half_width / math.sqrt(2 * math.log(peak / level))


@pytest.fixture(scope="session")
def narrowed_road():
    """8 m roadway whose clear span is cut to stations [1.2, 6.8] by two snow ridges."""
    sigma = sigma_for_halfwidth(1.2, 0.4, 0.05)
    return synthgen.SyntheticRoadSpec(
        roadway_width_m=8.0, point_density=400, length_m=50.0, seed=11,
        snow_features=(synthgen.SnowHeap(0.0, 0.4, sigma), synthgen.SnowHeap(8.0, 0.4, sigma)),
    )


@pytest.fixture(scope="session")
def heap_road():
    """Crowned road with one isotropic heap (peak 0.4 m, sigma 0.5 m) at station 3."""
    return synthgen.SyntheticRoadSpec(
        roadway_width_m=8.0, point_density=400, length_m=12.0, seed=5,
        snow_features=(synthgen.SnowHeap(3.0, 0.4, 0.5, along_center_m=6.0),),
    )
