import numpy as np
import pytest

from tariffmrio import Economy, WorldDims, generate_fixture, solve_baseline
from tariffmrio.data_io import demo_fixture


@pytest.fixture(scope="session")
def demo():
    return demo_fixture()


@pytest.fixture(scope="session")
def world_5x4():
    return generate_fixture(11, 5, 4, sparsity=0.2, trade_openness=0.35)


@pytest.fixture(scope="session")
def economy_5x4(world_5x4):
    return Economy.from_world(world_5x4)


@pytest.fixture(scope="session")
def baseline_5x4(economy_5x4):
    return solve_baseline(economy_5x4)


@pytest.fixture
def rng():
    return np.random.default_rng(20250417)


def tariff_array(dims: WorldDims, entries):
    """Dense [importer, exporter, sector] array from (imp, exp, sector|None, rate) tuples."""
    tau = np.zeros((dims.n_countries, dims.n_countries, dims.n_sectors))
    for imp, exp, sec, rate in entries:
        d, o = dims.country_codes.index(imp), dims.country_codes.index(exp)
        if sec is None:
            tau[d, o, :] = rate
        else:
            tau[d, o, dims.sector_codes.index(sec)] = rate
    return tau
