import numpy as np
import pytest

from phylocp.changepoint import ChangePointState
from phylocp.presets import get_preset
from phylocp.simulate import SimulationSpec, simulate_dataset
from phylocp.tree import parse_newick

BASE_NEWICK = get_preset("base-dataset")["newick"]


@pytest.fixture(scope="session")
def base_tree():
    return parse_newick(BASE_NEWICK)


@pytest.fixture(scope="session")
def base_truth():
    return ChangePointState(k=1, s=(25,), theta=(0.75, 0.85))


@pytest.fixture(scope="session")
def base_data(base_tree, base_truth):
    """The shipped base dataset (n=8, m=50, change-point at 25)."""
    preset = get_preset("base-dataset")
    spec = SimulationSpec(
        tree=base_tree, state=base_truth, m=preset["m"], seed=preset["dataset_seed"]
    )
    return simulate_dataset(spec)


@pytest.fixture(scope="session")
def toy_tree():
    """4-leaf tree with uneven branch lengths for desk-scale inference tests."""
    return parse_newick("((A:0.6,B:1.1):0.5,(C:0.8,D:0.4):0.9);")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
