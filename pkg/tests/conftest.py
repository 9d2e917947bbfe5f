import numpy as np
import pytest

from numeral211.features import FeatureSet, get_features
from numeral211.signal_index import SignalIndex, get_signal_index


@pytest.fixture(scope="session")
def index() -> SignalIndex:
    return get_signal_index()


@pytest.fixture(scope="session")
def features() -> FeatureSet:
    return get_features()


@pytest.fixture(scope="session")
def li_map(features):
    from numeral211.experiments import li_full_map

    return li_full_map(features)


@pytest.fixture()
def rng():
    return np.random.default_rng(20260808)
