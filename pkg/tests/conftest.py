import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from cgct.data import bundled_data_path, impute_knn, load_dataset


@pytest.fixture(scope="session")
def panel_2016():
    return load_dataset(bundled_data_path(), 2016)

@pytest.fixture(scope="session")
def panel_2017():
    return load_dataset(bundled_data_path(), 2017)

@pytest.fixture(scope="session")
def imputed_2016(panel_2016):
    return impute_knn(panel_2016, k=5)

@pytest.fixture(scope="session")
def imputed_2017(panel_2017):
    return impute_knn(panel_2017, k=5)
