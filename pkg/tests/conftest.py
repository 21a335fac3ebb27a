import pytest

from diot.config import get_settings
from diot.network_io import load_network


@pytest.fixture(autouse=True)
def _fresh_settings():
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


@pytest.fixture
def pigou():
    return load_network("pigou")


@pytest.fixture
def braess():
    return load_network("braess")


@pytest.fixture
def cyclic():
    return load_network("cyclic")


@pytest.fixture
def double_pigou():
    return load_network("double_pigou")


@pytest.fixture
def two_link_nonbpr():
    return load_network("two_link_nonbpr")
