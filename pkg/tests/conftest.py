import pytest

from synthdata import default_vocab


@pytest.fixture
def vocab():
    return default_vocab()
