import hypothesis
import pytest

from iascc.config import default_config
from iascc.rng import TEST, substream

hypothesis.settings.register_profile("default", max_examples=50, deadline=None)
hypothesis.settings.register_profile("fast", max_examples=5, deadline=None)
hypothesis.settings.load_profile("default")


@pytest.fixture
def rng(request):
    # one independent substream per test, stable across runs
    return substream(2024, TEST, abs(hash(request.node.name)) % (1 << 32))


@pytest.fixture(scope="session")
def small_config():
    return default_config(width=64, height=64)


@pytest.fixture(scope="session")
def default_cfg():
    return default_config()
