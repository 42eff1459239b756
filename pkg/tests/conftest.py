import os

import pytest
from hypothesis import HealthCheck, settings

from cacheleak.client import InProcessClient
from cacheleak.corpus import build_vocab
from cacheleak.engine import ServingEngine
from cacheleak.latency import LatencyParams
from cacheleak.prefix_cache import PrefixCacheConfig

# Engine-backed property tests are slow on shared CI runners.
settings.register_profile("ci", suppress_health_check=(HealthCheck.too_slow,))
if "CI" in os.environ:
    settings.load_profile("ci")


@pytest.fixture(scope="session")
def vocab():
    return build_vocab()


@pytest.fixture
def quiet_latency():
    return LatencyParams(noise_sigma=0.0)


@pytest.fixture
def quiet_engine(vocab, quiet_latency):
    return ServingEngine(latency=quiet_latency, kv_config=PrefixCacheConfig(capacity_tokens=256), vocab=vocab)


@pytest.fixture
def client(quiet_engine):
    return InProcessClient(quiet_engine)
