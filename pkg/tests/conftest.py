import pytest

from cogdog.assets import builtin_dataset_path, builtin_script_path, builtin_world_path
from cogdog.backends import RetryPolicy
from cogdog.dataset import load_dataset
from cogdog.world import load_world

GOLDEN_TASK = "find out what the weather is like outside, and then find and bring me suitable clothes"

FAST_RETRY = RetryPolicy(attempts=3, backoff_s=0.01, timeout_s=5)


@pytest.fixture
def apartment():
    return load_world(builtin_world_path("apartment"))


@pytest.fixture
def tabletop():
    return load_world(builtin_world_path("tabletop"))


@pytest.fixture
def golden_script():
    text = builtin_script_path("apartment_weather").read_text(encoding="utf-8")
    return [line.strip() for line in text.splitlines() if line.strip()]


@pytest.fixture
def golden_record():
    records, errors = load_dataset(builtin_dataset_path("apartment_weather"))
    assert not errors
    return records[0]
