import sys
import time
from pathlib import Path

from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile(
    "default",
    max_examples=50,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

SESSION_START = time.perf_counter()


def pytest_collection_modifyitems(session, config, items):
    # acceptance runs last so its suite-runtime criterion sees the full run
    items.sort(key=lambda it: it.path.name == "test_acceptance.py")
