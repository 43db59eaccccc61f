import math
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from rumodp.gev import VARIANTS, random_spec, table1_specs

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile(
    "default",
    deadline=None,
    max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def stock_specs():
    return table1_specs(10)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(params=VARIANTS)
def variant(request):
    return request.param


def random_specs(seed: int, count: int, n_low: int = 2, n_high: int = 8):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(count):
        v = VARIANTS[i % len(VARIANTS)]
        out.append(random_spec(v, int(rng.integers(n_low, n_high + 1)), rng))
    return out


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda l: int(l.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
