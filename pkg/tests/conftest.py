import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from covert_isac.scenario import builtin_scenario

settings.register_profile("artifact", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("artifact")


@pytest.fixture(scope="session")
def case1():
    return builtin_scenario("case1")


@pytest.fixture(scope="session")
def case2():
    return builtin_scenario("case2")


def small_case(seed=0, num_slots=16, **changes):
    """Case-I geometry shortened to a few slots with Bob and Willie jittered."""
    rng = np.random.default_rng(seed)
    base = builtin_scenario("case1")
    bob = base.bob + rng.uniform(-10, 10, 2)
    willie = base.willie + rng.uniform(-10, 10, 2)
    kw = dict(num_slots=num_slots, ccs_slots=4, bob=bob, willie=willie)
    kw.update(changes)
    return base.with_updates(**kw)


def random_psd(rng, m, rank=None):
    k = m if rank is None else rank
    X = rng.normal(size=(m, k)) + 1j * rng.normal(size=(m, k))
    return X @ X.conj().T


def pytest_terminal_summary(terminalreporter, config):
    from test_acceptance import ACCEPTANCE_KEY
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
