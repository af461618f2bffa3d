import numpy as np
import pytest
from hypothesis import settings

from fedhp.ckks import Evaluator, KeyGenerator, context_for

settings.register_profile("default", max_examples=50, deadline=None)
settings.load_profile("default")

# lines printed in the terminal summary by the acceptance suite
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def ctx():
    return context_for("test")


@pytest.fixture(scope="session")
def keys(ctx):
    kg = KeyGenerator(ctx, np.random.default_rng(1234))
    sk = kg.secret_key()
    return sk, kg.public_key(sk), kg.relin_key(sk)


@pytest.fixture(scope="session")
def ev(ctx, keys):
    return Evaluator(ctx, keys[2])


@pytest.fixture(scope="session")
def session_for():
    """Cached multiparty sessions keyed by party count."""
    from fedhp.protocols import Session

    cache = {}

    def get(parties: int):
        if parties not in cache:
            cache[parties] = Session.establish(parties, "test", seed=100 + parties)
        return cache[parties]

    return get
