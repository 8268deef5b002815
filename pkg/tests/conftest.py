import numpy as np
import pytest

from varac.envs import EnvSpec, generate

_ACCEPTANCE: dict = {}


@pytest.fixture
def record():
    """Store one acceptance line: record(number, passed, detail)."""
    def _record(num, passed, detail):
        _ACCEPTANCE[num] = (bool(passed), detail)
    return _record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_ACCEPTANCE):
        passed, detail = _ACCEPTANCE[num]
        terminalreporter.write_line(f"criterion {num:2d}: {'PASS' if passed else 'FAIL'}  {detail}")


@pytest.fixture
def mdp4():
    return generate(EnvSpec("random", 4, 2, seed=11))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
