import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

# acceptance lines, filled by test_acceptance.report()
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])


@pytest.fixture
def rng():
    import numpy as np
    return np.random.default_rng(12345)
