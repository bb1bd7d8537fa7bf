import zlib

import pytest

from cfshrink.model import make_rng

from .helpers import ACCEPTANCE_LINES, SEED


@pytest.fixture
def rng(request):
    # distinct, reproducible stream per test
    return make_rng(SEED, zlib.crc32(request.node.nodeid.encode()))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
