import io
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from sppa.core import ingest_csv  # noqa: E402


@pytest.fixture
def abb():
    """A at the origin, two Bs straight above it."""
    return ingest_csv(io.StringIO("id,x,y,category\n1,0,0,A\n2,0,1,B\n3,0,2,B\n"))


@pytest.fixture
def serial(monkeypatch):
    monkeypatch.setenv("SPPA_THREADS", "1")


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(mod.RESULTS):
        terminalreporter.write_line(line)
