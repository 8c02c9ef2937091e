import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from hspice.events import Event  # noqa: E402


def make_stream(types, attrs=None, start_seq=0, dt=1_000_000):
    """Events with consecutive seqs; ``attrs`` is an optional per-event dict list."""
    attrs = attrs or [{} for _ in types]
    return [Event(start_seq + i, i * dt, t, a) for i, (t, a) in enumerate(zip(types, attrs))]


@pytest.fixture
def stream():
    return make_stream


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
