import contextlib
import time

import pytest

_LINES = {}


@pytest.fixture
def criterion():
    """``with criterion(n, text) as note:`` records one PASS/FAIL line for acceptance item n."""

    @contextlib.contextmanager
    def run(n, text):
        extra = []
        t0 = time.perf_counter()
        try:
            yield extra.append
        except BaseException as exc:
            detail = "; ".join(extra + [f"{type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''}"])
            _LINES[n] = f"FAIL criterion {n:>2}: {text} [{detail}] ({time.perf_counter() - t0:.1f}s)"
            raise
        _LINES[n] = f"PASS criterion {n:>2}: {text} [{'; '.join(extra)}] ({time.perf_counter() - t0:.1f}s)"

    return run


def pytest_terminal_summary(terminalreporter):
    if not _LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_LINES):
        terminalreporter.write_line(_LINES[n])
