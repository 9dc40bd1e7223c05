import contextlib
import time

import pytest

_LINES = pytest.StashKey[list]()


class Criterion:
    """Collects named checks for one acceptance criterion and times the whole block."""

    def __init__(self, key, title, limit):
        self.key, self.title, self.limit = key, title, limit
        self.checks = []

    def check(self, name, passed, detail=""):
        self.checks.append((name, bool(passed), detail))

    @property
    def failed(self):
        return [name for name, ok, _ in self.checks if not ok]


@pytest.fixture
def criterion(request):
    lines = request.config.stash.setdefault(_LINES, [])

    @contextlib.contextmanager
    def run(key, title, limit):
        crit = Criterion(key, title, limit)
        start = time.perf_counter()
        try:
            yield crit
        except Exception as exc:
            crit.check("exception", False, f"{type(exc).__name__}: {exc}")
        elapsed = time.perf_counter() - start
        crit.check("runtime", elapsed < limit, f"{elapsed:.2f} s (limit {limit:g} s)")
        status = "FAIL" if crit.failed else "PASS"
        line = f"{status} {key} {title}: {elapsed:.2f} s"
        if crit.failed:
            line += "; failed: " + "; ".join(
                f"{name} [{detail}]" for name, ok, detail in crit.checks if not ok)
        lines.append(line)
        print(line)
        for name, ok, detail in crit.checks:
            print(f"    {'ok ' if ok else 'BAD'} {name}: {detail}")
        assert not crit.failed, line

    return run


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
