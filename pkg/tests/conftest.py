import pytest

_KEY = pytest.StashKey[dict]()
CRITERIA = range(1, 17)


class CriterionLog:
    """Collects per-part verdicts of the acceptance criteria for the final report."""

    def __init__(self):
        self.parts = {}
        self.soft = set()
        self.seen = False

    def record(self, number, part, ok, detail):
        self.seen = True
        self.parts.setdefault(number, []).append((part, bool(ok), detail))

    def status(self, number):
        parts = self.parts.get(number)
        if not parts:
            return "FAIL", "not evaluated"
        ok = all(p[1] for p in parts)
        detail = "; ".join(f"{p[0]}: {p[2]}" for p in parts)
        if ok:
            return "PASS", detail
        return ("SOFT-FAIL" if number in self.soft else "FAIL"), detail


@pytest.fixture
def criterion(request):
    """``criterion(n, part, ok, detail)`` records one checked part of criterion ``n``."""
    log = request.config.stash.setdefault(_KEY, CriterionLog())

    def record(number, part, ok, detail, soft=False):
        if soft:
            log.soft.add(number)
        log.record(number, part, ok, detail)
        return bool(ok)

    return record


def pytest_terminal_summary(terminalreporter, config):
    log = config.stash.get(_KEY, None)
    if log is None or not log.seen:
        return
    terminalreporter.section("acceptance criteria")
    for n in CRITERIA:
        status, detail = log.status(n)
        terminalreporter.write_line(f"criterion {n:2d}: {status:9s} {detail}")
