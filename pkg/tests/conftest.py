import pytest

_ACCEPTANCE = {}


class Criterion:
    def __init__(self, number, title):
        self.number, self.title = number, title
        self.detail = ""
        _ACCEPTANCE[number] = self

    def check(self, ok, detail=""):
        self.ok, self.detail = bool(ok), detail
        print(self.line())
        assert ok, f"criterion {self.number} failed: {detail}"

    def line(self):
        status = {True: "PASS", False: "FAIL"}.get(getattr(self, "ok", None), "FAIL")
        return f"[{status}] criterion {self.number:>2}: {self.title} ({self.detail or 'not completed'})"


@pytest.fixture
def criterion():
    return Criterion


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        terminalreporter.write_line(_ACCEPTANCE[number].line())
