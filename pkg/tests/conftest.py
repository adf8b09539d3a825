import pytest

# criterion number -> list of (ok, detail) recorded by the acceptance tests
_ACCEPTANCE: dict[int, list] = {}


@pytest.fixture
def record_criterion():
    def record(number: int, ok: bool, detail: str):
        _ACCEPTANCE.setdefault(number, []).append((bool(ok), detail))
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        parts = _ACCEPTANCE[n]
        status = "PASS" if all(ok for ok, _ in parts) else "FAIL"
        tr.write_line(f"criterion {n}: {status} | " + "; ".join(d for _, d in parts))
