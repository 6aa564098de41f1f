import pytest

N_CRITERIA = 10
_results: dict[int, tuple[bool, str]] = {}


@pytest.fixture()
def criterion():
    """Record one acceptance outcome: ``criterion(n, ok, detail)``."""

    def record(n: int, ok: bool, detail: str) -> None:
        _results[n] = (bool(ok), detail)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in range(1, N_CRITERIA + 1):
        if n in _results:
            ok, detail = _results[n]
            terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
        else:
            terminalreporter.write_line(f"criterion {n:2d}: FAIL  (not run or errored before reporting)")
