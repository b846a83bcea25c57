import pytest

# criterion number -> (passed, detail); filled by test_acceptance.py
VERDICTS: dict[int, tuple[bool, str]] = {}


def record(n: int, ok: bool, detail: str) -> None:
    VERDICTS[n] = (bool(ok), detail)
    print(verdict_line(n))


def verdict_line(n: int) -> str:
    ok, detail = VERDICTS[n]
    return f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(VERDICTS):
        terminalreporter.write_line(verdict_line(n))


@pytest.fixture
def rng():
    import numpy as np

    return np.random.default_rng(12345)
