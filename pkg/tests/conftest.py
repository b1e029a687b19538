import pytest

_VERDICTS: list[str] = []


class Verdict:
    """Collects one PASS/FAIL line per acceptance criterion."""

    def __call__(self, number: int, ok: bool, detail: str) -> bool:
        line = f"CRITERION {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        _VERDICTS.append(line)
        print(line)
        return ok

    def note(self, number: int, detail: str) -> None:
        line = f"CRITERION {number:2d}: info  {detail}"
        _VERDICTS.append(line)
        print(line)


@pytest.fixture(scope="session")
def verdict():
    return Verdict()


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_VERDICTS, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
