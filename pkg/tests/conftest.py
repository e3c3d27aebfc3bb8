import numpy as np
import pytest

_criteria: list[str] = []


@pytest.fixture
def record_criterion():
    """Collect one PASS/FAIL line per acceptance criterion for the terminal summary."""

    def record(number: int, title: str, ok: bool, detail: str = "") -> None:
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title}"
        if detail:
            line += f" ({detail})"
        _criteria.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if _criteria:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_criteria, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)


def random_spd(rng: np.random.Generator, p: int, scale: float = 1.0) -> np.ndarray:
    a = rng.standard_normal((p, p))
    return scale * (a @ a.T / p + 0.1 * np.eye(p))
