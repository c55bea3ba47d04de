import random

import pytest

from seccost.model import Category, ComponentId, CostSample, TaskKind

COMPONENTS = [
    ComponentId("C1", ("127.0.0.1", 5001)),
    ComponentId("C2", ("127.0.0.1", 5002)),
    ComponentId("IoT-Framework", ("127.0.0.1", 5003)),
]
TASKS = [
    TaskKind("authorise", Category.SECURITY),
    TaskKind("encrypt", Category.SECURITY),
    TaskKind("lookup", Category.USE_CASE),
    TaskKind("measure-temperature", Category.USE_CASE),
]
METRICS = ["M1", "M2", "M3", "M4"]
INTERACTIONS = ["i-a", "i-b", "i-c"]


def random_sample(rng: random.Random, t_lo=0, t_hi=10_000) -> CostSample:
    return CostSample(
        rng.choice(INTERACTIONS),
        rng.choice(COMPONENTS),
        rng.choice(TASKS),
        rng.choice(METRICS),
        rng.randrange(t_lo, t_hi),
        rng.choice([0.0, rng.random() * 100, rng.expovariate(0.01), 1e-9 * rng.random()]),
    )


@pytest.fixture
def rng():
    return random.Random(20240611)


# -- acceptance summary ----------------------------------------------------------

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line per acceptance criterion."""

    def record(n: int, ok: bool, detail: str) -> bool:
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
