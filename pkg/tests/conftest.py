import pytest

from morlbalance.env import DialogueEnv, generate_ontology

_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion():
    """Record one acceptance line, then assert on it."""
    def record(number: int, ok: bool, detail: str) -> None:
        _ACCEPTANCE_LINES.append(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
        print(_ACCEPTANCE_LINES[-1])
        assert ok, detail
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def toy_ontology():
    return generate_ontology("toy", 3, 4, 50, values_per_slot=5, seed=0)


@pytest.fixture(scope="session")
def two_slot_ontology():
    return generate_ontology("toy2", 2, 2, 20, values_per_slot=3, seed=1)


@pytest.fixture
def toy_env(toy_ontology):
    return DialogueEnv(toy_ontology, ser=0.15, max_turns=25)
