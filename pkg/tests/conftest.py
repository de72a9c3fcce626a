import numpy as np
import pytest

from semgraph.syntax import load_model

ACCEPTANCE_RESULTS: list[tuple[str, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(20190601)


def indicators(k, prefix="x"):
    return [f"{prefix}{i}" for i in range(1, k + 1)]


@pytest.fixture
def two_factor():
    """Two factors with three indicators each and F2 regressed on F1."""
    obs = indicators(6)
    model = load_model("F1 =~ x1 + x2 + x3\nF2 =~ x4 + x5 + x6\nF2 ~ F1", obs)
    values = {
        "F1 =~ x2": 0.8, "F1 =~ x3": 1.2, "F2 =~ x5": 0.9, "F2 =~ x6": 1.1,
        "F1 ~~ F1": 1.0, "F2 ~~ F2": 0.6, "F2 ~ F1": 0.5,
    }
    truth = np.array([values.get(label, 0.5) for label in model.labels])
    return model, truth


@pytest.fixture
def one_factor():
    obs = indicators(4)
    model = load_model("F =~ x1 + x2 + x3 + x4", obs)
    truth = np.array([0.8, 1.2, 0.9, 1.0, 0.5, 0.6, 0.7, 0.4])
    return model, truth
