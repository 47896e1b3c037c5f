import math
from pathlib import Path

import numpy as np
import pytest

from crwm.expert_core import WeightVector

DATA_DIR = Path(__file__).resolve().parent.parent / "datasets"
DATASETS = ("sonar", "ionosphere", "breast-w", "diabetes", "credit-g", "kr-vs-kp")


def weights_of(values, beta=0.5) -> WeightVector:
    return WeightVector.from_log_weights(np.log(np.asarray(values, dtype=float)), beta)


@pytest.fixture
def data_dir() -> Path:
    return DATA_DIR


def close(a, b, tol=1e-9) -> bool:
    return math.isclose(a, b, rel_tol=tol, abs_tol=tol)


# acceptance criteria report one line each at the end of the session
ACCEPTANCE_LINES: dict[int, str] = {}


def record_criterion(number: int, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES[number] = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}"
    print(ACCEPTANCE_LINES[number])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
