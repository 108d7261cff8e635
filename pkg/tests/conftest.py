import numpy as np
import pytest

from graspkit.hand_model import default_hand_model
from graspkit.sequence_io import generate_synthetic_sequence

_CACHE = {}


def cached_sequence(kind="sphere", n_frames=30, seed=0, n_vertices=64):
    key = (kind, n_frames, seed, n_vertices)
    if key not in _CACHE:
        model = default_hand_model(n_vertices, 16, 7)
        _CACHE[key] = generate_synthetic_sequence(kind, n_frames, seed=seed, model=model)
    return _CACHE[key]


@pytest.fixture(scope="session")
def mini_model():
    return default_hand_model(64, 16, 7)


@pytest.fixture(scope="session")
def full_model():
    return default_hand_model(778, 16, 7)


@pytest.fixture(scope="session")
def mini_seq():
    return cached_sequence("box", 30, 1, 64)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, echoed at the end of the session
ACCEPTANCE = []


def record(criterion: int, passed: bool, text: str) -> bool:
    line = f"criterion {criterion}: {'PASS' if passed else 'FAIL'}  {text}"
    ACCEPTANCE.append((criterion, line))
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
