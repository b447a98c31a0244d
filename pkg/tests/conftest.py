import numpy as np
import pytest

from blocksparse.core import BlockStructure, Dictionary, generate_dictionary


def four_lines(theta):
    """Four 1-D subspaces of R^2 at angles 0, theta, pi/2, pi/2 + theta."""
    angles = [0.0, theta, np.pi / 2, np.pi / 2 + theta]
    return Dictionary.from_blocks([np.array([np.cos(a), np.sin(a)]) for a in angles])


def orthogonal_dictionary(D=12, n=4, d=2):
    """n mutually orthogonal d-dim blocks made of coordinate vectors."""
    eye = np.eye(D)
    blocks = [eye[:, i * d:(i + 1) * d] for i in range(n)]
    return Dictionary(np.hstack(blocks), BlockStructure((d,) * n), tuple(blocks))


@pytest.fixture
def fig_lines():
    return four_lines(np.pi / 6)


@pytest.fixture
def small_dict():
    return generate_dictionary(30, 6, 2, 2, seed=3)


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "LINES", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
