import sys
from pathlib import Path

import numpy as np
import pytest

from crlab import benchmark, refine, uniform_refine, unit_square_initial

sys.path.insert(0, str(Path(__file__).parent))

LAM = 2.0 / 3.0

# PASS/FAIL lines of the acceptance suite, repeated in the terminal summary
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)


def uniform_hierarchy(levels):
    meshes = [unit_square_initial()]
    for _ in range(levels):
        meshes.append(uniform_refine(meshes[-1]))
    return meshes


def graded_mesh(steps=6, seed=0):
    """Mesh refined towards the line x1 = 2/3 plus a few random elements."""
    rng = np.random.default_rng(seed)
    mesh = unit_square_initial()
    for _ in range(steps):
        x = mesh.vertices[mesh.elements][:, :, 0]
        near = np.flatnonzero((x.min(axis=1) < LAM) & (x.max(axis=1) > LAM))
        extra = rng.choice(mesh.n_elements, size=max(1, mesh.n_elements // 10), replace=False)
        mesh = refine(mesh, np.union1d(near, extra))
    return mesh


@pytest.fixture(scope="session")
def levels():
    """Uniform meshes T_0 .. T_4."""
    return uniform_hierarchy(4)


@pytest.fixture(scope="session")
def graded():
    return graded_mesh()


@pytest.fixture(scope="session")
def bench():
    return benchmark(LAM)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
