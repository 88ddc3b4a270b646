from fractions import Fraction

import numpy as np
import pytest

from partial_dbar.fem import delta_dn, refined_mesh
from partial_dbar.geometry import arc_subset, boundary_grid, homogeneous, phantom_c2, phantom_discontinuous
from partial_dbar.haar import build_haar

FRACTIONS = (Fraction(1), Fraction(3, 4), Fraction(1, 2), Fraction(1, 4))

_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)


@pytest.fixture
def acceptance_log(request):
    """Lines appended here are printed in the terminal summary."""
    return request.config.stash[_ACCEPTANCE]


@pytest.fixture(scope="session")
def grid():
    return boundary_grid(256)


@pytest.fixture(scope="session")
def mesh():
    return refined_mesh(256, 0)


@pytest.fixture(scope="session")
def bases(grid):
    out = {}
    for f in FRACTIONS:
        arc, sub = arc_subset(grid, f)
        out[f] = build_haar(arc, int(256 * f), sub)
    return out


@pytest.fixture(scope="session")
def dn_c2(bases, mesh):
    field = phantom_c2()
    return {f: delta_dn(field, b, mesh) for f, b in bases.items()}


@pytest.fixture(scope="session")
def dn_disc(bases, mesh):
    field = phantom_discontinuous()
    return {f: delta_dn(field, b, mesh) for f, b in bases.items()}


@pytest.fixture(scope="session")
def dn_homog(bases, mesh):
    return {f: delta_dn(homogeneous(), b, mesh) for f, b in bases.items()}


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
