import os
import sys

import numpy as np
import pytest

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
if ROOT not in sys.path:
    sys.path.insert(0, ROOT)

from chain import ChainConstants, build_chain  # noqa: E402
from heteroclinic import solve_connection  # noqa: E402
from potential import dihedral, double_well, triple_well  # noqa: E402

SQRT2 = np.sqrt(2.0)
DW_Q2 = 2.0 * SQRT2 / 3.0


@pytest.fixture(scope="session")
def root_dir():
    return ROOT


@pytest.fixture(scope="session")
def dw():
    return double_well()


@pytest.fixture(scope="session")
def tw():
    return triple_well()


@pytest.fixture(scope="session")
def dw_het(dw):
    return solve_connection(dw, [-1.0], [1.0])


@pytest.fixture(scope="session")
def tw_hets(tw):
    """Triple-well connections -1 -> 0 and 0 -> 1."""
    return {(0, 1): solve_connection(tw, [-1.0], [0.0]),
            (1, 2): solve_connection(tw, [0.0], [1.0])}


@pytest.fixture(scope="session")
def dw_chain(dw, dw_het):
    return build_chain(dw, [[-1.0], [1.0]], connections={(0, 1): dw_het})


@pytest.fixture(scope="session")
def tw_chain(tw, tw_hets):
    return build_chain(tw, [[-1.0], [0.0], [1.0], [0.0]], connections=dict(tw_hets))


@pytest.fixture(scope="session")
def dh():
    return dihedral(3)


@pytest.fixture(scope="session")
def dh_chain(dh):
    """Three-layer chain around the roots of unity; connections 2 and 3 are rotations of the first."""
    het = solve_connection(dh, dh.minima[0], dh.minima[1])
    return build_chain(dh, dh.minima, connections={(0, 1): het}, equivariant=True)


@pytest.fixture
def dw_constants():
    """Closed-form double-well chain constants: mu = sqrt(2), K = 2, k = 8."""
    two = np.ones(2)
    return ChainConstants(mu_minus=SQRT2 * two, mu_plus=SQRT2 * two, K_minus=2.0 * two, K_plus=2.0 * two,
                          dots=two.copy(), varsigma=two.copy(), q2=DW_Q2 * two, h4=True)
