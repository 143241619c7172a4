import pathlib

import numpy as np
import pytest

from surftrap.layout import load_layout
from surftrap.trap import MG25, RFDrive, SearchRegion, find_sites

FIXTURES = pathlib.Path(__file__).parent / "fixtures"

# Frozen census of the triangle-array fixture at the default drive
# (recompute with scripts/make_fixtures.py + find_sites if the fixture
# changes).  T0 is the -x site; T1/T2 follow counterclockwise.
SITE_T0 = np.array([-4.64348115e-05, 0.0, 2.83299386e-05])
SITE_T1 = np.array([2.32174057e-05, -4.02137263e-05, 2.83299386e-05])
SITE_T2 = np.array([2.32174057e-05, 4.02137263e-05, 2.83299386e-05])
ANCILLA = np.array([0.0, 0.0, 2.39063936e-05])
SITE_FREQS_HZ = np.array([4599173.06, 6633217.88, 11232390.94])
ANCILLA_FREQS_HZ = np.array([6109574.51, 6109574.51, 12219149.02])
TRIANGLE_SIDE = 80.4275e-6

SINGLE_MINIMUM = np.array([0.0, 0.0, 2.56216697e-05])


@pytest.fixture(scope="session")
def triangle_layout():
    return load_layout(FIXTURES / "triangle_array.json")


@pytest.fixture(scope="session")
def single_layout():
    return load_layout(FIXTURES / "single_site.json")


@pytest.fixture(scope="session")
def drive():
    return RFDrive()


@pytest.fixture(scope="session")
def species():
    return MG25


@pytest.fixture(scope="session")
def triangle_region():
    return SearchRegion(lo=(-120e-6, -120e-6, 8e-6),
                        hi=(120e-6, 120e-6, 140e-6))


@pytest.fixture(scope="session")
def triangle_census(triangle_layout, drive, species, triangle_region):
    """Full stationary-point census of the triangle fixture (computed once)."""
    return find_sites(triangle_layout, drive, species, triangle_region)


@pytest.fixture(scope="session")
def triangle_sites(triangle_census):
    """The three trap-site minima ordered T0, T1, T2."""
    minima = [s for s in triangle_census if s.kind.name == "MINIMUM"
              and np.hypot(s.position[0], s.position[1]) > 1e-5]
    assert len(minima) == 3
    ordered = []
    for ref in (SITE_T0, SITE_T1, SITE_T2):
        ordered.append(min(minima,
                           key=lambda s: np.linalg.norm(s.position - ref)))
    return ordered
