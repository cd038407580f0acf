import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from himodrom.adr import assemble_adr, reference_adr_space, reference_adr_spec
from himodrom.geometry import DomainMap, adr_map, stokes_map
from himodrom.himod import inner_product
from himodrom.stokes import (
    assemble_stokes,
    build_stokes_space,
    reference_stokes_space,
    pressure_inner_product,
    velocity_inner_product,
)

ADR_MU = np.array([5.0, 20.0, 75.0, 25.0])
STOKES_MU = np.array([5.0, 10.0, 0.0, 3.0, 0.0])
D1 = [(1.0, 100.0)] * 4
D2 = [(1.0, 10.0), (15.0, 25.0), (70.0, 80.0), (20.0, 30.0)]
D_STOKES = [(1.0, 10.0), (5.0, 15.0), (0.0, 10.0), (1.0, 10.0), (0.0, 10.0)]


class Bundle:
    def __init__(self, **kw):
        self.__dict__.update(kw)


@pytest.fixture(scope="session")
def adr_ref():
    space = reference_adr_space()
    spec = reference_adr_spec()
    affine = assemble_adr(space, spec)
    return Bundle(space=space, spec=spec, affine=affine, x=inner_product(space, "H1", affine.constrained))


@pytest.fixture(scope="session")
def adr_small():
    space = reference_adr_space(m=3, n_elements=10)
    spec = reference_adr_spec()
    affine = assemble_adr(space, spec)
    return Bundle(space=space, spec=spec, affine=affine, x=inner_product(space, "H1", affine.constrained))


def _stokes_bundle(space):
    affine = assemble_stokes(space)
    return Bundle(space=space, affine=affine, x_u=velocity_inner_product(space),
                  x_p=pressure_inner_product(space))


@pytest.fixture(scope="session")
def stokes_ref():
    return _stokes_bundle(reference_stokes_space())


@pytest.fixture(scope="session")
def stokes_small():
    return _stokes_bundle(build_stokes_space(stokes_map(), 8, 2))


@pytest.fixture(scope="session")
def identity_map():
    return DomainMap(1.0)


@pytest.fixture(scope="session")
def maps():
    return {"adr": adr_map(), "stokes": stokes_map(), "identity": DomainMap(2.0)}


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "REPORT", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
