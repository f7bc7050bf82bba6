import numpy as np
import pytest

from tiwire.basis import MaterialParams, WireGeometry
from tiwire.spectrum import TOPO_LOWER, TOPO_UPPER, solve_point


@pytest.fixture(scope="session")
def params():
    return MaterialParams()


@pytest.fixture(scope="session")
def geom():
    return WireGeometry()


@pytest.fixture(scope="session")
def point_l0_kz01(params, geom):
    states, window = solve_point(params, geom, 0, 0.1, 40)
    return states, window


@pytest.fixture(scope="session")
def topo_upper(point_l0_kz01):
    return next(s for s in point_l0_kz01[0] if s.label == TOPO_UPPER)


@pytest.fixture(scope="session")
def topo_lower(point_l0_kz01):
    return next(s for s in point_l0_kz01[0] if s.label == TOPO_LOWER)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_density(rng, dim, rank=None):
    rank = rank or dim
    z = rng.standard_normal((dim, rank)) + 1j * rng.standard_normal((dim, rank))
    m = z @ z.conj().T
    return m / np.trace(m).real


def random_unitary(rng, dim):
    z = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))[None, :]


# acceptance criterion -> (passed, detail), filled by test_acceptance.py
ACCEPTANCE = {}


def record(n, passed, detail):
    ACCEPTANCE[n] = (bool(passed), detail)
    print(f"CRITERION {n}: {'PASS' if passed else 'FAIL'} {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"CRITERION {n}: {'PASS' if passed else 'FAIL'} {detail}")
