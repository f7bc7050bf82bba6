import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special

from tiwire import kernels
from tiwire.kernels import bessel_j, bessel_j_table, get_backend

BACKENDS = ["python"] + (["compiled"] if kernels.BACKEND == "compiled" else [])

X = np.concatenate([np.linspace(0.0, 1.0, 37), np.linspace(1.0, 400.0, 2003), [1e-8, 0.999999, 1.000001]])


@pytest.mark.parametrize("backend", BACKENDS)
@pytest.mark.parametrize("n", [0, 1, 2, 5, 12, 40])
def test_jn_matches_scipy(backend, n):
    impl = get_backend(backend)
    got = impl.jn(n, X)
    assert np.max(np.abs(got - special.jv(n, X))) < 1e-13


@pytest.mark.parametrize("backend", BACKENDS)
def test_table_matches_scipy(backend):
    impl = get_backend(backend)
    tab = impl.jn_table(15, X)
    assert tab.shape == (16, X.size)
    ref = special.jv(np.arange(16)[:, None], X[None, :])
    assert np.max(np.abs(tab - ref)) < 1e-13


def test_backends_agree():
    if "compiled" not in BACKENDS:
        pytest.skip("compiled kernels not built")
    py, ext = get_backend("python"), get_backend("compiled")
    for n in (0, 3, 17):
        assert np.max(np.abs(py.jn(n, X) - ext.jn(n, X))) < 1e-14
    assert np.max(np.abs(py.jn_table(9, X) - ext.jn_table(9, X))) < 1e-14


def test_large_order_small_argument_underflows_cleanly():
    vals = bessel_j(60, np.array([0.0, 0.5, 2.0]))
    assert vals[0] == 0.0
    assert np.allclose(vals, special.jv(60, [0.0, 0.5, 2.0]), rtol=1e-10, atol=1e-300)


def test_negative_order_and_shape():
    x = np.linspace(0.5, 20, 12).reshape(3, 4)
    assert bessel_j(-3, x).shape == (3, 4)
    assert np.allclose(bessel_j(-3, x), -bessel_j(3, x))
    assert np.allclose(bessel_j(-2, x), bessel_j(2, x))
    assert bessel_j_table(4, x).shape == (5, 3, 4)


def test_negative_argument_rejected():
    with pytest.raises(ValueError):
        bessel_j(0, [-1.0])
    with pytest.raises(ValueError):
        bessel_j_table(2, [-0.1])


def test_unknown_backend():
    with pytest.raises(ValueError):
        get_backend("fortran")


@settings(max_examples=60, deadline=None)
@given(n=st.integers(1, 30), x=st.floats(0.05, 300.0))
def test_three_term_recurrence(n, x):
    j = bessel_j_table(n + 1, np.array([x]))[:, 0]
    lhs = j[n - 1] + j[n + 1]
    rhs = 2 * n / x * j[n]
    assert abs(lhs - rhs) < 1e-11 * max(1.0, 2 * n / x)


@settings(max_examples=40, deadline=None)
@given(x=st.floats(0.0, 500.0))
def test_neumann_sum_rule(x):
    # J_0² + 2 Σ J_k² = 1
    m = int(x) + 60
    j = bessel_j_table(m, np.array([x]))[:, 0]
    assert abs(j[0] ** 2 + 2 * np.sum(j[1:] ** 2) - 1.0) < 1e-12
