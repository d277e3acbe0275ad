import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ctstereo.core import DimensionError, EmptyDomain
from ctstereo.metrics import angular_error, maen, msed


def _unit(rng, shape):
    v = rng.normal(size=shape + (3,))
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def test_maen_examples(rng):
    n = _unit(rng, (6, 7))
    assert maen(n, n) == 0.0
    assert maen(-n, n) == 180.0
    a = np.zeros((2, 2, 3))
    a[..., 2] = 1
    b = a.copy()
    b[0] = (1, 0, 0)
    assert maen(a, b) == 45.0


def test_maen_float32_exact(rng):
    n = _unit(rng, (16, 16)).astype(np.float32)
    assert maen(n, n) == 0.0 and maen(-n, n) == 180.0


def test_maen_errors(rng):
    n = _unit(rng, (4, 4))
    with pytest.raises(DimensionError):
        maen(n, n[:3])
    with pytest.raises(EmptyDomain):
        maen(n, n, np.zeros((4, 4), bool))


def test_msed_examples(rng):
    # dyadic depths keep the shifted copies exact
    z = rng.integers(0, 64, (5, 5)) / 8
    assert msed(z, z) == 0.0
    assert msed(z + 3.25, z) == 0.0
    assert msed(z + 1.0, z, align="none") == 1.0
    with pytest.raises(EmptyDomain):
        msed(z, z, np.zeros((5, 5), bool))
    with pytest.raises(ValueError):
        msed(z, z, align="median")


@given(st.integers(0, 2**32 - 1), st.floats(0.1, 10))
def test_maen_symmetric_and_scale_invariant(seed, scale):
    rng = np.random.default_rng(seed)
    a, b = _unit(rng, (5, 5)), _unit(rng, (5, 5))
    assert maen(a, b) == pytest.approx(maen(b, a), abs=1e-12)
    assert maen(scale * a, b) == pytest.approx(maen(a, b), abs=1e-9)
    assert np.all((angular_error(a, b) >= 0) & (angular_error(a, b) <= 180))


@given(arrays(np.float64, (4, 6), elements=st.floats(-10, 10)),
       arrays(np.float64, (4, 6), elements=st.floats(-10, 10)), st.floats(-100, 100))
def test_msed_constant_invariant(a, b, c):
    assert msed(a + c, b) == pytest.approx(msed(a, b), abs=1e-9)
    assert msed(a, b + c) == pytest.approx(msed(a, b), abs=1e-9)
