import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from csdelay.faddeeva import faddeeva, faddeeva_derivative


def _mp_w(z):
    z = mpmath.mpc(z.real, z.imag)
    return complex(mpmath.exp(-z**2) * mpmath.erfc(-1j * z))


def test_origin_is_one():
    assert faddeeva(0j) == pytest.approx(1.0, abs=1e-13)


def test_imaginary_unit_matches_high_precision_erfc():
    mpmath.mp.dps = 30
    expected = float(mpmath.e * mpmath.erfc(1))
    assert faddeeva(1j).real == pytest.approx(expected, rel=1e-12)
    assert abs(faddeeva(1j).imag) < 1e-15


def test_large_real_argument_asymptote():
    z = 100.0 + 0j
    assert abs(faddeeva(z) - 1j / (np.sqrt(np.pi) * z)) < 1e-4 * abs(faddeeva(z))


@pytest.mark.parametrize("z", [0.3 + 0.01j, 2 + 1j, -5 + 0.2j, 8 + 20j, 1e-3 + 1e-4j, 40 + 1e-6j])
def test_against_arbitrary_precision(z):
    mpmath.mp.dps = 30
    assert abs(faddeeva(z) - _mp_w(z)) <= 1e-10 * abs(_mp_w(z))


@settings(max_examples=100, deadline=None)
@given(st.floats(-50, 50), st.floats(0, 50))
def test_upper_half_plane_relative_error(x, y):
    mpmath.mp.dps = 30
    z = complex(x, y)
    ref = _mp_w(z)
    assert abs(faddeeva(z) - ref) <= 1e-6 * abs(ref)


@settings(max_examples=100, deadline=None)
@given(st.floats(-1e3, 1e3), st.floats(1e-3, 1e3))
def test_reflection_symmetry(x, y):
    """w(-conj z) = conj w(z)."""
    z = complex(x, y)
    assert faddeeva(-z.conjugate()) == pytest.approx(faddeeva(z).conjugate(), rel=1e-12)


def test_lower_half_plane_by_reflection():
    z = np.array([1 - 0.5j, -2 - 0.1j, 0.5 - 1.5j])
    np.testing.assert_allclose(faddeeva(z), 2 * np.exp(-z**2) - faddeeva(-z), rtol=1e-10)


def test_real_part_positive_on_upper_half_plane():
    x = np.linspace(-300, 300, 20001)
    assert np.all(faddeeva(x + 0.01j).real > 0)


def test_derivative_matches_finite_difference():
    z = np.array([0.4 + 0.3j, 3 + 0.1j, -1 + 2j])
    h = 1e-6
    fd = (faddeeva(z + h) - faddeeva(z - h)) / (2 * h)
    np.testing.assert_allclose(faddeeva_derivative(z), fd, rtol=1e-7)


@pytest.mark.parametrize("bad", [complex(np.nan, 0), complex(np.inf, 1), complex(0, np.inf)])
def test_non_finite_rejected(bad):
    with pytest.raises(ValueError):
        faddeeva(bad)
