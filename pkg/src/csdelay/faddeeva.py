"""Faddeeva function w(z) = exp(-z**2) * erfc(-i z), with input checks.

Evaluation is delegated to scipy.special.wofz (the Poppe-Wijers / Johnson
algorithm, accurate to near machine precision over the whole plane).
"""

import numpy as np
from scipy.special import wofz

_INV_SQRT_PI = 1.0 / np.sqrt(np.pi)


def faddeeva(z):
    """Evaluate w(z) for scalar or array complex input; non-finite input raises ``ValueError``."""
    z = np.asarray(z, dtype=complex)
    if not np.all(np.isfinite(z)):
        raise ValueError("faddeeva: non-finite argument")
    out = wofz(z)
    return out[()] if out.ndim == 0 else out


def faddeeva_derivative(z, w=None):
    """dw/dz = -2 z w(z) + 2i/sqrt(pi)."""
    z = np.asarray(z, dtype=complex)
    if w is None:
        w = faddeeva(z)
    return -2.0 * z * w + 2j * _INV_SQRT_PI
