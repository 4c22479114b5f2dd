"""Scalar/elementwise special functions used by the evidential losses.

Everything here accepts Python floats or numpy arrays and returns the same
kind. lgamma and digamma are computed in-repo (upward recurrence followed by
an asymptotic series) so loss values do not depend on the platform libm's
gamma implementation.
"""

import numpy as np

_HALF_LOG_2PI = 0.91893853320467274178

# Stirling series coefficients B_{2k} / (2k (2k-1)) for lgamma.
_LGAMMA_COEF = (
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360360.0,
    1.0 / 156.0,
)

# B_{2k} / (2k) for the digamma asymptotic series.
_DIGAMMA_COEF = (
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
)

_SHIFT_TO = 10.0


def _as_array(x):
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr > 0)):
        raise ValueError("argument must be > 0 (got %r)" % (x,))
    return arr


def _restore(arr, like):
    if np.ndim(like) == 0 and not isinstance(like, np.ndarray):
        return float(arr)
    return arr


def lgamma(x):
    """log Gamma(x) for x > 0."""
    z = _as_array(x).copy()
    prod = np.ones_like(z)
    small = z < _SHIFT_TO
    while np.any(small):
        prod = np.where(small, prod * z, prod)
        z = np.where(small, z + 1.0, z)
        small = z < _SHIFT_TO
    inv = 1.0 / z
    inv2 = inv * inv
    series = np.zeros_like(z)
    for c in reversed(_LGAMMA_COEF):
        series = series * inv2 + c
    series *= inv
    out = (z - 0.5) * np.log(z) - z + _HALF_LOG_2PI + series - np.log(prod)
    return _restore(out, x)


def digamma(x):
    """Digamma psi(x) = d/dx log Gamma(x) for x > 0."""
    z = _as_array(x).copy()
    acc = np.zeros_like(z)
    small = z < _SHIFT_TO
    while np.any(small):
        acc = np.where(small, acc - 1.0 / z, acc)
        z = np.where(small, z + 1.0, z)
        small = z < _SHIFT_TO
    inv2 = 1.0 / (z * z)
    series = np.zeros_like(z)
    for c in reversed(_DIGAMMA_COEF):
        series = series * inv2 + c
    series *= inv2
    out = np.log(z) - 0.5 / z - series + acc
    return _restore(out, x)


def softplus(x):
    """log(1 + e^x) without overflow."""
    arr = np.asarray(x, dtype=float)
    big = arr > 30.0
    # above 30 the log1p(exp) branch would lose the e^-x tail to rounding anyway
    safe = np.where(big, 0.0, arr)
    out = np.where(big, arr + np.exp(-np.abs(arr)), np.log1p(np.exp(safe)))
    return _restore(out, x)


def sigmoid(x):
    arr = np.asarray(x, dtype=float)
    e = np.exp(-np.abs(arr))
    out = np.where(arr >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return _restore(out, x)


def log_expm1(t):
    """log(e^t - 1) for t > 0, stable at both ends."""
    arr = np.asarray(t, dtype=float)
    big = arr > 30.0
    small = np.where(big, 1.0, arr)
    large = np.where(big, arr, 31.0)
    out = np.where(big, large + np.log1p(-np.exp(-large)), np.log(np.expm1(small)))
    return _restore(out, t)
