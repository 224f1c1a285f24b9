"""Branch-free sine/cosine for numba kernels.

``fsin`` reduces by pi (Cody-Waite, three parts) and evaluates the odd Taylor
polynomial through z^21, whose truncation error on [-pi/2, pi/2] is about
1e-18.  ``fsincos`` reduces by pi/2 and uses the cephes minimax pair.  Both
are accurate to about one ulp for |x| up to 1e4 and vectorize, whereas the
builtin ``sin`` is a scalar libm call on hosts without a vector math library.
The fastmath flag set deliberately excludes ``reassoc``, which would break
the exact reduction.
"""
import numba as nb
import numpy as np

FASTMATH = {"nnan", "ninf", "nsz", "arcp", "contract", "afn"}

_DP1 = 7.85398125648498535156e-1
_DP2 = 3.77489470793079817668e-8
_DP3 = 2.69515142907905952645e-15
_S0, _S1, _S2, _S3, _S4, _S5 = (
    1.58962301576546568060e-10, -2.50507477628578072866e-8, 2.75573136213857245213e-6,
    -1.98412698295895385996e-4, 8.33333333332211858878e-3, -1.66666666666666307295e-1)
_C0, _C1, _C2, _C3, _C4, _C5 = (
    -1.13585365213876817300e-11, 2.08757008419747316778e-9, -2.75573141792967388112e-7,
    2.48015872888517045348e-5, -1.38888888888730564116e-3, 4.16666666666665929218e-2)
_TWO_OVER_PI = 0.6366197723675814
_INV_PI = 0.3183098861837907
# (-1)^k / (2k+1)! for k = 1..10
_T3, _T5, _T7, _T9, _T11 = (-1.0 / 6, 1.0 / 120, -1.0 / 5040, 1.0 / 362880, -1.0 / 39916800)
_T13, _T15, _T17, _T19, _T21 = (1.0 / 6227020800, -1.0 / 1307674368000, 1.0 / 355687428096000,
                                -1.0 / 121645100408832000, 1.0 / 51090942171709440000)


@nb.njit(fastmath=FASTMATH, inline="always", cache=True)
def _reduce(x):
    y = np.floor(x * _TWO_OVER_PI + 0.5)
    z = ((x - y * (2.0 * _DP1)) - y * (2.0 * _DP2)) - y * (2.0 * _DP3)
    zz = z * z
    s = z + z * zz * (((((_S0 * zz + _S1) * zz + _S2) * zz + _S3) * zz + _S4) * zz + _S5)
    c = 1.0 - 0.5 * zz + zz * zz * (((((_C0 * zz + _C1) * zz + _C2) * zz + _C3) * zz + _C4) * zz + _C5)
    q = y - 4.0 * np.floor(y * 0.25)  # quadrant in {0,1,2,3}
    return s, c, q


@nb.njit(fastmath=FASTMATH, inline="always", cache=True)
def fsin(x):
    y = np.floor(x * _INV_PI + 0.5)
    z = ((x - y * (4.0 * _DP1)) - y * (4.0 * _DP2)) - y * (4.0 * _DP3)
    zz = z * z
    p = ((((((((_T21 * zz + _T19) * zz + _T17) * zz + _T15) * zz + _T13) * zz + _T11) * zz
            + _T9) * zz + _T7) * zz + _T5) * zz + _T3
    # sin(x) = (-1)^y sin(z)
    return (z + z * zz * p) * (1.0 - 2.0 * (y - 2.0 * np.floor(y * 0.5)))


@nb.njit(fastmath=FASTMATH, inline="always", cache=True)
def fsincos(x):
    s, c, q = _reduce(x)
    odd = q - 2.0 * np.floor(q * 0.5)
    half = np.floor(q * 0.5)
    rs = s + odd * (c - s)
    sn = rs * (1.0 - 2.0 * half)
    # cos(x) = sin(x + pi/2): quadrant shifts by one
    q1 = q + 1.0 - 4.0 * np.floor((q + 1.0) * 0.25)
    odd1 = q1 - 2.0 * np.floor(q1 * 0.5)
    rc = s + odd1 * (c - s)
    cs = rc * (1.0 - 2.0 * np.floor(q1 * 0.5))
    return sn, cs


@nb.njit(fastmath=FASTMATH, cache=True)
def sin_array(x):
    out = np.empty_like(x)
    for i in range(x.size):
        out.flat[i] = fsin(x.flat[i])
    return out


@nb.njit(fastmath=FASTMATH, cache=True)
def cos_array(x):
    out = np.empty_like(x)
    for i in range(x.size):
        out.flat[i] = fsincos(x.flat[i])[1]
    return out
