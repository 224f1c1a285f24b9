"""Counter-based Gaussian and uniform streams (Philox4x32-10).

A value is a pure function of (key, counter), so the increment of the Brownian
motion of vertex ``v`` at step ``k`` does not depend on which other vertices
are simulated or in what order.  numpy exposes Philox only as a sequential
bit generator, so the round function is written out here for numba.

Counter layout: ``(id_lo, id_hi, index, stream)``.  Stream 0 is reserved for
Brownian increments; mark streams use other values.
"""
import numba as nb
import numpy as np

from ._fastmath import FASTMATH, fsincos

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint32(0x9E3779B9)
_W1 = np.uint32(0xBB67AE85)
_LO = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_TWO_PI = 6.283185307179586
_INV53 = 1.0 / 9007199254740992.0

STREAM_BROWNIAN = 0


@nb.njit(inline="always", cache=True)
def philox4x32(c0, c1, c2, c3, k0, k1):
    for _ in range(10):
        p0 = np.uint64(c0) * _M0
        p1 = np.uint64(c2) * _M1
        hi0 = np.uint32(p0 >> _S32)
        lo0 = np.uint32(p0 & _LO)
        hi1 = np.uint32(p1 >> _S32)
        lo1 = np.uint32(p1 & _LO)
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
        k0 = np.uint32(k0 + _W0)
        k1 = np.uint32(k1 + _W1)
    return c0, c1, c2, c3


@nb.njit(inline="always", cache=True)
def _u53(a, b):
    # 53 random bits from two 32-bit words
    return np.uint64((np.uint64(a) << np.uint64(21)) ^ (np.uint64(b) >> np.uint64(11)))


@nb.njit(inline="always", cache=True)
def _block(k0, k1, ident, index, stream):
    ident = np.uint64(ident)
    return philox4x32(np.uint32(ident & _LO), np.uint32(ident >> _S32),
                      np.uint32(index), np.uint32(stream), np.uint32(k0), np.uint32(k1))


@nb.njit(fastmath=FASTMATH, inline="always", cache=True)
def normal_pair(k0, k1, ident, pair_index, stream):
    r0, r1, r2, r3 = _block(k0, k1, ident, pair_index, stream)
    u1 = (np.float64(_u53(r0, r1)) + 0.5) * _INV53  # in (0, 1)
    u2 = np.float64(_u53(r2, r3)) * _INV53
    rad = np.sqrt(-2.0 * np.log(u1))
    s, c = fsincos(_TWO_PI * u2 - np.pi)
    return rad * c, rad * s


@nb.njit(fastmath=FASTMATH, inline="always", cache=True)
def normal_at(k0, k1, ident, index, stream):
    z0, z1 = normal_pair(k0, k1, ident, index >> 1, stream)
    return z1 if (index & 1) else z0


@nb.njit(inline="always", cache=True)
def uniform_at(k0, k1, ident, index, stream):
    r0, r1, r2, r3 = _block(k0, k1, ident, index, stream)
    return (np.float64(_u53(r0, r1)) + 0.5) * _INV53


@nb.njit(cache=True)
def normals(k0, k1, ids, index, stream):
    out = np.empty(ids.shape[0])
    for i in range(ids.shape[0]):
        out[i] = normal_at(k0, k1, ids[i], index, stream)
    return out


@nb.njit(cache=True)
def uniforms(k0, k1, ids, index, stream):
    out = np.empty(ids.shape[0])
    for i in range(ids.shape[0]):
        out[i] = uniform_at(k0, k1, ids[i], index, stream)
    return out


@nb.njit(cache=True)
def coarse_increments(k0, k1, ids, step, substeps, out):
    """Sum of ``substeps`` consecutive unit normals per id (unscaled)."""
    base = np.int64(step) * substeps
    for i in range(ids.shape[0]):
        acc = 0.0
        for j in range(substeps):
            acc += normal_at(k0, k1, ids[i], base + j, STREAM_BROWNIAN)
        out[i] = acc


def philox_block(counter, key):
    """Raw Philox4x32-10 output for a 4-word counter and 2-word key."""
    c = [np.uint32(x) for x in counter]
    k = [np.uint32(x) for x in key]
    return tuple(int(x) for x in _py_block(c[0], c[1], c[2], c[3], k[0], k[1]))


@nb.njit(cache=True)
def _py_block(c0, c1, c2, c3, k0, k1):
    return philox4x32(c0, c1, c2, c3, k0, k1)
