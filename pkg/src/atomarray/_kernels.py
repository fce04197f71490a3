"""Compiled inner loops for reciprocal-space lattice sums.

Each term is exp(-h|k+G|^2) (k0^2 - q q)/(k0^2 - |k+G|^2) with h = a_ho^2/2.
The Gaussian is split as exp(-h k^2) exp(-h G^2) prod_d exp(-2 h k_d G_d);
the last factor comes from small per-axis tables, which avoids one exp per term.
Component order is xx, yy, zz, xy, xz, yz.
"""

import numba
import numpy as np

# the TBB layer shipped here is too old and only warns
numba.config.THREADING_LAYER = "workqueue"

# no nnan/ninf: the running minimum starts at +inf
_FAST = {"nsz", "arcp", "contract", "afn", "reassoc"}


@numba.njit(cache=True, fastmath=_FAST)
def _prepare(n, b, h):
    ng = n.shape[0]
    lo = np.empty(3, dtype=np.int64)
    hi = np.empty(3, dtype=np.int64)
    for d in range(3):
        lo[d] = n[:, d].min()
        hi[d] = n[:, d].max()
    g = np.empty((ng, 3))
    eg = np.empty(ng)
    idx = np.empty((ng, 3), dtype=np.int64)
    for j in range(ng):
        s = 0.0
        for d in range(3):
            g[j, d] = n[j, d] * b[d]
            idx[j, d] = n[j, d] - lo[d]
            s += g[j, d] * g[j, d]
        eg[j] = np.exp(-h * s)
    return g, eg, idx, lo, hi


@numba.njit(cache=True, fastmath=_FAST)
def _axis_tables(k, b, h, lo, hi):
    length = int((hi - lo).max()) + 1
    tab = np.empty((3, length))
    for d in range(3):
        for t in range(hi[d] - lo[d] + 1):
            tab[d, t] = np.exp(-2.0 * h * k[d] * b[d] * (t + lo[d]))
    return tab


@numba.njit(parallel=True, cache=True, fastmath=_FAST)
def plain_sums(ks, n, b, a_ho, k0):
    """Sum over G without phases. Returns (m, 6) sums and (m,) min |k0^2 - |k+G|^2|."""
    m = ks.shape[0]
    ng = n.shape[0]
    k02 = k0 * k0
    h = 0.5 * a_ho * a_ho
    g, eg, idx, lo, hi = _prepare(n, b, h)
    out = np.zeros((m, 6))
    gap = np.empty(m)
    for i in numba.prange(m):
        kx, ky, kz = ks[i, 0], ks[i, 1], ks[i, 2]
        tab = _axis_tables(ks[i], b, h, lo, hi)
        s0 = s1 = s2 = s3 = s4 = s5 = 0.0
        dmin = np.inf
        for j in range(ng):
            qx = kx + g[j, 0]
            qy = ky + g[j, 1]
            qz = kz + g[j, 2]
            den = k02 - (qx * qx + qy * qy + qz * qz)
            if abs(den) < dmin:
                dmin = abs(den)
            f = eg[j] * tab[0, idx[j, 0]] * tab[1, idx[j, 1]] * tab[2, idx[j, 2]] / den
            s0 += f * (k02 - qx * qx)
            s1 += f * (k02 - qy * qy)
            s2 += f * (k02 - qz * qz)
            s3 -= f * qx * qy
            s4 -= f * qx * qz
            s5 -= f * qy * qz
        c = np.exp(-h * (kx * kx + ky * ky + kz * kz)) / k02
        out[i, 0] = s0 * c
        out[i, 1] = s1 * c
        out[i, 2] = s2 * c
        out[i, 3] = s3 * c
        out[i, 4] = s4 * c
        out[i, 5] = s5 * c
        gap[i] = dmin
    return out, gap


@numba.njit(parallel=True, cache=True, fastmath=_FAST)
def phased_sums(ks, n, b, a_ho, k0, phase):
    """Plain sums and sums weighted by ``phase[j]`` in one pass.

    Returns (m, 6) plain, (m, 6) complex phased and (m,) min |k0^2 - |k+G|^2|.
    """
    m = ks.shape[0]
    ng = n.shape[0]
    k02 = k0 * k0
    h = 0.5 * a_ho * a_ho
    g, eg, idx, lo, hi = _prepare(n, b, h)
    pr = phase.real.copy()
    pim = phase.imag.copy()
    plain = np.zeros((m, 6))
    phased = np.zeros((m, 6), dtype=np.complex128)
    gap = np.empty(m)
    for i in numba.prange(m):
        kx, ky, kz = ks[i, 0], ks[i, 1], ks[i, 2]
        tab = _axis_tables(ks[i], b, h, lo, hi)
        s0 = s1 = s2 = s3 = s4 = s5 = 0.0
        r0 = r1 = r2 = r3 = r4 = r5 = 0.0
        u0 = u1 = u2 = u3 = u4 = u5 = 0.0
        dmin = np.inf
        for j in range(ng):
            qx = kx + g[j, 0]
            qy = ky + g[j, 1]
            qz = kz + g[j, 2]
            den = k02 - (qx * qx + qy * qy + qz * qz)
            if abs(den) < dmin:
                dmin = abs(den)
            f = eg[j] * tab[0, idx[j, 0]] * tab[1, idx[j, 1]] * tab[2, idx[j, 2]] / den
            t0 = f * (k02 - qx * qx)
            t1 = f * (k02 - qy * qy)
            t2 = f * (k02 - qz * qz)
            t3 = -f * qx * qy
            t4 = -f * qx * qz
            t5 = -f * qy * qz
            s0 += t0
            s1 += t1
            s2 += t2
            s3 += t3
            s4 += t4
            s5 += t5
            c = pr[j]
            s = pim[j]
            r0 += c * t0
            r1 += c * t1
            r2 += c * t2
            r3 += c * t3
            r4 += c * t4
            r5 += c * t5
            u0 += s * t0
            u1 += s * t1
            u2 += s * t2
            u3 += s * t3
            u4 += s * t4
            u5 += s * t5
        c = np.exp(-h * (kx * kx + ky * ky + kz * kz)) / k02
        plain[i, 0] = s0 * c
        plain[i, 1] = s1 * c
        plain[i, 2] = s2 * c
        plain[i, 3] = s3 * c
        plain[i, 4] = s4 * c
        plain[i, 5] = s5 * c
        phased[i, 0] = (r0 + 1j * u0) * c
        phased[i, 1] = (r1 + 1j * u1) * c
        phased[i, 2] = (r2 + 1j * u2) * c
        phased[i, 3] = (r3 + 1j * u3) * c
        phased[i, 4] = (r4 + 1j * u4) * c
        phased[i, 5] = (r5 + 1j * u5) * c
        gap[i] = dmin
    return plain, phased, gap
