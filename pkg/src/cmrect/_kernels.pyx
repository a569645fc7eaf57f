# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: batched MOSFET stamping and dense LU solve.

Interface mirrors ``cmrect._fallback``.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs

cnp.import_array()

cdef double PHI_FLOOR = 1e-6


def mos_stamp(const double[:] sign, const double[:] beta, const double[:] vto,
              const double[:] gamma, const double[:] phi, const double[:] lam,
              const long[:] nd, const long[:] ng, const long[:] ns, const long[:] nb,
              double gmin, const double[:] x, double[:, ::1] G, double[:] rhs,
              double[:] out_id, signed char[:] out_region, signed char[:] out_swap):
    cdef Py_ssize_t k, m = sign.shape[0]
    cdef long d, g, s, b
    cdef double sg, vd, vg, vs, vb, vds, vgs, vbs, vref, arg, root, vt, dvt
    cdef double vov, clm, core, gm, gds, gmb, ide, si, gtot
    cdef double dd, dg, dsrc, db, i_d, ieq
    cdef bint swap
    cdef signed char region
    for k in range(m):
        d = nd[k]; g = ng[k]; s = ns[k]; b = nb[k]
        sg = sign[k]
        vd = x[d]; vg = x[g]; vs = x[s]; vb = x[b]
        vds = sg * (vd - vs)
        swap = vds < 0.0
        vref = vd if swap else vs
        vgs = sg * (vg - vref)
        vbs = sg * (vb - vref)
        vds = fabs(vds)

        arg = phi[k] - vbs
        if arg <= PHI_FLOOR:
            root = sqrt(PHI_FLOOR)
            dvt = 0.0
        else:
            root = sqrt(arg)
            dvt = -gamma[k] / (2.0 * root)
        vt = vto[k] + gamma[k] * (root - sqrt(phi[k]))
        vov = vgs - vt
        if vov <= 0.0:
            core = 0.0; gm = 0.0; gds = 0.0; region = 0
        else:
            clm = 1.0 + lam[k] * vds
            if vds < vov:
                core = beta[k] * (vov * vds - 0.5 * vds * vds)
                gm = beta[k] * vds * clm
                gds = beta[k] * (vov - vds) * clm + core * lam[k]
                region = 1
            else:
                core = 0.5 * beta[k] * vov * vov
                gm = beta[k] * vov * clm
                gds = core * lam[k]
                region = 2
            core = core * clm
        gds = gds + gmin
        gmb = -gm * dvt
        ide = core + gmin * vds
        gtot = gm + gds + gmb
        if swap:
            si = -sg
            dg = -gm; db = -gmb; dd = gtot; dsrc = -gds
        else:
            si = sg
            dg = gm; db = gmb; dd = gds; dsrc = -gtot
        i_d = si * ide
        ieq = i_d - (dd * vd + dg * vg + dsrc * vs + db * vb)

        G[d, d] += dd; G[d, g] += dg; G[d, s] += dsrc; G[d, b] += db
        G[s, d] -= dd; G[s, g] -= dg; G[s, s] -= dsrc; G[s, b] -= db
        rhs[d] -= ieq
        rhs[s] += ieq
        out_id[k] = i_d
        out_region[k] = region
        out_swap[k] = swap


def solve(A, b):
    """Solve ``A x = b`` by LU with partial pivoting; A and b are not modified."""
    cdef double[:, ::1] a = np.array(A, dtype=np.float64, order="C", copy=True)
    cdef double[:] x = np.array(b, dtype=np.float64, copy=True)
    cdef Py_ssize_t n = a.shape[0], i, j, k, p
    cdef double big, tmp, f, piv
    for k in range(n):
        p = k
        big = fabs(a[k, k])
        for i in range(k + 1, n):
            if fabs(a[i, k]) > big:
                big = fabs(a[i, k])
                p = i
        if big == 0.0:
            raise ZeroDivisionError("singular matrix")
        if p != k:
            for j in range(n):
                tmp = a[k, j]; a[k, j] = a[p, j]; a[p, j] = tmp
            tmp = x[k]; x[k] = x[p]; x[p] = tmp
        piv = a[k, k]
        for i in range(k + 1, n):
            f = a[i, k] / piv
            if f != 0.0:
                a[i, k] = f
                for j in range(k + 1, n):
                    a[i, j] -= f * a[k, j]
                x[i] -= f * x[k]
    for i in range(n - 1, -1, -1):
        tmp = x[i]
        for j in range(i + 1, n):
            tmp -= a[i, j] * x[j]
        x[i] = tmp / a[i, i]
    return np.asarray(x)
