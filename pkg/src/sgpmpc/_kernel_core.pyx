# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled squared-exponential kernel assembly (hot path).

Mirrors :mod:`sgpmpc._kernel_ref`; see that module for the row layout
contract.  The loops are organised per point pair so the exponential is
evaluated once per pair and shared by all component rows.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp

cnp.import_array()


def se_gram(double[:, ::1] za, double[:, ::1] zb, double[::1] inv_ls2, double sf2):
    cdef Py_ssize_t na = za.shape[0], nb = zb.shape[0], d = za.shape[1]
    cdef Py_ssize_t i, j, t
    cdef double q, e
    out = np.empty((na, nb))
    cdef double[:, ::1] o = out
    for i in range(na):
        for j in range(nb):
            q = 0.0
            for t in range(d):
                e = za[i, t] - zb[j, t]
                q += e * e * inv_ls2[t]
            o[i, j] = sf2 * exp(-0.5 * q)
    return out


def se_cross_tagged(
    double[:, ::1] za,
    cnp.int64_t[::1] astart,
    cnp.int64_t[::1] acomp,
    double[:, ::1] zb,
    cnp.int64_t[::1] bstart,
    cnp.int64_t[::1] bcomp,
    double[::1] inv_ls2,
    double sf2,
):
    cdef Py_ssize_t na = za.shape[0], nb = zb.shape[0], d = za.shape[1]
    cdef Py_ssize_t ma = acomp.shape[0], mb = bcomp.shape[0]
    cdef Py_ssize_t i, j, t, r, s
    cdef cnp.int64_t p, q
    cdef double qsum, k, e, rp, rq, dii
    out = np.empty((ma, mb))
    cdef double[:, ::1] o = out
    for i in range(na):
        for j in range(nb):
            qsum = 0.0
            for t in range(d):
                e = za[i, t] - zb[j, t]
                qsum += e * e * inv_ls2[t]
            k = sf2 * exp(-0.5 * qsum)
            for r in range(astart[i], astart[i + 1]):
                p = acomp[r]
                for s in range(bstart[j], bstart[j + 1]):
                    q = bcomp[s]
                    if p == 0 and q == 0:
                        o[r, s] = k
                    elif q == 0:
                        o[r, s] = -k * (za[i, p - 1] - zb[j, p - 1]) * inv_ls2[p - 1]
                    elif p == 0:
                        o[r, s] = k * (za[i, q - 1] - zb[j, q - 1]) * inv_ls2[q - 1]
                    else:
                        rp = (za[i, p - 1] - zb[j, p - 1]) * inv_ls2[p - 1]
                        rq = (za[i, q - 1] - zb[j, q - 1]) * inv_ls2[q - 1]
                        dii = inv_ls2[p - 1] if p == q else 0.0
                        o[r, s] = k * (dii - rp * rq)
    return out
