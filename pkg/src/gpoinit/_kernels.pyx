# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled residual/Jacobian kernels; see _kernels_py.py for the reference."""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs

from .constants import CAPPED_RESIDUAL_PX, EPS_DEPTH, EPS_POINT_DEPTH

cnp.import_array()

cdef double _CAP = CAPPED_RESIDUAL_PX
cdef double _EPS_Z = EPS_DEPTH
cdef double _EPS_PZ = EPS_POINT_DEPTH


def gpo_linearize(rays, pix, fidx, KR, tau, n, bint jac=True):
    cdef const double[:, ::1] U = np.ascontiguousarray(rays, dtype=np.float64)
    cdef const double[:, ::1] P = np.ascontiguousarray(pix, dtype=np.float64)
    cdef const cnp.int64_t[::1] F = np.ascontiguousarray(fidx, dtype=np.int64)
    cdef const double[:, :, ::1] M = np.ascontiguousarray(KR, dtype=np.float64)
    cdef const double[:, ::1] T = np.ascontiguousarray(tau, dtype=np.float64)
    cdef const double[::1] nv = np.ascontiguousarray(n, dtype=np.float64)
    cdef Py_ssize_t N = U.shape[0]

    r_arr = np.empty((N, 2))
    bad_arr = np.zeros(N, dtype=bool)
    cdef double[:, ::1] r = r_arr
    cdef cnp.npy_bool[::1] bad = bad_arr.view(np.uint8)
    cdef double[:, :, ::1] Jn
    cdef double[:, :, ::1] Jt
    if jac:
        Jn_arr = np.zeros((N, 2, 3))
        Jt_arr = np.zeros((N, 2, 3))
        Jn = Jn_arr
        Jt = Jt_arr
    else:
        Jn_arr = None
        Jt_arr = None

    cdef double n0 = nv[0], n1 = nv[1], n2 = nv[2]
    cdef Py_ssize_t k, a, b
    cdef long f
    cdef double s, w0, w1, w2, y0, y1, y2, iz, px, py
    cdef double c0, c1, c2, a0, a1, q0, q1, q2
    cdef double JK[2][3]
    for k in range(N):
        f = F[k]
        s = U[k, 0] * n0 + U[k, 1] * n1 + U[k, 2] * n2
        w0 = U[k, 0] - T[f, 0] * s
        w1 = U[k, 1] - T[f, 1] * s
        w2 = U[k, 2] - T[f, 2] * s
        y0 = M[f, 0, 0] * w0 + M[f, 0, 1] * w1 + M[f, 0, 2] * w2
        y1 = M[f, 1, 0] * w0 + M[f, 1, 1] * w1 + M[f, 1, 2] * w2
        y2 = M[f, 2, 0] * w0 + M[f, 2, 1] * w1 + M[f, 2, 2] * w2
        if fabs(y2) <= _EPS_Z:
            bad[k] = 1
            r[k, 0] = _CAP
            r[k, 1] = _CAP
            continue
        iz = 1.0 / y2
        px = y0 * iz
        py = y1 * iz
        r[k, 0] = P[k, 0] - px
        r[k, 1] = P[k, 1] - py
        if not jac:
            continue
        # (d pi / d y) @ KR_f
        for b in range(3):
            JK[0][b] = iz * (M[f, 0, b] - px * M[f, 2, b])
            JK[1][b] = iz * (M[f, 1, b] - py * M[f, 2, b])
        # u x n
        c0 = U[k, 1] * n2 - U[k, 2] * n1
        c1 = U[k, 2] * n0 - U[k, 0] * n2
        c2 = U[k, 0] * n1 - U[k, 1] * n0
        for a in range(2):
            q0 = JK[a][0] * T[f, 0] + JK[a][1] * T[f, 1] + JK[a][2] * T[f, 2]
            Jn[k, a, 0] = -q0 * c0
            Jn[k, a, 1] = -q0 * c1
            Jn[k, a, 2] = -q0 * c2
            for b in range(3):
                Jt[k, a, b] = JK[a][b] * s
    return r_arr, Jn_arr, Jt_arr, bad_arr


def ba_linearize(points, lidx, cidx, R, C, pix, double fx, double fy,
                 double cx, double cy, bint jac=True):
    cdef const double[:, ::1] X = np.ascontiguousarray(points, dtype=np.float64)
    cdef const cnp.int64_t[::1] L = np.ascontiguousarray(lidx, dtype=np.int64)
    cdef const cnp.int64_t[::1] Ci = np.ascontiguousarray(cidx, dtype=np.int64)
    cdef const double[:, :, ::1] Rm = np.ascontiguousarray(R, dtype=np.float64)
    cdef const double[:, ::1] Cm = np.ascontiguousarray(C, dtype=np.float64)
    cdef const double[:, ::1] P = np.ascontiguousarray(pix, dtype=np.float64)
    cdef Py_ssize_t N = L.shape[0]

    r_arr = np.empty((N, 2))
    bad_arr = np.zeros(N, dtype=bool)
    cdef double[:, ::1] r = r_arr
    cdef cnp.npy_bool[::1] bad = bad_arr.view(np.uint8)
    cdef double[:, :, ::1] JP
    cdef double[:, :, ::1] JC
    if jac:
        JP_arr = np.zeros((N, 2, 3))
        JC_arr = np.zeros((N, 2, 3))
        JP = JP_arr
        JC = JC_arr
    else:
        JP_arr = None
        JC_arr = None

    cdef Py_ssize_t k, b
    cdef long l, c
    cdef double d0, d1, d2, x0, x1, x2, iz, u, v, e
    for k in range(N):
        l = L[k]
        c = Ci[k]
        d0 = X[l, 0] - Cm[c, 0]
        d1 = X[l, 1] - Cm[c, 1]
        d2 = X[l, 2] - Cm[c, 2]
        x0 = Rm[c, 0, 0] * d0 + Rm[c, 0, 1] * d1 + Rm[c, 0, 2] * d2
        x1 = Rm[c, 1, 0] * d0 + Rm[c, 1, 1] * d1 + Rm[c, 1, 2] * d2
        x2 = Rm[c, 2, 0] * d0 + Rm[c, 2, 1] * d1 + Rm[c, 2, 2] * d2
        if x2 <= _EPS_PZ:
            bad[k] = 1
            r[k, 0] = _CAP
            r[k, 1] = _CAP
            continue
        iz = 1.0 / x2
        u = x0 * iz
        v = x1 * iz
        r[k, 0] = fx * u + cx - P[k, 0]
        r[k, 1] = fy * v + cy - P[k, 1]
        if not jac:
            continue
        for b in range(3):
            e = fx * iz * (Rm[c, 0, b] - u * Rm[c, 2, b])
            JP[k, 0, b] = e
            JC[k, 0, b] = -e
            e = fy * iz * (Rm[c, 1, b] - v * Rm[c, 2, b])
            JP[k, 1, b] = e
            JC[k, 1, b] = -e
    return r_arr, JP_arr, JC_arr, bad_arr


def accumulate_normal_equations(J, r, cols, Py_ssize_t nparams):
    cdef const double[:, :, ::1] Jm = np.ascontiguousarray(J, dtype=np.float64)
    cdef const double[:, ::1] rm = np.ascontiguousarray(r, dtype=np.float64)
    cdef const cnp.int64_t[:, ::1] cm = np.ascontiguousarray(cols, dtype=np.int64)
    cdef Py_ssize_t N = Jm.shape[0], W = Jm.shape[2]
    A_arr = np.zeros((nparams, nparams))
    g_arr = np.zeros(nparams)
    cdef double[:, ::1] A = A_arr
    cdef double[::1] g = g_arr
    cdef Py_ssize_t k, a, b
    cdef cnp.int64_t ca, cb
    for k in range(N):
        for a in range(W):
            ca = cm[k, a]
            if ca < 0:
                continue
            g[ca] += Jm[k, 0, a] * rm[k, 0] + Jm[k, 1, a] * rm[k, 1]
            for b in range(W):
                cb = cm[k, b]
                if cb < 0:
                    continue
                A[ca, cb] += Jm[k, 0, a] * Jm[k, 0, b] + Jm[k, 1, a] * Jm[k, 1, b]
    return A_arr, g_arr
