# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled per-voxel weight-update kernel.

Same contract as reloreta._block_np.block_sqrt_gram: for each voxel block
compute B_i = H_i^T P H_i, its symmetric PSD square root, and the
pseudoinverse of that square root. Eigen-decomposition of the 3x3 blocks
uses cyclic Jacobi sweeps.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, sqrt

BACKEND = "cython"


cdef inline void _jacobi3(double b[3][3], double lam[3], double v[3][3]) noexcept nogil:
    cdef int i, j, k, p, q, sweep
    cdef double off, theta, t, c, s, tau, apq, h, g
    for i in range(3):
        for j in range(3):
            v[i][j] = 1.0 if i == j else 0.0
    for sweep in range(50):
        off = fabs(b[0][1]) + fabs(b[0][2]) + fabs(b[1][2])
        if off == 0.0:
            break
        for p in range(2):
            for q in range(p + 1, 3):
                apq = b[p][q]
                if fabs(apq) < 1e-300:
                    continue
                # stop once rotations no longer change the diagonal
                if fabs(apq) <= 1e-16 * (fabs(b[p][p]) + fabs(b[q][q])):
                    b[p][q] = 0.0
                    b[q][p] = 0.0
                    continue
                theta = 0.5 * (b[q][q] - b[p][p]) / apq
                t = 1.0 / (fabs(theta) + sqrt(theta * theta + 1.0))
                if theta < 0.0:
                    t = -t
                c = 1.0 / sqrt(t * t + 1.0)
                s = t * c
                tau = s / (1.0 + c)
                h = t * apq
                b[p][p] -= h
                b[q][q] += h
                b[p][q] = 0.0
                b[q][p] = 0.0
                for k in range(3):
                    if k != p and k != q:
                        g = b[k][p]
                        h = b[k][q]
                        b[k][p] = g - s * (h + tau * g)
                        b[p][k] = b[k][p]
                        b[k][q] = h + s * (g - tau * h)
                        b[q][k] = b[k][q]
                for k in range(3):
                    g = v[k][p]
                    h = v[k][q]
                    v[k][p] = g - s * (h + tau * g)
                    v[k][q] = h + s * (g - tau * h)
    for i in range(3):
        lam[i] = b[i][i]


def block_sqrt_gram(double[:, :, ::1] htb, double[:, ::1] p, double rel_tol=1e-12):
    """See reloreta._block_np.block_sqrt_gram."""
    cdef Py_ssize_t kk = htb.shape[0]
    cdef Py_ssize_t m = htb.shape[2]
    if p.shape[0] != m or p.shape[1] != m:
        raise ValueError("shape mismatch between htb and p")

    w_arr = np.empty((kk, 3, 3), dtype=np.float64)
    winv_arr = np.empty((kk, 3, 3), dtype=np.float64)
    a_arr = np.empty((3, m), dtype=np.float64)
    cdef double[:, :, ::1] w = w_arr
    cdef double[:, :, ::1] winv = winv_arr
    cdef double[:, ::1] a = a_arr

    cdef Py_ssize_t k, i, j, r, n
    cdef double acc, lmax, thresh, sj, sij
    cdef double b[3][3]
    cdef double lam[3]
    cdef double v[3][3]

    with nogil:
        for k in range(kk):
            # a = H_k^T P  (3 x M)
            for i in range(3):
                for n in range(m):
                    acc = 0.0
                    for r in range(m):
                        acc += htb[k, i, r] * p[r, n]
                    a[i, n] = acc
            # b = a H_k, symmetrized
            for i in range(3):
                for j in range(i, 3):
                    acc = 0.0
                    for n in range(m):
                        acc += a[i, n] * htb[k, j, n]
                    b[i][j] = acc
                    b[j][i] = acc
            _jacobi3(b, lam, v)
            lmax = 0.0
            for i in range(3):
                if lam[i] < 0.0:
                    lam[i] = 0.0
                if lam[i] > lmax:
                    lmax = lam[i]
            thresh = rel_tol * lmax
            for i in range(3):
                for j in range(3):
                    acc = 0.0
                    sij = 0.0
                    for r in range(3):
                        if lam[r] > 0.0:
                            sj = sqrt(lam[r])
                            acc += v[i][r] * sj * v[j][r]
                            if lam[r] > thresh:
                                sij += v[i][r] * (1.0 / sj) * v[j][r]
                    w[k, i, j] = acc
                    winv[k, i, j] = sij
    return w_arr, winv_arr
