# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled periodic stencil kernels on cubic 2-D and 3-D grids."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def laplacian2(const double[:, ::1] u, double h):
    cdef Py_ssize_t n = u.shape[0], i, j, im, ip, jm, jp
    cdef double s = 1.0 / (h * h)
    out = np.empty((n, n))
    cdef double[:, ::1] o = out
    for i in range(n):
        im = i - 1 if i > 0 else n - 1
        ip = i + 1 if i < n - 1 else 0
        for j in range(n):
            jm = j - 1 if j > 0 else n - 1
            jp = j + 1 if j < n - 1 else 0
            o[i, j] = (u[im, j] + u[ip, j] + u[i, jm] + u[i, jp] - 4.0 * u[i, j]) * s
    return out


def laplacian3(const double[:, :, ::1] u, double h):
    cdef Py_ssize_t n = u.shape[0], i, j, k, im, ip, jm, jp, km, kp
    cdef double s = 1.0 / (h * h)
    out = np.empty((n, n, n))
    cdef double[:, :, ::1] o = out
    for i in range(n):
        im = i - 1 if i > 0 else n - 1
        ip = i + 1 if i < n - 1 else 0
        for j in range(n):
            jm = j - 1 if j > 0 else n - 1
            jp = j + 1 if j < n - 1 else 0
            for k in range(n):
                km = k - 1 if k > 0 else n - 1
                kp = k + 1 if k < n - 1 else 0
                o[i, j, k] = (u[im, j, k] + u[ip, j, k] + u[i, jm, k] + u[i, jp, k]
                              + u[i, j, km] + u[i, j, kp] - 6.0 * u[i, j, k]) * s
    return out


def _diff2(const double[:, ::1] u, int axis, double h, int sign):
    # sign = -1: backward difference u[j] - u[j-1]; sign = +1: forward u[j+1] - u[j]
    cdef Py_ssize_t n = u.shape[0], i, j, a, b
    cdef double s = 1.0 / h
    out = np.empty((n, n))
    cdef double[:, ::1] o = out
    for i in range(n):
        for j in range(n):
            if axis == 0:
                a = (i + sign + n) % n
                o[i, j] = sign * (u[a, j] - u[i, j]) * s
            else:
                b = (j + sign + n) % n
                o[i, j] = sign * (u[i, b] - u[i, j]) * s
    return out


def _diff3(const double[:, :, ::1] u, int axis, double h, int sign):
    cdef Py_ssize_t n = u.shape[0], i, j, k, a
    cdef double s = 1.0 / h
    out = np.empty((n, n, n))
    cdef double[:, :, ::1] o = out
    for i in range(n):
        for j in range(n):
            for k in range(n):
                if axis == 0:
                    a = (i + sign + n) % n
                    o[i, j, k] = sign * (u[a, j, k] - u[i, j, k]) * s
                elif axis == 1:
                    a = (j + sign + n) % n
                    o[i, j, k] = sign * (u[i, a, k] - u[i, j, k]) * s
                else:
                    a = (k + sign + n) % n
                    o[i, j, k] = sign * (u[i, j, a] - u[i, j, k]) * s
    return out


def backward_diff(u, int axis, double h):
    if u.ndim == 2:
        return _diff2(u, axis, h, -1)
    return _diff3(u, axis, h, -1)


def forward_diff(u, int axis, double h):
    if u.ndim == 2:
        return _diff2(u, axis, h, 1)
    return _diff3(u, axis, h, 1)


def divergence2(const double[:, ::1] v0, const double[:, ::1] v1, double h):
    cdef Py_ssize_t n = v0.shape[0], i, j, ip, jp
    cdef double s = 1.0 / h
    out = np.empty((n, n))
    cdef double[:, ::1] o = out
    for i in range(n):
        ip = i + 1 if i < n - 1 else 0
        for j in range(n):
            jp = j + 1 if j < n - 1 else 0
            o[i, j] = (v0[ip, j] - v0[i, j] + v1[i, jp] - v1[i, j]) * s
    return out


def divergence3(const double[:, :, ::1] v0, const double[:, :, ::1] v1,
                const double[:, :, ::1] v2, double h):
    cdef Py_ssize_t n = v0.shape[0], i, j, k, ip, jp, kp
    cdef double s = 1.0 / h
    out = np.empty((n, n, n))
    cdef double[:, :, ::1] o = out
    for i in range(n):
        ip = i + 1 if i < n - 1 else 0
        for j in range(n):
            jp = j + 1 if j < n - 1 else 0
            for k in range(n):
                kp = k + 1 if k < n - 1 else 0
                o[i, j, k] = (v0[ip, j, k] - v0[i, j, k] + v1[i, jp, k] - v1[i, j, k]
                              + v2[i, j, kp] - v2[i, j, k]) * s
    return out
