# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled circuit kernels for dense density matrices and statevectors.

Qubit 0 is the most significant bit of a basis index.  ``ops`` rows are
``(kind, a, b)`` with kind 0 = Ry(a), 1 = Rz(a), 2 = CNOT(control=a, target=b);
``angles`` holds one entry per row (ignored for CNOT).
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin

ctypedef double complex cplx

cnp.import_array()


cdef inline void _gate_matrix(int kind, double theta, cplx* u) noexcept nogil:
    cdef double c = cos(0.5 * theta)
    cdef double s = sin(0.5 * theta)
    if kind == 0:
        u[0] = c
        u[1] = -s
        u[2] = s
        u[3] = c
    else:
        u[0] = c - 1j * s
        u[1] = 0
        u[2] = 0
        u[3] = c + 1j * s


cdef void _dm_1q(cplx[:, ::1] rho, int n, int q, cplx* u) noexcept nogil:
    cdef Py_ssize_t dim = 1 << n
    cdef Py_ssize_t stride = 1 << (n - 1 - q)
    cdef Py_ssize_t i, j, i1
    cdef cplx a, b
    cdef cplx v0 = u[0].conjugate(), v1 = u[1].conjugate()
    cdef cplx v2 = u[2].conjugate(), v3 = u[3].conjugate()
    for i in range(dim):
        if i & stride:
            continue
        i1 = i | stride
        for j in range(dim):
            a = rho[i, j]
            b = rho[i1, j]
            rho[i, j] = u[0] * a + u[1] * b
            rho[i1, j] = u[2] * a + u[3] * b
    for i in range(dim):
        for j in range(dim):
            if j & stride:
                continue
            i1 = j | stride
            a = rho[i, j]
            b = rho[i, i1]
            rho[i, j] = a * v0 + b * v1
            rho[i, i1] = a * v2 + b * v3


cdef void _dm_cnot(cplx[:, ::1] rho, int n, int c, int t) noexcept nogil:
    cdef Py_ssize_t dim = 1 << n
    cdef Py_ssize_t cs = 1 << (n - 1 - c)
    cdef Py_ssize_t ts = 1 << (n - 1 - t)
    cdef Py_ssize_t i, j, i1
    cdef cplx tmp
    # rows
    for i in range(dim):
        if (i & cs) and not (i & ts):
            i1 = i | ts
            for j in range(dim):
                tmp = rho[i, j]
                rho[i, j] = rho[i1, j]
                rho[i1, j] = tmp
    # columns
    for j in range(dim):
        if (j & cs) and not (j & ts):
            i1 = j | ts
            for i in range(dim):
                tmp = rho[i, j]
                rho[i, j] = rho[i, i1]
                rho[i, i1] = tmp


cdef void _dm_depolarize(cplx[:, ::1] rho, int n, int q, double p) noexcept nogil:
    cdef Py_ssize_t dim = 1 << n
    cdef Py_ssize_t stride = 1 << (n - 1 - q)
    cdef Py_ssize_t i, j, i1, j1
    cdef double keep = 1.0 - 2.0 * p / 3.0
    cdef double swap = 2.0 * p / 3.0
    cdef double off = 1.0 - 4.0 * p / 3.0
    cdef cplx a, d
    for i in range(dim):
        if i & stride:
            continue
        i1 = i | stride
        for j in range(dim):
            if j & stride:
                continue
            j1 = j | stride
            a = rho[i, j]
            d = rho[i1, j1]
            rho[i, j] = keep * a + swap * d
            rho[i1, j1] = keep * d + swap * a
            rho[i, j1] = off * rho[i, j1]
            rho[i1, j] = off * rho[i1, j]


def dm_run(cplx[:, ::1] rho, int n, const int[:, ::1] ops, const double[::1] angles,
           double p1=0.0, double p2=0.0):
    """Apply ``ops`` to ``rho`` in place with optional depolarizing noise."""
    cdef Py_ssize_t k, m = ops.shape[0]
    cdef cplx u[4]
    cdef int kind
    with nogil:
        for k in range(m):
            kind = ops[k, 0]
            if kind == 2:
                _dm_cnot(rho, n, ops[k, 1], ops[k, 2])
                if p2 > 0.0:
                    _dm_depolarize(rho, n, ops[k, 1], p2)
                    _dm_depolarize(rho, n, ops[k, 2], p2)
            else:
                _gate_matrix(kind, angles[k], u)
                _dm_1q(rho, n, ops[k, 1], u)
                if p1 > 0.0:
                    _dm_depolarize(rho, n, ops[k, 1], p1)


def sv_run(cplx[::1] psi, int n, const int[:, ::1] ops, const double[::1] angles):
    """Apply ``ops`` to the statevector ``psi`` in place."""
    cdef Py_ssize_t k, m = ops.shape[0]
    cdef Py_ssize_t dim = 1 << n
    cdef Py_ssize_t i, i1, stride, cs
    cdef cplx u[4]
    cdef cplx a, b
    cdef int kind
    with nogil:
        for k in range(m):
            kind = ops[k, 0]
            if kind == 2:
                cs = 1 << (n - 1 - ops[k, 1])
                stride = 1 << (n - 1 - ops[k, 2])
                for i in range(dim):
                    if (i & cs) and not (i & stride):
                        i1 = i | stride
                        a = psi[i]
                        psi[i] = psi[i1]
                        psi[i1] = a
            else:
                _gate_matrix(kind, angles[k], u)
                stride = 1 << (n - 1 - ops[k, 1])
                for i in range(dim):
                    if i & stride:
                        continue
                    i1 = i | stride
                    a = psi[i]
                    b = psi[i1]
                    psi[i] = u[0] * a + u[1] * b
                    psi[i1] = u[2] * a + u[3] * b


def dm_expectation(const cplx[:, ::1] rho, const cplx[:, ::1] obs):
    """Return Tr[obs @ rho] as a complex number."""
    cdef Py_ssize_t dim = rho.shape[0]
    cdef Py_ssize_t i, j
    cdef cplx acc = 0
    with nogil:
        for i in range(dim):
            for j in range(dim):
                acc = acc + obs[i, j] * rho[j, i]
    return acc
