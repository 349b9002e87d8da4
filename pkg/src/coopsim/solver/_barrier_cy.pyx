# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled evaluation of constraint values and the log-barrier.

Mirrors `_barrier_py`; the hot loops run in C.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp2, log

cnp.import_array()

cdef double LN2 = 0.6931471805599453

BACKEND_NAME = "compiled"


def eval_f(prog, cnp.ndarray[cnp.float64_t, ndim=1] x):
    cdef cnp.ndarray[cnp.int64_t, ndim=1] dom = prog.dom_pos
    cdef Py_ssize_t i, j, t
    for t in range(dom.shape[0]):
        if x[dom[t]] <= 0.0:
            return False, None

    cdef cnp.ndarray[cnp.float64_t, ndim=2] A = prog.A
    cdef cnp.ndarray[cnp.float64_t, ndim=1] b = prog.b
    cdef Py_ssize_t m = A.shape[0], n = A.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] f = np.empty(m)
    cdef double acc
    for i in range(m):
        acc = b[i]
        for j in range(n):
            acc += A[i, j] * x[j]
        f[i] = acc

    cdef cnp.ndarray[cnp.int64_t, ndim=1] e_con = prog.e_con
    cdef cnp.ndarray[cnp.float64_t, ndim=1] e_coef = prog.e_coef
    cdef cnp.ndarray[cnp.float64_t, ndim=2] e_rows = prog.e_rows
    cdef cnp.ndarray[cnp.float64_t, ndim=1] e_off = prog.e_off
    for t in range(e_con.shape[0]):
        acc = e_off[t]
        for j in range(n):
            acc += e_rows[t, j] * x[j]
        f[e_con[t]] += e_coef[t] * exp2(acc)

    cdef cnp.ndarray[cnp.int64_t, ndim=1] i_con = prog.i_con
    cdef cnp.ndarray[cnp.float64_t, ndim=1] i_coef = prog.i_coef
    cdef cnp.ndarray[cnp.int64_t, ndim=1] i_var = prog.i_var
    for t in range(i_con.shape[0]):
        f[i_con[t]] += i_coef[t] / x[i_var[t]]

    cdef cnp.ndarray[cnp.int64_t, ndim=1] q_con = prog.q_con
    cdef cnp.ndarray[cnp.float64_t, ndim=1] q_coef = prog.q_coef
    cdef cnp.ndarray[cnp.float64_t, ndim=2] q_rows = prog.q_rows
    cdef cnp.ndarray[cnp.float64_t, ndim=1] q_off = prog.q_off
    for t in range(q_con.shape[0]):
        acc = q_off[t]
        for j in range(n):
            acc += q_rows[t, j] * x[j]
        f[q_con[t]] += q_coef[t] * acc * acc
    return True, f


def eval_barrier(prog, cnp.ndarray[cnp.float64_t, ndim=1] x):
    ok, f_obj = eval_f(prog, x)
    if not ok:
        return False, f_obj, None, None, None
    cdef cnp.ndarray[cnp.float64_t, ndim=1] f = f_obj
    cdef Py_ssize_t m = f.shape[0]
    cdef Py_ssize_t i, j, k, t, ci
    for i in range(m):
        if f[i] >= 0.0:
            return False, f_obj, None, None, None

    cdef cnp.ndarray[cnp.float64_t, ndim=2] A = prog.A
    cdef Py_ssize_t n = A.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] G = A.copy()
    cdef cnp.ndarray[cnp.float64_t, ndim=1] s = np.empty(m)
    cdef double phi = 0.0
    for i in range(m):
        s[i] = -1.0 / f[i]
        phi -= log(-f[i])

    cdef cnp.ndarray[cnp.float64_t, ndim=2] hess = np.zeros((n, n))
    cdef double acc, val, w

    cdef cnp.ndarray[cnp.int64_t, ndim=1] e_con = prog.e_con
    cdef cnp.ndarray[cnp.float64_t, ndim=1] e_coef = prog.e_coef
    cdef cnp.ndarray[cnp.float64_t, ndim=2] e_rows = prog.e_rows
    cdef cnp.ndarray[cnp.float64_t, ndim=1] e_off = prog.e_off
    for t in range(e_con.shape[0]):
        ci = e_con[t]
        acc = e_off[t]
        for j in range(n):
            acc += e_rows[t, j] * x[j]
        val = e_coef[t] * exp2(acc)
        for j in range(n):
            G[ci, j] += LN2 * val * e_rows[t, j]
        w = LN2 * LN2 * val * s[ci]
        for j in range(n):
            if e_rows[t, j] != 0.0:
                for k in range(n):
                    hess[j, k] += w * e_rows[t, j] * e_rows[t, k]

    cdef cnp.ndarray[cnp.int64_t, ndim=1] i_con = prog.i_con
    cdef cnp.ndarray[cnp.float64_t, ndim=1] i_coef = prog.i_coef
    cdef cnp.ndarray[cnp.int64_t, ndim=1] i_var = prog.i_var
    cdef double xi
    for t in range(i_con.shape[0]):
        ci = i_con[t]
        j = i_var[t]
        xi = x[j]
        G[ci, j] += -i_coef[t] / (xi * xi)
        hess[j, j] += 2.0 * i_coef[t] / (xi * xi * xi) * s[ci]

    cdef cnp.ndarray[cnp.int64_t, ndim=1] q_con = prog.q_con
    cdef cnp.ndarray[cnp.float64_t, ndim=1] q_coef = prog.q_coef
    cdef cnp.ndarray[cnp.float64_t, ndim=2] q_rows = prog.q_rows
    cdef cnp.ndarray[cnp.float64_t, ndim=1] q_off = prog.q_off
    for t in range(q_con.shape[0]):
        ci = q_con[t]
        acc = q_off[t]
        for j in range(n):
            acc += q_rows[t, j] * x[j]
        for j in range(n):
            G[ci, j] += 2.0 * q_coef[t] * acc * q_rows[t, j]
        w = 2.0 * q_coef[t] * s[ci]
        for j in range(n):
            if q_rows[t, j] != 0.0:
                for k in range(n):
                    hess[j, k] += w * q_rows[t, j] * q_rows[t, k]

    cdef cnp.ndarray[cnp.float64_t, ndim=1] grad = np.zeros(n)
    cdef double si
    for i in range(m):
        si = s[i]
        for j in range(n):
            grad[j] += G[i, j] * si
        w = si * si
        for j in range(n):
            if G[i, j] != 0.0:
                for k in range(n):
                    hess[j, k] += w * G[i, j] * G[i, k]
    return True, f_obj, phi, grad, hess
