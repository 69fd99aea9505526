# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled DSP kernels: the sequential inner loops of the effects rack.

Mirrors the recurrences in `fallback.py`; selected automatically at import
when built (see `stepfx._kernels.__init__`).
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def biquad_cascade(x, sos):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xin = np.ascontiguousarray(x, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] s = np.ascontiguousarray(sos, dtype=np.float64)
    cdef Py_ssize_t n = xin.shape[0]
    cdef Py_ssize_t n_sec = s.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] y = xin.copy()
    cdef double b0, b1, b2, a1, a2, z1, z2, xn, yn
    cdef Py_ssize_t i, k
    for k in range(n_sec):
        b0 = s[k, 0]; b1 = s[k, 1]; b2 = s[k, 2]
        a1 = s[k, 4]; a2 = s[k, 5]
        z1 = 0.0; z2 = 0.0
        for i in range(n):
            xn = y[i]
            yn = b0 * xn + z1
            z1 = b1 * xn - a1 * yn + z2
            z2 = b2 * xn - a2 * yn
            y[i] = yn
    return y


def envelope_follower(rect, double attack_coef, double release_coef):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] r = np.ascontiguousarray(rect, dtype=np.float64)
    cdef Py_ssize_t n = r.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] env = np.empty(n, dtype=np.float64)
    cdef double prev = 0.0, target, c
    cdef Py_ssize_t i
    for i in range(n):
        target = r[i]
        c = attack_coef if target > prev else release_coef
        prev = c * prev + (1.0 - c) * target
        env[i] = prev
    return env


def swept_allpass_chain(x, coefs, int n_stages, double feedback):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xin = np.ascontiguousarray(x, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] a = np.ascontiguousarray(coefs, dtype=np.float64)
    cdef Py_ssize_t n = xin.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] wet = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] x_prev = np.zeros(n_stages, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] y_prev = np.zeros(n_stages, dtype=np.float64)
    cdef double w = 0.0, v, y, an
    cdef Py_ssize_t i, s
    for i in range(n):
        an = a[i]
        v = xin[i] + feedback * w
        for s in range(n_stages):
            y = an * (v - y_prev[s]) + x_prev[s]
            x_prev[s] = v
            y_prev[s] = y
            v = y
        w = v
        wet[i] = v
    return wet


def comb_damped(x, Py_ssize_t delay, double g):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xin = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t n = xin.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] buf = np.zeros(n + delay + 1, dtype=np.float64)
    cdef double half_g = 0.5 * g
    cdef Py_ssize_t i
    for i in range(n):
        buf[delay + 1 + i] = xin[i] + half_g * (buf[i + 1] + buf[i])
    return buf[delay + 1:]


def schroeder_allpass(x, Py_ssize_t delay, double g):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xin = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t n = xin.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] y = np.zeros(n, dtype=np.float64)
    cdef double xd, yd
    cdef Py_ssize_t i
    for i in range(n):
        xd = xin[i - delay] if i >= delay else 0.0
        yd = y[i - delay] if i >= delay else 0.0
        y[i] = -g * xin[i] + xd + g * yd
    return y
