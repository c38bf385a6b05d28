# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled trajectory loop for the regret dynamics.

Mirror of _kernels_py.trajectory_loop; keep the arithmetic order identical
(compiled with -ffp-contract=off) so both backends agree bit for bit.
"""

import numpy as np


def trajectory_loop(pi_rows, delta, cvec, coeffs, state_idx, double m1, double m_max):
    cdef const double[:, ::1] pi_v = np.ascontiguousarray(pi_rows, dtype=np.float64)
    cdef const double[:, ::1] delta_v = np.ascontiguousarray(delta, dtype=np.float64)
    cdef const double[:, ::1] cvec_v = np.ascontiguousarray(cvec, dtype=np.float64)
    cdef const double[:, :, ::1] coeffs_v = np.ascontiguousarray(coeffs, dtype=np.float64)
    cdef const long long[::1] states_v = np.ascontiguousarray(state_idx, dtype=np.int64)

    cdef Py_ssize_t rounds = states_v.shape[0]
    cdef Py_ssize_t n = pi_v.shape[1]
    cdef Py_ssize_t top = coeffs_v.shape[0] - 1

    theta_out = np.empty(rounds, dtype=np.float64)
    flows_out = np.empty((rounds, n), dtype=np.float64)
    lat_out = np.empty((rounds, n), dtype=np.float64)
    u_out = np.empty(rounds, dtype=np.float64)
    m_out = np.empty(rounds + 1, dtype=np.float64)

    cdef double[::1] theta_v = theta_out
    cdef double[:, ::1] flows_v = flows_out
    cdef double[:, ::1] lat_v = lat_out
    cdef double[::1] u_v = u_out
    cdef double[::1] m_v = m_out

    cdef Py_ssize_t t, i, w
    cdef long long d
    cdef double m_t = m1
    cdef double pos, th, fi, acc, u_t, kk
    cdef long clipped = 0

    m_v[0] = m1
    for t in range(rounds):
        w = <Py_ssize_t> states_v[t]
        pos = m_t if m_t > 0.0 else 0.0
        th = pos / m_max
        if th > 1.0:
            th = 1.0
            clipped += 1
        u_t = 0.0
        for i in range(n):
            fi = pi_v[w, i] + th * delta_v[w, i]
            acc = coeffs_v[top, w, i]
            for d in range(top - 1, -1, -1):
                acc = acc * fi + coeffs_v[d, w, i]
            flows_v[t, i] = fi
            lat_v[t, i] = acc
            u_t += cvec_v[w, i] * acc
        kk = <double> (t + 1)
        m_t = (kk / (kk + 1.0)) * m_t + (1.0 / (kk + 1.0)) * u_t
        theta_v[t] = th
        u_v[t] = u_t
        m_v[t + 1] = m_t

    return theta_out, flows_out, lat_out, u_out, m_out, clipped
