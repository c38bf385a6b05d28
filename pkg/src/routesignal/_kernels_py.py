"""Pure-Python trajectory loop, the fallback when the compiled kernel is absent.

Must stay semantically and numerically identical to _kernels.pyx: same
operations in the same order on IEEE doubles, so both backends produce
bit-identical trajectories.
"""

from __future__ import annotations

import numpy as np


def trajectory_loop(pi_rows, delta, cvec, coeffs, state_idx, m1, m_max):
    """Run the closed-loop regret dynamics over a fixed state sequence.

    pi_rows[w]  recommendation distribution in state w
    delta[w]    (P^T - I) pi_w, the defection drift direction
    cvec[w]     (I - P)^T pi_w, so the payoff aggregate is cvec[w] . latency
    coeffs      latency coefficients, shape (degree+1, n_states, n_routes)

    Returns (theta, flows, latencies, u, m, clipped) where m has one extra
    leading entry holding m(1) and clipped counts rounds with theta > 1.
    """
    pi_l = pi_rows.tolist()
    delta_l = delta.tolist()
    cvec_l = cvec.tolist()
    coeffs_l = coeffs.tolist()
    states = state_idx.tolist()

    rounds = len(states)
    n = len(pi_l[0])
    top = len(coeffs_l) - 1

    theta_out = [0.0] * rounds
    flows_out = [[0.0] * n for _ in range(rounds)]
    lat_out = [[0.0] * n for _ in range(rounds)]
    u_out = [0.0] * rounds
    m_out = [0.0] * (rounds + 1)
    m_out[0] = m1
    clipped = 0

    m_t = m1
    for t in range(rounds):
        w = states[t]
        pos = m_t if m_t > 0.0 else 0.0
        th = pos / m_max
        if th > 1.0:
            th = 1.0
            clipped += 1
        pi_w = pi_l[w]
        delta_w = delta_l[w]
        cvec_w = cvec_l[w]
        u_t = 0.0
        row_f = flows_out[t]
        row_l = lat_out[t]
        for i in range(n):
            fi = pi_w[i] + th * delta_w[i]
            acc = coeffs_l[top][w][i]
            for d in range(top - 1, -1, -1):
                acc = acc * fi + coeffs_l[d][w][i]
            row_f[i] = fi
            row_l[i] = acc
            u_t += cvec_w[i] * acc
        kk = float(t + 1)
        m_t = (kk / (kk + 1.0)) * m_t + (1.0 / (kk + 1.0)) * u_t
        theta_out[t] = th
        u_out[t] = u_t
        m_out[t + 1] = m_t

    return (
        np.asarray(theta_out),
        np.asarray(flows_out),
        np.asarray(lat_out),
        np.asarray(u_out),
        np.asarray(m_out),
        clipped,
    )
