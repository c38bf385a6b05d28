"""Closed-loop regret dynamics of the recommendation-following population.

Each round: the fraction of the population ignoring the recommendation is
the positive part of the running-average payoff difference, scaled by a
fixed bound; the induced flow mixes the recommendation with the defection
matrix; realized latencies feed the next payoff difference. Under an
obedient policy the non-following fraction vanishes asymptotically.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

from . import backend
from .game import DefectionMatrix, GameConfig, SignalPolicy


def aggregate_payoff_diff(pi_row: np.ndarray, p: DefectionMatrix, latencies: np.ndarray) -> float:
    """Population-aggregated payoff difference pi^T (I - P) l, in minutes."""
    pi_row = np.asarray(pi_row, dtype=float)
    lat = np.asarray(latencies, dtype=float)
    n = p.n_routes
    if pi_row.shape != (n,) or lat.shape != (n,):
        raise ValueError(
            f"dimension mismatch: pi {pi_row.shape}, latencies {lat.shape}, P is {n}x{n}"
        )
    pe = p.effective()
    return float(pi_row @ (lat - pe @ lat))


def step_m(m: float, k: int, u: float) -> float:
    """Fold round k's payoff difference into the running average."""
    if k < 1:
        raise ValueError(f"round index must be >= 1, got {k}")
    return (k / (k + 1)) * m + (1 / (k + 1)) * u


def theta(m: float, m_max: float) -> float:
    """Non-following population fraction: positive part of m over m_max."""
    if m_max <= 0:
        raise ValueError(f"m_max must be positive, got {m_max}")
    value = max(m, 0.0) / m_max
    if value > 1.0:
        warnings.warn(
            f"m={m} exceeds m_max={m_max}; theta clamped to 1 "
            "(m_max below the guaranteed bound?)",
            stacklevel=2,
        )
        return 1.0
    return value


def induced_flow(pi_row: np.ndarray, p: DefectionMatrix, th: float) -> np.ndarray:
    """Flow when fraction th defects through P: pi + th (P^T - I) pi."""
    if not 0.0 <= th <= 1.0:
        raise ValueError(f"theta must be in [0, 1], got {th}")
    pi_row = np.asarray(pi_row, dtype=float)
    if pi_row.shape != (p.n_routes,):
        raise ValueError(f"dimension mismatch: pi {pi_row.shape}, P is {p.n_routes}x{p.n_routes}")
    return pi_row + th * (p.effective().T @ pi_row - pi_row)


def m_max_lower_bound(cfg: GameConfig) -> float:
    """Guaranteed bound on the positive part of m: sum of per-route max coefficients."""
    return float(cfg.coeffs.max(axis=1).sum())


@dataclass(frozen=True)
class DynamicsState:
    """Snapshot of the dynamics at the start of a round."""

    k: int
    m: float
    m_max: float

    @property
    def theta(self) -> float:
        return min(max(self.m, 0.0) / self.m_max, 1.0)


@dataclass(frozen=True)
class Trajectory:
    """Round-by-round record of one dynamics run.

    m has length rounds+1; m[0] is the initial condition and m[k] the
    average after round k. All other arrays have one row per round.
    """

    states: tuple[str, ...]
    theta: np.ndarray
    flows: np.ndarray
    latencies: np.ndarray
    payoff_diffs: np.ndarray
    m: np.ndarray
    m_max: float
    clipped_rounds: int

    @property
    def rounds(self) -> int:
        return len(self.states)

    def at(self, k: int) -> DynamicsState:
        if not 1 <= k <= self.rounds:
            raise IndexError(f"round {k} outside 1..{self.rounds}")
        return DynamicsState(k=k, m=float(self.m[k - 1]), m_max=self.m_max)

    def mean_theta(self, last: int | None = None) -> float:
        window = self.theta if last is None else self.theta[-last:]
        return float(window.mean())

    def export_jsonl(self, fh) -> None:
        """One round per line; field names shared with session logs where they overlap."""
        for t in range(self.rounds):
            rec = {
                "k": t + 1,
                "state": self.states[t],
                "theta": float(self.theta[t]),
                "flows": [float(x) for x in self.flows[t]],
                "travel_times": [float(x) for x in self.latencies[t]],
                "u": float(self.payoff_diffs[t]),
                "m_next": float(self.m[t + 1]),
            }
            fh.write(json.dumps(rec, separators=(",", ":")) + "\n")


def sample_states(cfg: GameConfig, rounds: int, seed: int) -> tuple[str, ...]:
    """I.i.d. state sequence from the prior, deterministic given the seed."""
    rng = np.random.default_rng(seed)
    idx = rng.choice(cfg.n_states, size=rounds, p=cfg.prior)
    return tuple(cfg.states[i] for i in idx)


def simulate_dynamics(
    cfg: GameConfig,
    policy: SignalPolicy,
    p: DefectionMatrix,
    m1: float,
    m_max: float,
    state_seq,
) -> Trajectory:
    """Run the dynamics over an explicit state sequence.

    Deterministic given the sequence. Warns (does not reject) when m_max is
    below the guaranteed bound, in which case theta may clamp at 1.
    """
    if m_max <= 0:
        raise ValueError(f"m_max must be positive, got {m_max}")
    if abs(m1) > m_max:
        raise ValueError(f"|m1|={abs(m1)} exceeds m_max={m_max}")
    if len(state_seq) == 0:
        raise ValueError("state sequence is empty")
    if policy.pi.shape != (cfg.n_states, cfg.n_routes) or p.n_routes != cfg.n_routes:
        raise ValueError("policy/defection dimensions do not match the game")
    bound = m_max_lower_bound(cfg)
    if m_max < bound:
        warnings.warn(
            f"m_max={m_max} is below the guaranteed bound {bound}; theta may clamp",
            stacklevel=2,
        )

    states = tuple(cfg.states[cfg.state_index(s)] for s in state_seq)
    state_idx = np.asarray([cfg.state_index(s) for s in states], dtype=np.int64)

    pi_rows = policy.pi
    pe = p.effective()
    delta = pi_rows @ pe - pi_rows  # row w holds (P^T - I) pi_w
    cvec = pi_rows - pi_rows @ pe  # row w holds (I - P)^T pi_w, so u = cvec . l

    th, flows, lat, u, m, clipped = backend.trajectory_loop(
        pi_rows, delta, cvec, cfg.coeffs, state_idx, float(m1), float(m_max)
    )
    if clipped:
        warnings.warn(f"theta clamped to 1 in {clipped} rounds", stacklevel=2)
    return Trajectory(
        states=states,
        theta=th,
        flows=flows,
        latencies=lat,
        payoff_diffs=u,
        m=m,
        m_max=float(m_max),
        clipped_rounds=int(clipped),
    )
