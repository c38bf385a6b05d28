"""Routing game model: latencies, recommendation policies, and obedience.

The world is a parallel-link network with an uncertain state. Each state
has its own polynomial latency function per route, a common prior over
states is public, and a signal policy maps each state to a distribution
over route recommendations. A policy is obedient when, in posterior
expectation, following its recommendation is never worse than switching
to any fixed alternative route.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

SIMPLEX_TOL = 1e-9


class ConfigError(ValueError):
    """Raised when a config document or game object violates an invariant."""


def _as_readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


def _check_simplex_row(row: np.ndarray, name: str, tol: float = SIMPLEX_TOL) -> np.ndarray:
    if np.any(row < 0):
        raise ConfigError(f"{name}: negative entry {row.min()}")
    total = float(row.sum())
    if abs(total - 1.0) > tol:
        raise ConfigError(f"{name}: entries sum to {total}, expected 1")
    return row / total


@dataclass(frozen=True)
class GameConfig:
    """Immutable description of the routing game.

    coeffs has shape (degree+1, n_states, n_routes): coeffs[d, w, i] is the
    coefficient on flow^d of route i's latency in state w, in minutes.
    """

    n_routes: int
    states: tuple[str, ...]
    prior: np.ndarray
    coeffs: np.ndarray
    recommended_fraction: float = 1.0

    def __post_init__(self):
        if self.n_routes < 1:
            raise ConfigError(f"n_routes: must be positive, got {self.n_routes}")
        if len(self.states) < 1:
            raise ConfigError("states: at least one state required")
        if len(set(self.states)) != len(self.states):
            raise ConfigError("states: identifiers must be unique")
        prior = np.asarray(self.prior, dtype=float)
        if prior.shape != (len(self.states),):
            raise ConfigError(
                f"prior: expected {len(self.states)} entries, got shape {prior.shape}"
            )
        if np.any(prior <= 0):
            raise ConfigError("prior: entries must be strictly positive (interior prior)")
        total = float(prior.sum())
        if abs(total - 1.0) > SIMPLEX_TOL:
            raise ConfigError(f"prior: sums to {total}, expected 1")
        object.__setattr__(self, "prior", _as_readonly(prior / total))

        coeffs = np.asarray(self.coeffs, dtype=float)
        if coeffs.ndim != 3 or coeffs.shape[1:] != (len(self.states), self.n_routes):
            raise ConfigError(
                "coeffs: expected shape (degree+1, n_states, n_routes), "
                f"got {coeffs.shape}"
            )
        if np.any(coeffs < 0):
            raise ConfigError("coeffs: coefficients must be nonnegative")
        if coeffs.shape[0] < 2 or np.any(coeffs[1:].sum(axis=0) <= 0):
            raise ConfigError(
                "coeffs: every (state, route) needs a strictly positive coefficient "
                "on some degree >= 1 (latency must be strictly increasing)"
            )
        object.__setattr__(self, "coeffs", _as_readonly(coeffs))
        object.__setattr__(self, "states", tuple(self.states))

        if self.recommended_fraction != 1.0:
            raise ConfigError(
                f"recommended_fraction: only 1.0 is supported, got {self.recommended_fraction}"
            )

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def degree(self) -> int:
        return self.coeffs.shape[0] - 1

    def state_index(self, state: int | str) -> int:
        if isinstance(state, str):
            try:
                return self.states.index(state)
            except ValueError:
                raise ValueError(f"unknown state {state!r}") from None
        idx = int(state)
        if not 0 <= idx < self.n_states:
            raise ValueError(f"unknown state index {state}")
        return idx


@dataclass(frozen=True)
class SignalPolicy:
    """Per-state probability distribution over route recommendations."""

    pi: np.ndarray

    def __post_init__(self):
        pi = np.asarray(self.pi, dtype=float)
        if pi.ndim != 2:
            raise ConfigError(f"policy: expected a 2-d table, got shape {pi.shape}")
        rows = np.vstack(
            [_check_simplex_row(pi[w], f"policy row {w}") for w in range(pi.shape[0])]
        )
        object.__setattr__(self, "pi", _as_readonly(rows))

    @property
    def n_states(self) -> int:
        return self.pi.shape[0]

    @property
    def n_routes(self) -> int:
        return self.pi.shape[1]


@dataclass(frozen=True)
class DefectionMatrix:
    """Row-stochastic rerouting of agents who do not follow a recommendation.

    p[i, j] is the fraction of non-followers recommended route i who take
    route j instead; the diagonal is zero. A row of all zeros means no
    defection from that route has ever been observed and is permitted (the
    row is treated as "unknown", not "stay put").
    """

    p: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        if p.ndim != 2 or p.shape[0] != p.shape[1]:
            raise ConfigError(f"defection matrix: expected square, got shape {p.shape}")
        if np.any(np.abs(np.diag(p)) > 0):
            raise ConfigError("defection matrix: diagonal must be zero")
        if np.any(p < 0):
            raise ConfigError("defection matrix: negative entry")
        out = p.copy()
        for i in range(p.shape[0]):
            total = float(p[i].sum())
            if total == 0.0:
                continue
            if abs(total - 1.0) > SIMPLEX_TOL:
                raise ConfigError(f"defection matrix row {i}: sums to {total}, expected 1 or 0")
            out[i] = p[i] / total
        object.__setattr__(self, "p", _as_readonly(out))

    @property
    def n_routes(self) -> int:
        return self.p.shape[0]

    def effective(self) -> np.ndarray:
        """The matrix with all-zero rows made identity-preserving.

        A zero row means no defection from that route was ever observed;
        consumers must keep its mass in place rather than lose it.
        """
        zero_rows = self.p.sum(axis=1) == 0
        if not zero_rows.any():
            return self.p
        out = self.p.copy()
        idx = np.flatnonzero(zero_rows)
        out[idx, idx] = 1.0
        return out


@dataclass(frozen=True)
class ObedienceReport:
    """Slack of every ordered-pair obedience inequality, in minutes.

    slack[i, j] = E[time if switched to j] - E[time if followed i], both
    weighted by the probability route i is recommended. Nonnegative slack
    for all pairs means following is (weakly) optimal.
    """

    slack: np.ndarray
    tolerance: float
    obedient: bool = field(init=False)

    def __post_init__(self):
        slack = _as_readonly(np.asarray(self.slack, dtype=float))
        object.__setattr__(self, "slack", slack)
        object.__setattr__(self, "obedient", bool(self.min_slack >= -self.tolerance))

    @property
    def min_slack(self) -> float:
        n = self.slack.shape[0]
        off = ~np.eye(n, dtype=bool)
        return float(self.slack[off].min())

    def pairs(self):
        """Yield (i, j, slack) over ordered route pairs, 0-based, i != j."""
        n = self.slack.shape[0]
        for i in range(n):
            for j in range(n):
                if i != j:
                    yield i, j, float(self.slack[i, j])


def validate_config(text: str) -> GameConfig:
    """Parse the ``game`` section of a config document into a GameConfig.

    The document is JSON; see config.py for the full experiment schema.
    Raises ConfigError naming the offending field.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config parse failure: {exc}") from exc
    if not isinstance(doc, dict) or "game" not in doc:
        raise ConfigError("config: missing 'game' section")
    return game_from_dict(doc["game"])


def game_from_dict(game: dict) -> GameConfig:
    for key in ("routes", "states", "prior", "coefficients"):
        if key not in game:
            raise ConfigError(f"game.{key}: missing")
    try:
        return GameConfig(
            n_routes=int(game["routes"]),
            states=tuple(str(s) for s in game["states"]),
            prior=np.asarray(game["prior"], dtype=float),
            coeffs=np.asarray(game["coefficients"], dtype=float),
            recommended_fraction=float(game.get("recommended_fraction", 1.0)),
        )
    except ConfigError as exc:
        raise ConfigError(f"game.{exc}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"game: {exc}") from None


def route_latencies(cfg: GameConfig, state: int | str, flows: np.ndarray) -> np.ndarray:
    """Per-route latency in minutes at the given flow vector, in one state."""
    w = cfg.state_index(state)
    f = np.asarray(flows, dtype=float)
    if f.shape != (cfg.n_routes,):
        raise ValueError(f"flows: expected {cfg.n_routes} entries, got shape {f.shape}")
    if np.any(f < 0):
        raise ValueError(f"flows: negative component {f.min()}")
    return _poly_eval(cfg.coeffs[:, w, :], f)


def _poly_eval(coeffs_by_degree: np.ndarray, f: np.ndarray) -> np.ndarray:
    """Evaluate sum_d coeffs[d] * f**d elementwise (Horner)."""
    acc = coeffs_by_degree[-1].copy()
    for d in range(coeffs_by_degree.shape[0] - 2, -1, -1):
        acc = acc * f + coeffs_by_degree[d]
    return acc


def latencies_at_policy(cfg: GameConfig, policy: SignalPolicy) -> np.ndarray:
    """Latency table L[w, i] = latency of route i at flow pi[w, i] (full obedience)."""
    _check_dims(cfg, policy)
    acc = np.broadcast_to(cfg.coeffs[-1], policy.pi.shape).copy()
    for d in range(cfg.degree - 1, -1, -1):
        acc = acc * policy.pi + cfg.coeffs[d]
    return acc


def social_cost(cfg: GameConfig, policy: SignalPolicy) -> float:
    """Prior-expected total travel time when everyone follows the policy."""
    lat = latencies_at_policy(cfg, policy)
    return float(np.einsum("w,wi,wi->", cfg.prior, policy.pi, lat))


def check_obedience(cfg: GameConfig, policy: SignalPolicy, tol: float = SIMPLEX_TOL) -> ObedienceReport:
    """Evaluate every ordered-pair obedience inequality at the policy's own flows."""
    if tol < 0:
        raise ValueError(f"tol must be nonnegative, got {tol}")
    lat = latencies_at_policy(cfg, policy)
    weighted = cfg.prior[:, None] * policy.pi  # mass recommended route i in state w
    cross = weighted.T @ lat  # cross[i, j] = E[time on j | recommended i] * mass
    slack = cross - np.diag(cross)[:, None]
    np.fill_diagonal(slack, 0.0)
    return ObedienceReport(slack=slack, tolerance=tol)


def _check_dims(cfg: GameConfig, policy: SignalPolicy) -> None:
    if policy.pi.shape != (cfg.n_states, cfg.n_routes):
        raise ValueError(
            f"policy shape {policy.pi.shape} does not match game "
            f"({cfg.n_states} states x {cfg.n_routes} routes)"
        )
