"""Experiment config documents: parsing, validation, and the reference setup.

One JSON document describes a whole experiment: the game, the signal
policy, the initial defection-matrix estimate, rating parameters, round
and session counts, the fixed state sequence (or a sampling seed), and
simulated-agent settings.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .game import ConfigError, DefectionMatrix, GameConfig, SignalPolicy, game_from_dict

SCHEMA_VERSION = 1

AGENT_KINDS = ("rating_proportional", "threshold", "always_follow", "uniform_random")


@dataclass(frozen=True)
class ExperimentConfig:
    game: GameConfig
    policy: SignalPolicy
    defection_prior: DefectionMatrix
    rating_initial: float
    rating_max: float
    review_default: float
    rounds: int
    sessions: int
    state_sequence: tuple[str, ...] | None
    state_seed: int | None
    agent_kind: str
    agent_threshold: float
    review_scale: float

    def resolve_state_sequence(self, rounds: int | None = None, seed: int | None = None) -> tuple[str, ...]:
        """The per-round state sequence: fixed if configured, else i.i.d. from the prior."""
        k = rounds if rounds is not None else self.rounds
        if self.state_sequence is not None and rounds is None:
            return self.state_sequence
        if self.state_sequence is not None:
            seq = self.state_sequence
            if len(seq) >= k:
                return seq[:k]
            reps = -(-k // len(seq))
            return (seq * reps)[:k]
        entropy = seed if seed is not None else self.state_seed
        rng = np.random.default_rng(entropy)
        idx = rng.choice(self.game.n_states, size=k, p=self.game.prior)
        return tuple(self.game.states[i] for i in idx)


def load_experiment(text: str) -> ExperimentConfig:
    """Parse and validate a full experiment document (JSON text)."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config parse failure: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config: top level must be an object")
    schema = doc.get("schema", SCHEMA_VERSION)
    if schema != SCHEMA_VERSION:
        raise ConfigError(f"schema: unsupported version {schema}")
    for key in ("game", "policy"):
        if key not in doc:
            raise ConfigError(f"{key}: missing")

    game = game_from_dict(doc["game"])
    try:
        policy = SignalPolicy(np.asarray(doc["policy"], dtype=float))
    except (ConfigError, ValueError) as exc:
        raise ConfigError(f"policy: {exc}") from None
    if policy.pi.shape != (game.n_states, game.n_routes):
        raise ConfigError(
            f"policy: shape {policy.pi.shape} does not match game "
            f"({game.n_states} x {game.n_routes})"
        )

    defection = doc.get("defection_prior")
    if defection is None:
        # uniform over alternatives when nothing better is known
        n = game.n_routes
        p = np.full((n, n), 1.0 / (n - 1) if n > 1 else 0.0)
        np.fill_diagonal(p, 0.0)
        phat = DefectionMatrix(p)
    else:
        try:
            phat = DefectionMatrix(np.asarray(defection, dtype=float))
        except (ConfigError, ValueError) as exc:
            raise ConfigError(f"defection_prior: {exc}") from None
        if phat.n_routes != game.n_routes:
            raise ConfigError(
                f"defection_prior: {phat.n_routes} routes, game has {game.n_routes}"
            )

    rating = doc.get("rating", {})
    rating_max = float(rating.get("max", 5.0))
    rating_initial = float(rating.get("initial", rating_max / 2.0))
    review_default = float(rating.get("review_default", rating_max))
    if rating_max <= 0:
        raise ConfigError(f"rating.max: must be positive, got {rating_max}")
    if not 0.0 <= rating_initial <= rating_max:
        raise ConfigError(f"rating.initial: {rating_initial} outside [0, {rating_max}]")
    if not 0.0 <= review_default <= rating_max:
        raise ConfigError(f"rating.review_default: {review_default} outside [0, {rating_max}]")

    protocol = doc.get("protocol", {})
    rounds = int(protocol.get("rounds", 100))
    sessions = int(protocol.get("sessions", 1))
    if rounds < 1:
        raise ConfigError(f"protocol.rounds: must be positive, got {rounds}")
    if sessions < 1:
        raise ConfigError(f"protocol.sessions: must be positive, got {sessions}")

    state_sequence = protocol.get("state_sequence")
    state_seed = protocol.get("state_seed")
    if state_sequence is not None:
        state_sequence = tuple(str(s) for s in state_sequence)
        unknown = set(state_sequence) - set(game.states)
        if unknown:
            raise ConfigError(f"protocol.state_sequence: unknown states {sorted(unknown)}")
        if len(state_sequence) < rounds:
            raise ConfigError(
                f"protocol.state_sequence: {len(state_sequence)} entries "
                f"shorter than rounds={rounds}"
            )
    elif state_seed is None:
        state_seed = 0

    agent = doc.get("agent", {})
    agent_kind = str(agent.get("kind", "rating_proportional"))
    if agent_kind not in AGENT_KINDS:
        raise ConfigError(f"agent.kind: {agent_kind!r} not one of {AGENT_KINDS}")
    agent_threshold = float(agent.get("threshold", 4.175))
    review_scale = float(agent.get("review_scale", 10.0))
    if review_scale <= 0:
        raise ConfigError(f"agent.review_scale: must be positive, got {review_scale}")

    return ExperimentConfig(
        game=game,
        policy=policy,
        defection_prior=phat,
        rating_initial=rating_initial,
        rating_max=rating_max,
        review_default=review_default,
        rounds=rounds,
        sessions=sessions,
        state_sequence=state_sequence,
        state_seed=None if state_sequence is not None else int(state_seed),
        agent_kind=agent_kind,
        agent_threshold=agent_threshold,
        review_scale=review_scale,
    )


def load_experiment_file(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return load_experiment(fh.read())


def reference_text() -> str:
    """Raw JSON text of the shipped reference configuration."""
    return resources.files("routesignal.data").joinpath("reference.json").read_text()


def reference_config() -> ExperimentConfig:
    """The shipped reference experiment (3 routes, 5 states, 33 x 100 rounds)."""
    return load_experiment(reference_text())
