"""The experiment engine: keyed stores, ratings, forecasts, and sessions.

One participant at a time plays a fixed number of rounds. Each round the
engine forecasts travel times from the displayed rating and the estimated
defection matrix, samples a recommendation, collects the participant's
choice and review, and folds the review into the rating shown next round.
Reviews and regrets pool across participants under (state, quantized
rating) keys, which simulates many participants acting simultaneously.

Routes are numbered 1..n throughout this module, matching the serialized
record schema.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .agents import SimulatedAgent
from .game import DefectionMatrix, GameConfig, SignalPolicy, route_latencies


class SessionAborted(RuntimeError):
    """Persistence failed mid-session; ``last_durable`` is the last stored round."""

    def __init__(self, message: str, last_durable: int):
        super().__init__(message)
        self.last_durable = last_durable


def rating_tenths(r: float) -> int:
    """Rating as an integer count of tenths, ties rounded half away from zero."""
    return int(math.floor(r * 10.0 + 0.5))


def quantize_rating(r: float, r_max: float = 5.0) -> float:
    """Nearest multiple of 0.1; ties round half away from zero."""
    if not 0.0 <= r <= r_max:
        raise ValueError(f"rating {r} outside [0, {r_max}]")
    return rating_tenths(r) / 10.0


def instantaneous_regret(latencies, recommended: int) -> float:
    """Recommended route's realized time minus the round's best time (minutes)."""
    lat = np.asarray(latencies, dtype=float)
    if lat.size == 0:
        raise ValueError("empty latency vector")
    if not 1 <= recommended <= lat.size:
        raise ValueError(f"recommended route {recommended} outside 1..{lat.size}")
    return float(lat[recommended - 1] - lat.min())


def update_rating(r: float, k: int, mean_review: float, r_max: float = 5.0) -> float:
    """Next displayed rating: round-count-weighted average of rating and reviews."""
    if k < 1:
        raise ValueError(f"round index must be >= 1, got {k}")
    if not 0.0 <= r <= r_max:
        raise ValueError(f"rating {r} outside [0, {r_max}]")
    if not 0.0 <= mean_review <= r_max:
        raise ValueError(f"mean review {mean_review} outside [0, {r_max}]")
    return (k / (k + 1)) * r + (1 / (k + 1)) * mean_review


@dataclass(frozen=True)
class Forecast:
    flows: np.ndarray
    travel_times: np.ndarray


def forecast_flows(
    cfg: GameConfig,
    state: int | str,
    r: float,
    policy: SignalPolicy,
    phat: DefectionMatrix,
    r_max: float = 5.0,
) -> Forecast:
    """Forecast link flows and travel times for one state at rating r.

    A rating-proportional share of agents follows the recommendation; the
    rest reroute through the estimated defection matrix. The revealed
    "actual" times of a round are exactly this forecast at the realized
    state.
    """
    if not 0.0 <= r <= r_max:
        raise ValueError(f"rating {r} outside [0, {r_max}]")
    w = cfg.state_index(state)
    pi_w = policy.pi[w]
    share = r / r_max
    flows = pi_w * share + (phat.effective().T @ pi_w) * (1.0 - share)
    return Forecast(flows=flows, travel_times=route_latencies(cfg, w, flows))


def estimate_P(counts: np.ndarray, previous: DefectionMatrix) -> DefectionMatrix:
    """Defection-matrix estimate from the choice-count table.

    Off-diagonal rows normalize over observed defections; a row with no
    defections at all keeps the previous participant's row (the estimator
    is undefined at a zero denominator). Diagonal counts (follow events)
    never enter.
    """
    counts = np.asarray(counts, dtype=float)
    n = previous.n_routes
    if counts.shape != (n, n):
        raise ValueError(f"counts shape {counts.shape}, expected {(n, n)}")
    out = np.zeros((n, n))
    for i in range(n):
        row = counts[i].copy()
        row[i] = 0.0
        total = row.sum()
        if total > 0:
            out[i] = row / total
        else:
            out[i] = previous.p[i]
    return DefectionMatrix(out)


@dataclass(frozen=True)
class RoundRecord:
    """One participant round, exactly as serialized in session logs."""

    s: int
    k: int
    state: str
    rating_displayed: float
    recommended: int
    chosen: int
    flows: tuple[float, ...]
    travel_times: tuple[float, ...]
    review: float
    regret: float
    t_start: float
    t_end: float

    def validate(self, n_routes: int, r_max: float) -> None:
        if self.s < 1 or self.k < 1:
            raise ValueError(f"participant/round indices must be >= 1, got s={self.s} k={self.k}")
        if not 0.0 <= self.rating_displayed <= r_max:
            raise ValueError(f"rating_displayed {self.rating_displayed} outside [0, {r_max}]")
        for name, route in (("recommended", self.recommended), ("chosen", self.chosen)):
            if not 1 <= route <= n_routes:
                raise ValueError(f"{name} route {route} outside 1..{n_routes}")
        if len(self.flows) != n_routes or len(self.travel_times) != n_routes:
            raise ValueError("flows/travel_times length does not match route count")
        if not 0.0 <= self.review <= r_max:
            raise ValueError(f"review {self.review} outside [0, {r_max}]")
        expected = self.travel_times[self.recommended - 1] - min(self.travel_times)
        if abs(self.regret - expected) > 1e-9:
            raise ValueError(f"regret {self.regret} inconsistent with travel times ({expected})")


def _empty_counts(n: int) -> np.ndarray:
    return np.zeros((n, n), dtype=np.int64)


@dataclass
class KeyedStores:
    """Pooled reviews, regrets, and choice counts across participants.

    Reviews and regrets are keyed by (state, displayed-rating tenths); the
    choice-count table indexes recommended x chosen with the diagonal
    holding follow events (kept for follow-rate analytics, ignored by the
    defection estimator).
    """

    n_routes: int
    r_max: float = 5.0
    reviews: dict = field(default_factory=dict)
    regrets: dict = field(default_factory=dict)
    choice_counts: np.ndarray = None

    def __post_init__(self):
        if self.choice_counts is None:
            self.choice_counts = _empty_counts(self.n_routes)
        else:
            self.choice_counts = np.asarray(self.choice_counts, dtype=np.int64)

    def key(self, state: str, rating: float) -> tuple[str, int]:
        return (state, rating_tenths(rating))

    def mean_review(self, state: str, rating: float) -> float:
        values = self.reviews.get(self.key(state, rating))
        if not values:
            raise KeyError(f"no reviews stored under {(state, rating)}")
        return sum(values) / len(values)

    def mean_regret(self, state: str, rating: float) -> float:
        values = self.regrets.get(self.key(state, rating))
        if not values:
            raise KeyError(f"no regrets stored under {(state, rating)}")
        return sum(values) / len(values)


def record_round(stores: KeyedStores, rec: RoundRecord) -> KeyedStores:
    """Fold one validated round into the stores (mutates and returns them)."""
    rec.validate(stores.n_routes, stores.r_max)
    key = stores.key(rec.state, rec.rating_displayed)
    stores.reviews.setdefault(key, []).append(rec.review)
    stores.regrets.setdefault(key, []).append(rec.regret)
    stores.choice_counts[rec.recommended - 1, rec.chosen - 1] += 1
    return stores


def aggregated_regret(stores: KeyedStores, state: str, rating: float, prior_u) -> tuple[float, float]:
    """Keyed mean regret of the current round and its session running mean.

    ``prior_u`` holds the session's earlier keyed means; the round's own
    record must already be in the stores.
    """
    try:
        u_hat = stores.mean_regret(state, rating)
    except KeyError:
        raise ValueError(
            f"aggregated regret requested before any record under {(state, rating)}"
        ) from None
    m_hat = (sum(prior_u) + u_hat) / (len(prior_u) + 1)
    return u_hat, m_hat


class _SimClock:
    """Deterministic stand-in for wall time; one tick per call."""

    def __init__(self):
        self.t = 0.0

    def __call__(self) -> float:
        self.t += 1.0
        return self.t


@dataclass(frozen=True)
class SessionLog:
    participant: int
    records: tuple[RoundRecord, ...]
    final_rating: float
    u_hats: tuple[float, ...]
    m_hats: tuple[float, ...]

    @property
    def rounds(self) -> int:
        return len(self.records)

    @property
    def follow_count(self) -> int:
        return sum(1 for r in self.records if r.chosen == r.recommended)

    @property
    def terminal_rating(self) -> float:
        return self.records[-1].rating_displayed


def run_session(
    cfg: GameConfig,
    policy: SignalPolicy,
    phat: DefectionMatrix,
    agent: SimulatedAgent,
    stores: KeyedStores,
    state_seq,
    *,
    participant: int = 1,
    r1: float = 2.5,
    r_max: float = 5.0,
    rounds: int | None = None,
    seed=0,
    review_default: float | None = None,
    sink=None,
    clock=None,
) -> SessionLog:
    """Run one participant session against shared stores.

    The defection estimate is frozen for the whole session. Every round is
    appended through ``sink`` before the session advances; a sink failure
    aborts with the last durable round noted. Deterministic given the
    recommendation seed and the agent's own seed.
    """
    rounds = len(state_seq) if rounds is None else rounds
    if rounds < 1:
        raise ValueError("session needs at least one round")
    if len(state_seq) < rounds:
        raise ValueError(f"state sequence has {len(state_seq)} entries, need {rounds}")
    if not 0.0 <= r1 <= r_max:
        raise ValueError(f"initial rating {r1} outside [0, {r_max}]")
    rng = np.random.default_rng(seed)
    clock = clock if clock is not None else _SimClock()
    n = cfg.n_routes
    p_eff = phat.effective()
    prior = [float(x) for x in cfg.prior]

    r = float(r1)
    records: list[RoundRecord] = []
    u_hats: list[float] = []
    m_hats: list[float] = []

    for k in range(1, rounds + 1):
        state = cfg.states[cfg.state_index(state_seq[k - 1])]
        t_start = float(clock())
        displayed = quantize_rating(r, r_max)
        share = r / r_max
        flows_all = policy.pi * share + (policy.pi @ p_eff) * (1.0 - share)
        times_all = _latency_table(cfg, flows_all)
        w = cfg.state_index(state)

        recommended = int(rng.choice(n, p=policy.pi[w])) + 1
        view = {
            "k": k,
            "rounds": rounds,
            "state_count": cfg.n_states,
            "recommended": recommended,
            "rating": displayed,
            "forecasts": {cfg.states[v]: [float(x) for x in times_all[v]] for v in range(cfg.n_states)},
            "prior": prior,
            "alternatives": [float(x) for x in phat.p[recommended - 1]],
            "review_default": review_default if review_default is not None else r_max,
        }
        chosen = int(agent.choose(view))
        if not 1 <= chosen <= n:
            raise ValueError(f"agent chose route {chosen} outside 1..{n}")

        times = times_all[w]
        review = float(
            agent.review(
                {
                    "travel_times": [float(x) for x in times],
                    "recommended": recommended,
                    "chosen": chosen,
                }
            )
        )
        if not 0.0 <= review <= r_max:
            raise ValueError(f"agent review {review} outside [0, {r_max}]")
        regret = instantaneous_regret(times, recommended)
        t_end = float(clock())

        rec = RoundRecord(
            s=participant,
            k=k,
            state=state,
            rating_displayed=displayed,
            recommended=recommended,
            chosen=chosen,
            flows=tuple(float(x) for x in flows_all[w]),
            travel_times=tuple(float(x) for x in times),
            review=review,
            regret=regret,
            t_start=t_start,
            t_end=t_end,
        )
        record_round(stores, rec)
        if sink is not None:
            try:
                sink(rec)
            except Exception as exc:
                raise SessionAborted(
                    f"persistence failed at round {k}: {exc}", last_durable=k - 1
                ) from exc

        u_hat, m_hat = aggregated_regret(stores, state, displayed, u_hats)
        u_hats.append(u_hat)
        m_hats.append(m_hat)
        r = update_rating(r, k, stores.mean_review(state, displayed), r_max)
        records.append(rec)

    return SessionLog(
        participant=participant,
        records=tuple(records),
        final_rating=r,
        u_hats=tuple(u_hats),
        m_hats=tuple(m_hats),
    )


def _latency_table(cfg: GameConfig, flows_by_state: np.ndarray) -> np.ndarray:
    acc = cfg.coeffs[-1].copy()
    for d in range(cfg.degree - 1, -1, -1):
        acc = acc * flows_by_state + cfg.coeffs[d]
    return acc


@dataclass(frozen=True)
class BatchResult:
    logs: tuple[SessionLog, ...]
    stores: KeyedStores
    phat_series: tuple[DefectionMatrix, ...]  # the estimate each participant played under

    @property
    def cumulative_follow_frequency(self) -> float:
        follows = sum(log.follow_count for log in self.logs)
        total = sum(log.rounds for log in self.logs)
        return follows / total


def run_batch(exp, *, sessions: int | None = None, seed: int = 0, agent_factory=None,
              sink_factory=None, clock_factory=None) -> BatchResult:
    """Run consecutive participant sessions, re-estimating P between them.

    ``exp`` is an ExperimentConfig; ``agent_factory(participant)`` may
    override the configured simulated agent, ``sink_factory(participant)``
    provides a durable append callable per session.
    """
    from .agents import make_agent

    sessions = exp.sessions if sessions is None else sessions
    stores = KeyedStores(n_routes=exp.game.n_routes, r_max=exp.rating_max)
    phat = exp.defection_prior
    state_seq = exp.resolve_state_sequence()
    logs: list[SessionLog] = []
    series: list[DefectionMatrix] = []

    for s in range(1, sessions + 1):
        if agent_factory is not None:
            agent = agent_factory(s)
        else:
            agent = make_agent(
                exp.agent_kind,
                seed=[seed, s, 1],
                r_max=exp.rating_max,
                review_scale=exp.review_scale,
                threshold=exp.agent_threshold,
            )
        series.append(phat)
        log = run_session(
            exp.game,
            exp.policy,
            phat,
            agent,
            stores,
            state_seq,
            participant=s,
            r1=exp.rating_initial,
            r_max=exp.rating_max,
            rounds=exp.rounds,
            seed=[seed, s, 0],
            review_default=exp.review_default,
            sink=sink_factory(s) if sink_factory is not None else None,
            clock=clock_factory() if clock_factory is not None else None,
        )
        logs.append(log)
        phat = estimate_P(stores.choice_counts, previous=phat)

    return BatchResult(logs=tuple(logs), stores=stores, phat_series=tuple(series))
