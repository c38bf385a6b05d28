"""Simulated participants.

Agents see what a human sees each round (recommendation, displayed rating,
per-state travel-time forecasts, and the empirical alternative-route
distribution); they return a 1-based route choice and afterwards a review
in [0, r_max]. Each agent is deterministic given its own seed.
"""

from __future__ import annotations

import numpy as np


class SimulatedAgent:
    """Base agent: reviews by a linear map of regret, subclasses pick the route.

    review = r_max * max(0, 1 - regret / review_scale), regret in minutes.
    A ``fixed_review`` overrides the map (e.g. an always-five reviewer).
    """

    def __init__(self, seed=0, r_max: float = 5.0, review_scale: float = 10.0,
                 fixed_review: float | None = None):
        self.rng = np.random.default_rng(seed)
        self.r_max = float(r_max)
        self.review_scale = float(review_scale)
        self.fixed_review = fixed_review

    def choose(self, view: dict) -> int:
        raise NotImplementedError

    def review(self, outcome: dict) -> float:
        if self.fixed_review is not None:
            return float(self.fixed_review)
        times = outcome["travel_times"]
        regret = times[outcome["recommended"] - 1] - min(times)
        return self.r_max * max(0.0, 1.0 - regret / self.review_scale)

    def _alternative(self, view: dict) -> int:
        """Route of a non-follower: the empirical alternative distribution,
        else uniform over the non-recommended routes."""
        probs = np.asarray(view["alternatives"], dtype=float)
        rec = view["recommended"]
        if probs.sum() > 0:
            return int(self.rng.choice(len(probs), p=probs / probs.sum())) + 1
        others = [i + 1 for i in range(len(probs)) if i + 1 != rec]
        if not others:
            return rec
        return int(self.rng.choice(others))


class RatingProportionalAgent(SimulatedAgent):
    """Follows with probability rating / r_max, the instructed behavior."""

    def choose(self, view: dict) -> int:
        if self.rng.random() < view["rating"] / self.r_max:
            return view["recommended"]
        return self._alternative(view)


class ThresholdAgent(SimulatedAgent):
    """Follows whenever the displayed rating clears a threshold."""

    def __init__(self, seed=0, threshold: float = 4.175, **kwargs):
        super().__init__(seed=seed, **kwargs)
        self.threshold = float(threshold)

    def choose(self, view: dict) -> int:
        if view["rating"] >= self.threshold:
            return view["recommended"]
        return self._alternative(view)


class AlwaysFollowAgent(SimulatedAgent):
    def choose(self, view: dict) -> int:
        return view["recommended"]


class UniformRandomAgent(SimulatedAgent):
    def choose(self, view: dict) -> int:
        return int(self.rng.integers(1, len(view["alternatives"]) + 1))


AGENT_CLASSES = {
    "rating_proportional": RatingProportionalAgent,
    "threshold": ThresholdAgent,
    "always_follow": AlwaysFollowAgent,
    "uniform_random": UniformRandomAgent,
}


def make_agent(kind: str, seed, *, r_max: float = 5.0, review_scale: float = 10.0,
               threshold: float = 4.175, fixed_review: float | None = None) -> SimulatedAgent:
    try:
        cls = AGENT_CLASSES[kind]
    except KeyError:
        raise ValueError(f"unknown agent kind {kind!r}; choose from {sorted(AGENT_CLASSES)}") from None
    kwargs = dict(seed=seed, r_max=r_max, review_scale=review_scale, fixed_review=fixed_review)
    if kind == "threshold":
        kwargs["threshold"] = threshold
    return cls(**kwargs)
