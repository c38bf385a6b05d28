"""Acceptance suite: one test per release criterion, at the stated tolerances.

Run with `pytest tests/test_acceptance.py -v -s` to see one pass/fail line
per criterion (the -s flag lets the lines through pytest's capture).
"""

import time

import numpy as np
import pytest

from routesignal import backend
from routesignal.analysis import hypothesis_report, linear_fit
from routesignal.config import reference_config
from routesignal.dynamics import (
    induced_flow,
    m_max_lower_bound,
    sample_states,
    simulate_dynamics,
)
from routesignal.equilibrium import bayes_wardrop, design_signal
from routesignal.game import DefectionMatrix, check_obedience, social_cost
from routesignal.protocol import (
    estimate_P,
    forecast_flows,
    instantaneous_regret,
    run_batch,
    update_rating,
)
from routesignal.storage import dumps_record


class Criterion:
    def __init__(self, name: str):
        self.name = name
        self.failures: list[str] = []

    def check(self, ok: bool, message: str) -> None:
        if not ok:
            self.failures.append(message)

    def finish(self) -> None:
        status = "PASS" if not self.failures else "FAIL"
        detail = "" if not self.failures else f"  [{'; '.join(self.failures)}]"
        print(f"[acceptance] {status}: {self.name}{detail}")
        assert not self.failures, f"{self.name}: {self.failures}"


@pytest.fixture(scope="module")
def exp():
    return reference_config()


def test_obedience_of_reference_policy(exp):
    c = Criterion("obedience: all 6 slacks of the reference policy >= -1e-9, < 0.1 s")
    t0 = time.perf_counter()
    report = check_obedience(exp.game, exp.policy, tol=1e-9)
    elapsed = time.perf_counter() - t0
    slacks = [s for _, _, s in report.pairs()]
    c.check(len(slacks) == 6, f"expected 6 ordered pairs, got {len(slacks)}")
    for i, j, s in report.pairs():
        c.check(s >= -1e-9, f"slack({i + 1}->{j + 1}) = {s}")
    c.check(report.obedient, "report not marked obedient")
    c.check(elapsed < 0.1, f"took {elapsed:.3f}s")
    c.finish()


def test_social_cost_improvement_over_wardrop(exp):
    c = Criterion("social cost: policy cost / Wardrop cost in [0.84, 0.90], < 1 s")
    t0 = time.perf_counter()
    cost = social_cost(exp.game, exp.policy)
    wardrop = bayes_wardrop(exp.game, tol=1e-9)
    elapsed = time.perf_counter() - t0
    ratio = cost / wardrop.expected_cost
    c.check(0.84 <= ratio <= 0.90, f"ratio {ratio:.6f} outside [0.84, 0.90]")
    c.check(elapsed < 1.0, f"took {elapsed:.3f}s")
    c.finish()


def test_design_matches_reference_policy(exp):
    c = Criterion("design: 32 restarts find an obedient policy within 1e-3 of the "
                  "reference cost, < 30 s")
    target = social_cost(exp.game, exp.policy)
    t0 = time.perf_counter()
    result = design_signal(exp.game, restarts=32, feas_tol=1e-8, seed=0)
    elapsed = time.perf_counter() - t0
    c.check(result.obedience_report.obedient, "designed policy not obedient")
    c.check(result.cost <= target + 1e-3, f"cost {result.cost:.6f} > {target:.6f} + 1e-3")
    c.check(elapsed < 30.0, f"took {elapsed:.1f}s")
    c.finish()


def test_convergence_of_regret_dynamics(exp):
    c = Criterion("convergence: mean theta over final 1e4 of 1e5 rounds < 0.05 "
                  "for m1 in {-84, 0, 84} x 3 seeds, < 10 s total")
    m_max = 84.0
    t0 = time.perf_counter()
    for m1 in (-84.0, 0.0, 84.0):
        for seed in (0, 1, 2):
            seq = sample_states(exp.game, 100_000, seed=seed)
            traj = simulate_dynamics(
                exp.game, exp.policy, exp.defection_prior, m1=m1, m_max=m_max, state_seq=seq
            )
            tail = traj.mean_theta(10_000)
            c.check(tail < 0.05, f"m1={m1} seed={seed}: tail theta {tail:.4f}")
    elapsed = time.perf_counter() - t0
    c.check(elapsed < 10.0, f"took {elapsed:.1f}s total (backend {backend.BACKEND})")
    c.finish()


def test_exact_algebra_suite(exp):
    c = Criterion("exact algebra: identities, nonnegativity, estimator shape, "
                  "noiseless regression, coefficient bound")
    pi_row = exp.policy.pi[0]
    f0 = induced_flow(pi_row, exp.defection_prior, 0.0)
    c.check(np.array_equal(f0, pi_row), "induced flow at theta=0 is not the policy row")

    fc = forecast_flows(exp.game, "w1", exp.rating_max, exp.policy, exp.defection_prior,
                        exp.rating_max)
    c.check(np.allclose(fc.flows, pi_row, atol=1e-15), "forecast at full rating is not the policy row")

    c.check(update_rating(2.5, 1, 5.0) == pytest.approx(3.75, abs=1e-15),
            "first rating update != 3.75")

    rng = np.random.default_rng(123)
    for _ in range(10_000):
        lat = rng.uniform(0.0, 60.0, size=3)
        j = int(rng.integers(1, 4))
        if instantaneous_regret(lat, j) < 0:
            c.check(False, f"negative regret at {lat}, j={j}")
            break

    counts = rng.integers(0, 25, size=(3, 3))
    est = estimate_P(counts, previous=exp.defection_prior)
    c.check(np.allclose(np.diag(est.p), 0.0), "estimator diagonal not zero")
    c.check(np.allclose(est.p.sum(axis=1), 1.0, atol=1e-12), "estimator rows not stochastic")

    fit = linear_fit([(x, 0.3 * x - 1.2) for x in range(1, 8)])
    c.check(abs(fit.r_squared - 1.0) <= 1e-9, f"noiseless R^2 = {fit.r_squared}")

    bound = m_max_lower_bound(exp.game)
    c.check(bound == pytest.approx(84.0, abs=1e-12), f"coefficient bound {bound} != 84")
    c.finish()


def test_protocol_replication_at_reference_scale(exp):
    c = Criterion("protocol: 33 sessions x 100 rounds -> terminal rating >= 4.0, "
                  "follow frequency >= 0.8, positive follow-vs-rating slope, < 10 s")
    t0 = time.perf_counter()
    result = run_batch(exp, seed=0)
    elapsed = time.perf_counter() - t0
    terminal = result.logs[-1].terminal_rating
    follow = result.cumulative_follow_frequency
    report = hypothesis_report(result, phat1=exp.defection_prior)
    c.check(terminal >= 4.0, f"terminal displayed rating {terminal}")
    c.check(follow >= 0.8, f"cumulative follow frequency {follow:.4f}")
    c.check(report.h1 is not None and report.h1.slope > 0,
            f"follow-vs-rating slope {report.h1.slope if report.h1 else None}")
    c.check(elapsed < 10.0, f"took {elapsed:.1f}s")
    c.finish()


def test_projection_formula():
    c = Criterion("projection: 0.2397 * 4.67 - 0.211 rounds to 0.91")
    from routesignal.analysis import RegressionResult

    fit = RegressionResult(slope=0.2397, intercept=-0.211, r_squared=1.0, n_points=2)
    c.check(round(fit.predict(4.67), 2) == 0.91, f"projected {fit.predict(4.67):.6f}")
    c.finish()


def test_determinism_of_logs_and_trajectories(exp):
    c = Criterion("determinism: identical config + seeds give bit-identical "
                  "session logs and trajectories")

    def batch_bytes() -> bytes:
        result = run_batch(exp, seed=0)
        lines = [dumps_record(rec) for log in result.logs for rec in log.records]
        return "\n".join(lines).encode()

    c.check(batch_bytes() == batch_bytes(), "session logs differ across runs")

    def trajectory_bytes() -> bytes:
        import io

        seq = sample_states(exp.game, 100_000, seed=7)
        traj = simulate_dynamics(exp.game, exp.policy, exp.defection_prior,
                                 m1=0.0, m_max=84.0, state_seq=seq)
        buf = io.StringIO()
        traj.export_jsonl(buf)
        return buf.getvalue().encode()

    c.check(trajectory_bytes() == trajectory_bytes(), "trajectories differ across runs")
    c.finish()
