import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from routesignal.analysis import (
    export_report,
    follow_prob_by_rating,
    homogeneity_score,
    hypothesis_report,
    linear_fit,
    regret_series,
)
from routesignal.agents import AlwaysFollowAgent, RatingProportionalAgent
from routesignal.protocol import run_batch


def synthetic_record(s, k, state, rating, recommended, chosen, travel_times, review=5.0):
    from routesignal.protocol import RoundRecord

    times = tuple(float(x) for x in travel_times)
    return RoundRecord(
        s=s, k=k, state=state, rating_displayed=rating,
        recommended=recommended, chosen=chosen,
        flows=(1.0 / len(times),) * len(times), travel_times=times,
        review=review, regret=times[recommended - 1] - min(times),
        t_start=float(k), t_end=float(k) + 0.5,
    )


class TestLinearFit:
    def test_perfect_line(self):
        fit = linear_fit([(1, 1), (2, 2), (3, 3)])
        assert fit.slope == pytest.approx(1.0, abs=1e-12)
        assert fit.intercept == pytest.approx(0.0, abs=1e-12)
        assert fit.r_squared == pytest.approx(1.0, abs=1e-12)

    def test_projection_formula(self):
        # predictor reported for the follow-vs-rating regression: at the
        # long-run rating 4.67 it projects 0.91
        from routesignal.analysis import RegressionResult

        fit = RegressionResult(slope=0.2397, intercept=-0.211, r_squared=1.0, n_points=2)
        assert round(fit.predict(4.67), 2) == 0.91

    def test_constant_y_convention(self):
        fit = linear_fit([(1, 2), (2, 2), (3, 2)])
        assert fit.slope == 0.0
        assert fit.r_squared == 0.0

    def test_degenerate_x_rejected(self):
        with pytest.raises(ValueError, match="x"):
            linear_fit([(1, 1), (1, 2)])

    def test_too_few_points(self):
        with pytest.raises(ValueError):
            linear_fit([(1, 1)])

    @given(
        pts=st.lists(
            st.tuples(
                st.integers(-100, 100).map(lambda v: v / 10.0),
                st.floats(-10, 10),
            ),
            min_size=3,
            max_size=12,
            unique_by=lambda p: p[0],
        ),
        seed=st.integers(0, 1000),
    )
    def test_permutation_invariance(self, pts, seed):
        rng = np.random.default_rng(seed)
        shuffled = list(pts)
        rng.shuffle(shuffled)
        a, b = linear_fit(pts), linear_fit(shuffled)
        assert a.slope == pytest.approx(b.slope, rel=1e-9, abs=1e-12)
        assert a.r_squared == pytest.approx(b.r_squared, rel=1e-9, abs=1e-12)

    def test_r_squared_invariant_under_affine_x_rescale(self):
        pts = [(1, 2.0), (2, 2.9), (3, 4.2), (4, 4.8)]
        scaled = [(3 * x + 7, y) for x, y in pts]
        assert linear_fit(pts).r_squared == pytest.approx(linear_fit(scaled).r_squared, abs=1e-12)


class TestFollowProbByRating:
    def test_always_follow_all_ones(self):
        recs = [
            synthetic_record(1, k, "w1", 4.5 if k % 2 else 2.0, 1, 1, [5, 6, 7])
            for k in range(1, 9)
        ]
        table = follow_prob_by_rating([recs])
        assert set(table) == {2.0, 4.5}
        assert all(freq == 1.0 for freq, _ in table.values())

    def test_band_excludes_rating(self):
        recs = [
            synthetic_record(1, 1, "w1", 3.0, 1, 1, [5, 6, 7]),
            synthetic_record(1, 2, "w1", 4.5, 1, 1, [5, 6, 7]),
        ]
        table = follow_prob_by_rating([recs])
        assert 3.0 not in table
        assert 4.5 in table

    def test_counting(self):
        recs = [
            synthetic_record(1, k, "w1", 4.5, 1, 1 if k <= 3 else 2, [5, 6, 7])
            for k in range(1, 5)
        ]
        table = follow_prob_by_rating([recs])
        assert table[4.5] == (pytest.approx(0.75), 4)

    def test_all_excluded_raises(self):
        recs = [synthetic_record(1, 1, "w1", 3.0, 1, 1, [5, 6, 7])]
        with pytest.raises(ValueError, match="discarded all"):
            follow_prob_by_rating([recs])


@pytest.fixture(scope="module")
def corpus(ref):
    return run_batch(ref, sessions=6, seed=0)


class TestHypothesisReport:

    def test_always_follow_is_flagged_degenerate(self, ref):
        res = run_batch(
            ref, sessions=2, seed=0,
            agent_factory=lambda s: AlwaysFollowAgent(seed=s, fixed_review=5.0),
        )
        report = hypothesis_report(res, phat1=ref.defection_prior)
        assert any("degenerate" in note for note in report.notes)

    def test_rating_proportional_gives_positive_slope(self, corpus, ref):
        report = hypothesis_report(corpus, phat1=ref.defection_prior)
        assert report.h1 is not None
        assert report.h1.slope > 0

    def test_series_lengths_match_participants(self, corpus, ref):
        report = hypothesis_report(corpus, phat1=ref.defection_prior)
        assert report.participants == 6
        assert len(report.h2_terminal_ratings) == 6
        assert len(report.h2_follow_frequency) == 6
        assert all(len(v) == 6 for v in report.h3_series.values())

    def test_h3_starts_at_configured_prior(self, corpus, ref):
        report = hypothesis_report(corpus, phat1=ref.defection_prior)
        assert report.h3_series["p13"][0] == 1.0
        assert report.h3_series["p31"][0] == 0.5

    def test_filters_reported_with_retained_fraction(self, corpus, ref):
        report = hypothesis_report(
            corpus, min_rating=4.0, min_regret=4.0, phat1=ref.defection_prior
        )
        assert report.filters["min_rating"] == 4.0
        assert report.filters["min_regret"] == 4.0
        assert 0.0 <= report.h4_retained_fraction <= 1.0

    def test_no_surviving_points_is_not_an_error(self, corpus, ref):
        report = hypothesis_report(
            corpus, min_rating=5.0, min_regret=99.0, phat1=ref.defection_prior
        )
        assert report.h4 is None
        assert any("insufficient" in note for note in report.notes)

    def test_pure_function_of_logs(self, corpus, ref):
        a = hypothesis_report(corpus, phat1=ref.defection_prior)
        b = hypothesis_report(corpus, phat1=ref.defection_prior)
        assert a == b


class TestRegretSeriesReplay:
    def test_replay_matches_live_session_series(self, ref):
        res = run_batch(ref, sessions=3, seed=4)
        replayed = regret_series(res)
        for log, rows in zip(res.logs, replayed):
            live_u = list(log.u_hats)
            live_m = list(log.m_hats)
            assert live_u == pytest.approx([u for _, u, _ in rows])
            assert live_m == pytest.approx([m for _, _, m in rows])


class TestHomogeneity:
    def test_identical_behavior_scores_one(self):
        sessions = [
            [synthetic_record(s, k, "w1", 4.5, 1, 1, [5, 6, 7]) for k in range(1, 11)]
            for s in (1, 2)
        ]
        assert homogeneity_score(sessions, 2) == pytest.approx(1.0)

    def test_opposite_behavior_scores_zero(self):
        first = [synthetic_record(1, k, "w1", 4.5, 1, 1, [5, 6, 7]) for k in range(1, 11)]
        second = [synthetic_record(2, k, "w1", 4.5, 1, 2, [5, 6, 7]) for k in range(1, 11)]
        assert homogeneity_score([first, second], 2) == pytest.approx(0.0)

    def test_first_participant_scores_one(self):
        sessions = [[synthetic_record(1, 1, "w1", 4.5, 1, 1, [5, 6, 7])]]
        assert homogeneity_score(sessions, 1) == 1.0

    def test_intermediate_value_against_direct_tv(self):
        # predecessors follow recommendation 1 always; participant follows
        # 3 of 4 times -> TV = 0.25, score 0.75
        first = [synthetic_record(1, k, "w1", 4.5, 1, 1, [5, 6, 7]) for k in range(1, 9)]
        second = [
            synthetic_record(2, k, "w1", 4.5, 1, 1 if k <= 3 else 2, [5, 6, 7])
            for k in range(1, 5)
        ]
        tv = 0.5 * (abs(0.75 - 1.0) + abs(0.25 - 0.0) + 0.0)
        assert homogeneity_score([first, second], 2) == pytest.approx(1.0 - tv)

    def test_unknown_participant(self):
        sessions = [[synthetic_record(1, 1, "w1", 4.5, 1, 1, [5, 6, 7])]]
        with pytest.raises(ValueError):
            homogeneity_score(sessions, 3)


class TestExport:
    def test_tables_and_summary(self, tmp_path, ref):
        res = run_batch(ref, sessions=3, seed=0)
        report = hypothesis_report(res, phat1=ref.defection_prior)
        written = export_report(report, tmp_path)
        assert "summary.json" in written
        for name in written:
            assert (tmp_path / name).exists()
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert summary["schema"] == 1
        assert summary["participants"] == 3
        assert summary["h1"] is None or "slope" in summary["h1"]
        h1_lines = (tmp_path / "h1_follow_by_rating.csv").read_text().splitlines()
        assert h1_lines[0] == "rating,follow_frequency,count"
