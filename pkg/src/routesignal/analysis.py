"""Hypothesis evaluation over session-log corpora.

H1: follow probability vs displayed rating (with an exclusion band where
the rating moves too fast for reliable per-rating statistics).
H2: convergence of terminal rating and cumulative follow frequency.
H3: convergence of the defection-matrix estimate across participants.
H4: displayed rating vs time-averaged aggregated regret, after filters.

Everything here is a pure function of the logs plus filter settings; the
per-round aggregated-regret series is reconstructed by replaying the logs
through the same keyed stores the engine uses.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .game import DefectionMatrix
from .protocol import (
    KeyedStores,
    RoundRecord,
    aggregated_regret,
    estimate_P,
    rating_tenths,
    record_round,
)

SUMMARY_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class RegressionResult:
    slope: float
    intercept: float
    r_squared: float
    n_points: int

    def predict(self, x: float) -> float:
        return self.slope * x + self.intercept


def linear_fit(points) -> RegressionResult:
    """Ordinary least squares through (x, y) pairs.

    R^2 = 1 - SS_res / SS_tot, defined as 0 when y has no variance.
    Raises on fewer than two distinct x values.
    """
    pts = [(float(x), float(y)) for x, y in points]
    if len(pts) < 2:
        raise ValueError(f"linear fit needs at least 2 points, got {len(pts)}")
    x = np.array([p[0] for p in pts])
    y = np.array([p[1] for p in pts])
    xm, ym = x.mean(), y.mean()
    sxx = float(((x - xm) ** 2).sum())
    if sxx == 0.0:
        raise ValueError("linear fit undefined: all x values equal (within precision)")
    slope = float(((x - xm) * (y - ym)).sum()) / sxx
    intercept = ym - slope * xm
    ss_tot = float(((y - ym) ** 2).sum())
    if ss_tot == 0.0:
        r_squared = 0.0
    else:
        resid = y - (slope * x + intercept)
        r_squared = 1.0 - float((resid**2).sum()) / ss_tot
    return RegressionResult(slope=slope, intercept=intercept, r_squared=r_squared, n_points=len(pts))


def as_sessions(logs) -> list[list[RoundRecord]]:
    """Coerce a BatchResult, SessionLogs, records, or nested lists to sessions."""
    if hasattr(logs, "logs"):  # BatchResult
        return [list(log.records) for log in logs.logs]
    logs = list(logs)
    if not logs:
        raise ValueError("empty log corpus")
    if hasattr(logs[0], "records"):  # SessionLog
        return [list(log.records) for log in logs]
    if isinstance(logs[0], RoundRecord):  # flat record list
        by_s: dict[int, list[RoundRecord]] = {}
        for rec in logs:
            by_s.setdefault(rec.s, []).append(rec)
        return [sorted(by_s[s], key=lambda r: r.k) for s in sorted(by_s)]
    return [list(session) for session in logs]


def follow_prob_by_rating(logs, exclusion_band=(2.6, 3.9)) -> dict[float, tuple[float, int]]:
    """Empirical follow frequency per quantized displayed rating.

    Ratings inside the (inclusive) exclusion band are discarded; returns
    {rating: (frequency, count)}. Raises when the band discards everything.
    """
    lo, hi = rating_tenths(exclusion_band[0]), rating_tenths(exclusion_band[1])
    follows: dict[int, int] = {}
    totals: dict[int, int] = {}
    for session in as_sessions(logs):
        for rec in session:
            t = rating_tenths(rec.rating_displayed)
            if lo <= t <= hi:
                continue
            totals[t] = totals.get(t, 0) + 1
            if rec.chosen == rec.recommended:
                follows[t] = follows.get(t, 0) + 1
    if not totals:
        raise ValueError("exclusion band discarded all data")
    return {
        t / 10.0: (follows.get(t, 0) / totals[t], totals[t]) for t in sorted(totals)
    }


def regret_series(logs) -> list[list[tuple[RoundRecord, float, float]]]:
    """Replay the corpus to recover (record, u_hat, m_hat) per round.

    Rebuilds the keyed stores exactly as the engine populated them, so the
    aggregated-regret series matches what a live session computed.
    """
    sessions = as_sessions(logs)
    n = len(sessions[0][0].flows)
    r_max = max(
        5.0,
        max(rec.rating_displayed for s in sessions for rec in s),
        max(rec.review for s in sessions for rec in s),
    )
    stores = KeyedStores(n_routes=n, r_max=r_max)
    out = []
    for session in sessions:
        u_hist: list[float] = []
        rows = []
        for rec in session:
            record_round(stores, rec)
            u_hat, m_hat = aggregated_regret(stores, rec.state, rec.rating_displayed, u_hist)
            u_hist.append(u_hat)
            rows.append((rec, u_hat, m_hat))
        out.append(rows)
    return out


def defection_series(logs, phat1: DefectionMatrix | None = None) -> list[DefectionMatrix]:
    """The defection estimate each participant played under, in order."""
    sessions = as_sessions(logs)
    n = len(sessions[0][0].flows)
    if phat1 is None:
        p = np.full((n, n), 1.0 / (n - 1) if n > 1 else 0.0)
        np.fill_diagonal(p, 0.0)
        phat1 = DefectionMatrix(p)
    counts = np.zeros((n, n), dtype=np.int64)
    series = [phat1]
    for session in sessions[:-1]:
        for rec in session:
            counts[rec.recommended - 1, rec.chosen - 1] += 1
        series.append(estimate_P(counts, previous=series[-1]))
    return series


@dataclass(frozen=True)
class HypothesisReport:
    participants: int
    h1: RegressionResult | None
    h1_table: dict
    h2_terminal_ratings: tuple[float, ...]
    h2_follow_frequency: tuple[float, ...]
    h3_series: dict[str, tuple[float, ...]]
    h4: RegressionResult | None
    h4_points: tuple[tuple[float, float], ...]
    h4_retained_fraction: float
    filters: dict
    notes: tuple[str, ...]


def hypothesis_report(
    logs,
    *,
    exclusion_band=(2.6, 3.9),
    min_rating: float = 4.0,
    min_regret: float = 2.6,
    phat1: DefectionMatrix | None = None,
) -> HypothesisReport:
    """All four hypothesis artifacts for a corpus of session logs.

    A hypothesis without enough surviving data is reported as None with a
    note, never as an error.
    """
    sessions = as_sessions(logs)
    notes: list[str] = []

    # H1
    h1 = None
    try:
        table = follow_prob_by_rating(sessions, exclusion_band)
    except ValueError as exc:
        table = {}
        notes.append(f"h1: insufficient data ({exc})")
    if table:
        freqs = {freq for freq, _ in table.values()}
        if len(table) < 2:
            notes.append("h1: insufficient data (single retained rating)")
        else:
            h1 = linear_fit([(r, fc[0]) for r, fc in table.items()])
            if len(freqs) == 1:
                notes.append(
                    f"h1: degenerate, follow frequency constant at {next(iter(freqs)):.3g}"
                )

    # H2
    terminal = tuple(s[-1].rating_displayed for s in sessions)
    cum_follow = []
    follows = total = 0
    for session in sessions:
        follows += sum(1 for r in session if r.chosen == r.recommended)
        total += len(session)
        cum_follow.append(follows / total)

    # H3
    series = defection_series(sessions, phat1)
    n = series[0].n_routes
    h3 = {
        f"p{i + 1}{j + 1}": tuple(float(m.p[i, j]) for m in series)
        for i in range(n)
        for j in range(n)
        if i != j
    }

    # H4
    pts = []
    total_rounds = 0
    for rows in regret_series(sessions):
        for rec, _, m_hat in rows:
            total_rounds += 1
            if rec.rating_displayed < min_rating or m_hat < min_regret:
                continue
            pts.append((m_hat, rec.rating_displayed))
    retained = len(pts) / total_rounds if total_rounds else 0.0
    h4 = None
    distinct_x = {p[0] for p in pts}
    if len(pts) >= 2 and len(distinct_x) >= 2:
        h4 = linear_fit(pts)
    else:
        notes.append(
            f"h4: insufficient data ({len(pts)} points, {len(distinct_x)} distinct regrets "
            f"after filters min_rating={min_rating}, min_regret={min_regret})"
        )

    return HypothesisReport(
        participants=len(sessions),
        h1=h1,
        h1_table=table,
        h2_terminal_ratings=terminal,
        h2_follow_frequency=tuple(cum_follow),
        h3_series=h3,
        h4=h4,
        h4_points=tuple(pts),
        h4_retained_fraction=retained,
        filters={
            "exclusion_band": tuple(exclusion_band),
            "min_rating": min_rating,
            "min_regret": min_regret,
        },
        notes=tuple(notes),
    )


def homogeneity_score(logs, s: int) -> float:
    """How closely participant s's conditional route choices match the pool.

    One minus the total-variation distance between the participant's
    (chosen | recommended) distribution and the pooled predecessors',
    averaged over recommendations weighted by the participant's exposure.
    The first participant scores 1 by definition.
    """
    sessions = as_sessions(logs)
    if not 1 <= s <= len(sessions):
        raise ValueError(f"participant {s} outside 1..{len(sessions)}")
    if s == 1:
        return 1.0
    n = len(sessions[0][0].flows)

    def cond_counts(recs) -> np.ndarray:
        c = np.zeros((n, n))
        for rec in recs:
            c[rec.recommended - 1, rec.chosen - 1] += 1
        return c

    own = cond_counts(sessions[s - 1])
    pool = cond_counts([r for sess in sessions[: s - 1] for r in sess])
    weights = []
    distances = []
    for i in range(n):
        if own[i].sum() == 0 or pool[i].sum() == 0:
            continue
        p_own = own[i] / own[i].sum()
        p_pool = pool[i] / pool[i].sum()
        weights.append(own[i].sum())
        distances.append(0.5 * float(np.abs(p_own - p_pool).sum()))
    if not weights:
        return 1.0
    w = np.asarray(weights)
    return 1.0 - float((w * np.asarray(distances)).sum() / w.sum())


# -- exports -----------------------------------------------------------------


def _fit_dict(fit: RegressionResult | None) -> dict | None:
    if fit is None:
        return None
    return {
        "slope": fit.slope,
        "intercept": fit.intercept,
        "r_squared": fit.r_squared,
        "n_points": fit.n_points,
    }


def export_report(report: HypothesisReport, out_dir) -> list[str]:
    """Write per-hypothesis CSV tables plus a versioned summary document."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    def table(name: str, header: list[str], rows) -> None:
        path = out / name
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows(rows)
        written.append(name)

    table(
        "h1_follow_by_rating.csv",
        ["rating", "follow_frequency", "count"],
        [[r, freq, count] for r, (freq, count) in report.h1_table.items()],
    )
    table(
        "h2_convergence.csv",
        ["participant", "terminal_rating", "cumulative_follow_frequency"],
        [
            [s + 1, report.h2_terminal_ratings[s], report.h2_follow_frequency[s]]
            for s in range(report.participants)
        ],
    )
    entries = sorted(report.h3_series)
    table(
        "h3_defection_estimate.csv",
        ["participant", *entries],
        [
            [s + 1, *[report.h3_series[e][s] for e in entries]]
            for s in range(report.participants)
        ],
    )
    table(
        "h4_regret_vs_rating.csv",
        ["m_hat", "rating"],
        [[m, r] for m, r in report.h4_points],
    )

    summary = {
        "schema": SUMMARY_SCHEMA_VERSION,
        "participants": report.participants,
        "filters": {
            "exclusion_band": list(report.filters["exclusion_band"]),
            "min_rating": report.filters["min_rating"],
            "min_regret": report.filters["min_regret"],
        },
        "h1": _fit_dict(report.h1),
        "h2": {
            "terminal_ratings": list(report.h2_terminal_ratings),
            "cumulative_follow_frequency": list(report.h2_follow_frequency),
        },
        "h3": {k: list(v) for k, v in report.h3_series.items()},
        "h4": _fit_dict(report.h4),
        "h4_retained_fraction": report.h4_retained_fraction,
        "notes": list(report.notes),
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=1) + "\n", encoding="utf-8")
    written.append("summary.json")
    return written
