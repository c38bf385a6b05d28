"""Live session service: one participant at a time over a durable lineage.

A lineage directory holds the store snapshot, one session log per
participant, and survey answers. The service enforces the sequential
protocol (one active session, strict choice -> review phase order) and
appends every round durably before responding. JSON over plain HTTP; the
frontend is served as static files from the same origin.
"""

from __future__ import annotations

import json
import threading
import time
import uuid
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .protocol import (
    KeyedStores,
    RoundRecord,
    aggregated_regret,
    estimate_P,
    instantaneous_regret,
    quantize_rating,
    record_round,
    update_rating,
)
from .storage import LogWriter, load_stores, save_stores

PHASE_CHOICE = "awaiting-choice"
PHASE_REVIEW = "awaiting-review"
PHASE_FINISHED = "finished"

SURVEY_QUESTIONS = (
    {"id": 1, "kind": "scale", "text": "On the scale of 1 to 5 (with 5 being the highest), how did you feel you understood what was happening in each scenario, what you were doing and what you needed to do next?"},
    {"id": 2, "kind": "scale", "text": "On the scale of 1 to 5 (with 5 being the highest), how often did you check the average star rating before making route choice decisions?"},
    {"id": 3, "kind": "scale", "text": "When you indeed checked the average star rating, on the scale of 1 to 5 (with 5 being the highest), how much did the average star rating affect your route choice decisions?"},
    {"id": 4, "kind": "scale", "text": "On the scale of 1 to 5 (with 5 being the highest), how often did you check the histograms before making route choice decisions?"},
    {"id": 5, "kind": "scale", "text": "When you indeed checked the histograms, on the scale of 1 to 5 (with 5 being the highest), how much did the histograms affect your route choice decisions?"},
    {
        "id": 6,
        "kind": "choice",
        "text": "How did you make your route choice decisions?",
        "options": {
            "a": "Study the average star rating, histograms as well as the recommendations to come up with a decision.",
            "b": "Follow the recommendations as long as the average star rating is above certain value.",
            "c": "Always follow the recommendations.",
            "d": "Make random choices.",
        },
    },
    {"id": 7, "kind": "number", "text": "If you choose (b) in question 6, what was the threshold value?", "requires": {"question": 6, "answer": "b"}},
    {"id": 8, "kind": "text", "text": "What did you like (if any) or dislike (if any) about the experiment interface?"},
    {"id": 9, "kind": "text", "text": "Any other comments you might have"},
)


class ServiceError(Exception):
    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status


class _ActiveSession:
    def __init__(self, session_id: str, participant: int, log_path: Path):
        self.id = session_id
        self.participant = participant
        self.k = 1
        self.phase = PHASE_CHOICE
        self.rng = None  # recommendation sampling, seeded by the service
        self.rating = 0.0  # internal, unquantized; set by the service
        self.u_hats: list[float] = []
        self.reviews: list[float] = []
        self.follow_count = 0
        self.state = ""
        self.recommended = 0
        self.chosen = 0
        self.forecast_times: dict[str, list[float]] = {}
        self.forecast_flows: dict[str, list[float]] = {}
        self.t_start = 0.0
        self.writer = LogWriter(log_path)


class ExperimentService:
    """State machine over one store lineage; thread-safe via one lock."""

    def __init__(self, exp: ExperimentConfig, lineage_dir, seed: int = 0, clock=time.time):
        self.exp = exp
        self.dir = Path(lineage_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.seed = seed
        self.clock = clock
        self.lock = threading.Lock()
        snapshot = self.dir / "stores.json"
        if snapshot.exists():
            self.stores, self.phat, self.completed = load_stores(snapshot)
        else:
            self.stores = KeyedStores(n_routes=exp.game.n_routes, r_max=exp.rating_max)
            self.phat = exp.defection_prior
            self.completed = 0
        self.session: _ActiveSession | None = None
        self.state_seq = exp.resolve_state_sequence()

    # -- state machine ------------------------------------------------------

    def create_session(self) -> dict:
        with self.lock:
            if self.session is not None and self.session.phase != PHASE_FINISHED:
                raise ServiceError(409, "another session is active on this lineage")
            participant = self.completed + 1
            log_path = self.dir / f"session_{participant:03d}.jsonl"
            if log_path.exists():
                # an earlier attempt was abandoned mid-session; set it aside
                log_path.rename(log_path.with_suffix(f".jsonl.aborted-{uuid.uuid4().hex[:8]}"))
            sess = _ActiveSession(uuid.uuid4().hex, participant, log_path)
            sess.rating = self.exp.rating_initial
            sess.rng = np.random.default_rng([self.seed, participant, 0])
            self.session = sess
            self._begin_round(sess)
            return {"session": self._handle(sess), "view": self._view(sess)}

    def _begin_round(self, sess: _ActiveSession) -> None:
        exp = self.exp
        state = self.state_seq[sess.k - 1]
        w = exp.game.state_index(state)
        share = sess.rating / exp.rating_max
        p_eff = self.phat.effective()
        flows_all = exp.policy.pi * share + (exp.policy.pi @ p_eff) * (1.0 - share)
        acc = exp.game.coeffs[-1].copy()
        for d in range(exp.game.degree - 1, -1, -1):
            acc = acc * flows_all + exp.game.coeffs[d]
        sess.state = state
        sess.recommended = int(sess.rng.choice(exp.game.n_routes, p=exp.policy.pi[w])) + 1
        sess.forecast_times = {
            exp.game.states[v]: [float(x) for x in acc[v]] for v in range(exp.game.n_states)
        }
        sess.forecast_flows = {
            exp.game.states[v]: [float(x) for x in flows_all[v]] for v in range(exp.game.n_states)
        }
        sess.t_start = float(self.clock())
        sess.phase = PHASE_CHOICE

    def _handle(self, sess: _ActiveSession) -> dict:
        return {
            "id": sess.id,
            "participant": sess.participant,
            "k": sess.k,
            "phase": sess.phase,
        }

    def _view(self, sess: _ActiveSession) -> dict:
        exp = self.exp
        view = {
            "k": sess.k,
            "rounds": exp.rounds,
            "phase": sess.phase,
            "rating_displayed": quantize_rating(sess.rating, exp.rating_max),
            "rating_max": exp.rating_max,
            "recommended": sess.recommended,
            "routes": exp.game.n_routes,
            "states": list(exp.game.states),
            "prior": [float(x) for x in exp.game.prior],
            "forecasts": sess.forecast_times,
            "review_default": exp.review_default,
        }
        if sess.phase == PHASE_REVIEW:
            view["revealed"] = self._reveal(sess)
        return view

    def _reveal(self, sess: _ActiveSession) -> dict:
        return {
            "state": sess.state,
            "travel_times": sess.forecast_times[sess.state],
            "recommended": sess.recommended,
            "chosen": sess.chosen,
        }

    def _get(self, session_id: str) -> _ActiveSession:
        if self.session is None or self.session.id != session_id:
            raise ServiceError(404, f"unknown session {session_id}")
        return self.session

    def get_view(self, session_id: str) -> dict:
        with self.lock:
            sess = self._get(session_id)
            if sess.phase == PHASE_FINISHED:
                return {"session": self._handle(sess), "summary": self._summary(sess)}
            return {"session": self._handle(sess), "view": self._view(sess)}

    def submit_choice(self, session_id: str, route) -> dict:
        with self.lock:
            sess = self._get(session_id)
            if sess.phase != PHASE_CHOICE:
                raise ServiceError(409, f"choice out of phase ({sess.phase})")
            if not isinstance(route, int) or not 1 <= route <= self.exp.game.n_routes:
                raise ServiceError(400, f"route must be in 1..{self.exp.game.n_routes}")
            sess.chosen = route
            sess.phase = PHASE_REVIEW
            return {"session": self._handle(sess), "revealed": self._reveal(sess),
                    "review_default": self.exp.review_default}

    def submit_review(self, session_id: str, value) -> dict:
        with self.lock:
            sess = self._get(session_id)
            if sess.phase != PHASE_REVIEW:
                raise ServiceError(409, f"review out of phase ({sess.phase})")
            try:
                review = float(value)
            except (TypeError, ValueError):
                raise ServiceError(400, f"review must be a number, got {value!r}") from None
            exp = self.exp
            if not 0.0 <= review <= exp.rating_max:
                raise ServiceError(400, f"review {review} outside [0, {exp.rating_max}]")

            times = sess.forecast_times[sess.state]
            displayed = quantize_rating(sess.rating, exp.rating_max)
            rec = RoundRecord(
                s=sess.participant,
                k=sess.k,
                state=sess.state,
                rating_displayed=displayed,
                recommended=sess.recommended,
                chosen=sess.chosen,
                flows=tuple(sess.forecast_flows[sess.state]),
                travel_times=tuple(times),
                review=review,
                regret=instantaneous_regret(times, sess.recommended),
                t_start=sess.t_start,
                t_end=float(self.clock()),
            )
            record_round(self.stores, rec)
            sess.writer(rec)  # durable before the response
            if rec.chosen == rec.recommended:
                sess.follow_count += 1
            sess.reviews.append(review)
            u_hat, _ = aggregated_regret(self.stores, sess.state, displayed, sess.u_hats)
            sess.u_hats.append(u_hat)
            sess.rating = update_rating(
                sess.rating, sess.k, self.stores.mean_review(sess.state, displayed), exp.rating_max
            )

            if sess.k >= exp.rounds:
                sess.phase = PHASE_FINISHED
                sess.writer.close()
                self.completed += 1
                self.phat = estimate_P(self.stores.choice_counts, previous=self.phat)
                save_stores(self.dir / "stores.json", self.stores, self.phat, self.completed)
                return {"session": self._handle(sess), "summary": self._summary(sess)}
            sess.k += 1
            self._begin_round(sess)
            return {"session": self._handle(sess), "view": self._view(sess)}

    def _summary(self, sess: _ActiveSession) -> dict:
        return {
            "participant": sess.participant,
            "rounds": len(sess.reviews),
            "follow_count": sess.follow_count,
            "mean_review": sum(sess.reviews) / len(sess.reviews) if sess.reviews else None,
            "final_rating_displayed": quantize_rating(sess.rating, self.exp.rating_max),
            "phase": sess.phase,
        }

    def get_summary(self, session_id: str) -> dict:
        with self.lock:
            sess = self._get(session_id)
            return {"session": self._handle(sess), "summary": self._summary(sess)}

    def submit_survey(self, session_id: str, answers) -> dict:
        with self.lock:
            sess = self._get(session_id)
            if sess.phase != PHASE_FINISHED:
                raise ServiceError(409, f"survey before session end ({sess.phase})")
            validated = validate_survey(answers)
            path = self.dir / f"survey_{sess.participant:03d}.json"
            path.write_text(
                json.dumps({"schema": 1, "participant": sess.participant, "answers": validated}, indent=1)
                + "\n",
                encoding="utf-8",
            )
            return {"session": self._handle(sess), "stored": path.name}

    def config_view(self) -> dict:
        exp = self.exp
        return {
            "schema": 1,
            "routes": exp.game.n_routes,
            "states": list(exp.game.states),
            "prior": [float(x) for x in exp.game.prior],
            "rounds": exp.rounds,
            "rating_max": exp.rating_max,
            "review_default": exp.review_default,
        }


def validate_survey(answers) -> dict:
    """Check the nine survey answers; returns them keyed by question id."""
    if not isinstance(answers, dict):
        raise ServiceError(400, "survey answers must be an object keyed by question id")
    answers = {str(k): v for k, v in answers.items()}
    out = {}
    for q in SURVEY_QUESTIONS:
        qid = str(q["id"])
        value = answers.get(qid)
        required = True
        if "requires" in q:
            dep = answers.get(str(q["requires"]["question"]))
            required = dep == q["requires"]["answer"]
        if value is None:
            if required:
                raise ServiceError(400, f"survey question {qid} unanswered")
            out[qid] = None
            continue
        if q["kind"] == "scale":
            if not isinstance(value, int) or not 1 <= value <= 5:
                raise ServiceError(400, f"survey question {qid}: expected integer 1..5")
        elif q["kind"] == "choice":
            if value not in q["options"]:
                raise ServiceError(400, f"survey question {qid}: expected one of {sorted(q['options'])}")
        elif q["kind"] == "number":
            if not isinstance(value, (int, float)):
                raise ServiceError(400, f"survey question {qid}: expected a number")
        else:
            if not isinstance(value, str):
                raise ServiceError(400, f"survey question {qid}: expected text")
        out[qid] = value
    extra = set(answers) - {str(q["id"]) for q in SURVEY_QUESTIONS}
    if extra:
        raise ServiceError(400, f"unknown survey questions {sorted(extra)}")
    return out


# -- HTTP layer ---------------------------------------------------------------


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):  # quiet by default
        if self.server.verbose:
            super().log_message(fmt, *args)

    def _send(self, status: int, payload: dict) -> None:
        body = json.dumps(payload).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _read_body(self) -> dict:
        # always drain the body: leftover bytes would corrupt the next
        # request on a kept-alive connection
        length = int(self.headers.get("Content-Length", 0))
        raw = self.rfile.read(length) if length else b""
        if not raw:
            return {}
        try:
            return json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ServiceError(400, f"request body is not valid JSON: {exc}") from exc

    def _route(self, method: str, body: dict):
        svc: ExperimentService = self.server.service
        parts = [p for p in self.path.split("?")[0].split("/") if p]
        if parts[:1] == ["api"]:
            parts = parts[1:]
            if method == "GET" and parts == ["config"]:
                return svc.config_view()
            if method == "GET" and parts == ["survey"]:
                return {"questions": list(SURVEY_QUESTIONS)}
            if method == "POST" and parts == ["sessions"]:
                return svc.create_session()
            if len(parts) >= 2 and parts[0] == "sessions":
                sid = parts[1]
                rest = parts[2:]
                if method == "GET" and rest in ([], ["round"]):
                    return svc.get_view(sid)
                if method == "GET" and rest == ["summary"]:
                    return svc.get_summary(sid)
                if method == "POST" and rest == ["choice"]:
                    return svc.submit_choice(sid, body.get("route"))
                if method == "POST" and rest == ["review"]:
                    return svc.submit_review(sid, body.get("value"))
                if method == "POST" and rest == ["survey"]:
                    return svc.submit_survey(sid, body.get("answers"))
            raise ServiceError(404, f"no such endpoint: {method} {self.path}")
        return None  # static

    def _dispatch(self, method: str) -> None:
        try:
            body = self._read_body()
            payload = self._route(method, body)
        except ServiceError as exc:
            self._send(exc.status, {"error": str(exc)})
            return
        if payload is not None:
            self._send(200, payload)
            return
        if method == "GET":
            self._static()
        else:
            self._send(404, {"error": f"no such endpoint: {method} {self.path}"})

    def _static(self) -> None:
        root = self.server.static_dir
        if root is None:
            self._send(404, {"error": "no static frontend configured"})
            return
        rel = self.path.split("?")[0].lstrip("/") or "index.html"
        target = (root / rel).resolve()
        if not str(target).startswith(str(root.resolve())) or not target.is_file():
            self._send(404, {"error": f"not found: {self.path}"})
            return
        body = target.read_bytes()
        ctype = {
            ".html": "text/html",
            ".js": "text/javascript",
            ".css": "text/css",
            ".json": "application/json",
            ".svg": "image/svg+xml",
        }.get(target.suffix, "application/octet-stream")
        self.send_response(200)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):
        self._dispatch("GET")

    def do_POST(self):
        self._dispatch("POST")


def make_server(exp: ExperimentConfig, lineage_dir, port: int = 0, *, seed: int = 0,
                static_dir=None, verbose: bool = False) -> ThreadingHTTPServer:
    """Build (but do not start) the HTTP server; port 0 picks a free port."""
    server = ThreadingHTTPServer(("127.0.0.1", port), _Handler)
    server.service = ExperimentService(exp, lineage_dir, seed=seed)
    server.static_dir = Path(static_dir) if static_dir else None
    server.verbose = verbose
    return server


def serve_forever(exp: ExperimentConfig, lineage_dir, port: int, **kwargs) -> None:
    server = make_server(exp, lineage_dir, port, **kwargs)
    host, actual_port = server.server_address
    print(f"session service on http://{host}:{actual_port} (lineage: {lineage_dir})")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
