"""Durable formats: session logs (JSONL), store snapshots, and manifests.

One log line per round, appended and flushed before the session advances.
All formats carry a schema version; loading validates every record.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from jsonschema import Draft202012Validator

from .game import DefectionMatrix
from .protocol import KeyedStores, RoundRecord

SCHEMA_VERSION = 1

RECORD_FIELDS = (
    "s", "k", "state", "rating_displayed", "recommended", "chosen",
    "flows", "travel_times", "review", "regret", "t_start", "t_end",
)

RECORD_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": list(RECORD_FIELDS),
    "additionalProperties": False,
    "properties": {
        "s": {"type": "integer", "minimum": 1},
        "k": {"type": "integer", "minimum": 1},
        "state": {"type": "string"},
        "rating_displayed": {"type": "number", "minimum": 0},
        "recommended": {"type": "integer", "minimum": 1},
        "chosen": {"type": "integer", "minimum": 1},
        "flows": {"type": "array", "items": {"type": "number"}, "minItems": 1},
        "travel_times": {"type": "array", "items": {"type": "number"}, "minItems": 1},
        "review": {"type": "number", "minimum": 0},
        "regret": {"type": "number", "minimum": 0},
        "t_start": {"type": "number"},
        "t_end": {"type": "number"},
    },
}

_VALIDATOR = Draft202012Validator(RECORD_SCHEMA)


def record_to_dict(rec: RoundRecord) -> dict:
    return {
        "s": rec.s,
        "k": rec.k,
        "state": rec.state,
        "rating_displayed": rec.rating_displayed,
        "recommended": rec.recommended,
        "chosen": rec.chosen,
        "flows": list(rec.flows),
        "travel_times": list(rec.travel_times),
        "review": rec.review,
        "regret": rec.regret,
        "t_start": rec.t_start,
        "t_end": rec.t_end,
    }


def validate_record_dict(obj: dict) -> None:
    """Schema-validate one parsed log record; raises ValueError with the defect."""
    errors = sorted(_VALIDATOR.iter_errors(obj), key=lambda e: e.json_path)
    if errors:
        raise ValueError(f"log record invalid: {errors[0].message} at {errors[0].json_path}")
    n = len(obj["flows"])
    if len(obj["travel_times"]) != n:
        raise ValueError("log record invalid: flows/travel_times length mismatch")
    for name in ("recommended", "chosen"):
        if obj[name] > n:
            raise ValueError(f"log record invalid: {name} route {obj[name]} > {n}")
    expected = obj["travel_times"][obj["recommended"] - 1] - min(obj["travel_times"])
    if abs(obj["regret"] - expected) > 1e-9:
        raise ValueError(
            f"log record invalid: regret {obj['regret']} inconsistent with travel times"
        )


def record_from_dict(obj: dict) -> RoundRecord:
    validate_record_dict(obj)
    return RoundRecord(
        s=obj["s"],
        k=obj["k"],
        state=obj["state"],
        rating_displayed=float(obj["rating_displayed"]),
        recommended=obj["recommended"],
        chosen=obj["chosen"],
        flows=tuple(float(x) for x in obj["flows"]),
        travel_times=tuple(float(x) for x in obj["travel_times"]),
        review=float(obj["review"]),
        regret=float(obj["regret"]),
        t_start=float(obj["t_start"]),
        t_end=float(obj["t_end"]),
    )


def dumps_record(rec: RoundRecord) -> str:
    return json.dumps(record_to_dict(rec), separators=(",", ":"))


class LogWriter:
    """Append-only JSONL sink, flushed per record."""

    def __init__(self, path, append: bool = False):
        self.path = Path(path)
        self.fh = open(self.path, "a" if append else "w", encoding="utf-8")

    def __call__(self, rec: RoundRecord) -> None:
        self.fh.write(dumps_record(rec) + "\n")
        self.fh.flush()

    def close(self) -> None:
        self.fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def load_records(path) -> list[RoundRecord]:
    """Read and validate one JSONL log file."""
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: not valid JSON: {exc}") from exc
            try:
                records.append(record_from_dict(obj))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    return records


def load_log_dir(path) -> list[list[RoundRecord]]:
    """Load every *.jsonl session log under a directory, grouped by participant."""
    path = Path(path)
    files = sorted(path.glob("*.jsonl")) if path.is_dir() else [path]
    if not files:
        raise FileNotFoundError(f"no .jsonl logs under {path}")
    flat: list[RoundRecord] = []
    for f in files:
        flat.extend(load_records(f))
    by_participant: dict[int, list[RoundRecord]] = {}
    for rec in flat:
        by_participant.setdefault(rec.s, []).append(rec)
    sessions = []
    for s in sorted(by_participant):
        recs = sorted(by_participant[s], key=lambda r: r.k)
        sessions.append(recs)
    return sessions


def save_stores(path, stores: KeyedStores, phat: DefectionMatrix, participants_completed: int) -> None:
    def keyed(table: dict) -> list:
        return [
            {"state": state, "rating_tenths": tenths, "values": values}
            for (state, tenths), values in sorted(table.items())
        ]

    doc = {
        "schema": SCHEMA_VERSION,
        "n_routes": stores.n_routes,
        "r_max": stores.r_max,
        "reviews": keyed(stores.reviews),
        "regrets": keyed(stores.regrets),
        "choice_counts": stores.choice_counts.tolist(),
        "defection_estimate": phat.p.tolist(),
        "participants_completed": participants_completed,
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")


def load_stores(path) -> tuple[KeyedStores, DefectionMatrix, int]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("schema") != SCHEMA_VERSION:
        raise ValueError(f"store snapshot schema {doc.get('schema')} unsupported")
    stores = KeyedStores(
        n_routes=int(doc["n_routes"]),
        r_max=float(doc["r_max"]),
        choice_counts=np.asarray(doc["choice_counts"], dtype=np.int64),
    )
    for entry in doc["reviews"]:
        stores.reviews[(entry["state"], int(entry["rating_tenths"]))] = [
            float(v) for v in entry["values"]
        ]
    for entry in doc["regrets"]:
        stores.regrets[(entry["state"], int(entry["rating_tenths"]))] = [
            float(v) for v in entry["values"]
        ]
    phat = DefectionMatrix(np.asarray(doc["defection_estimate"], dtype=float))
    return stores, phat, int(doc["participants_completed"])


def write_manifest(out_dir, **fields) -> None:
    doc = {"schema": SCHEMA_VERSION, **fields}
    Path(out_dir, "manifest.json").write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")
