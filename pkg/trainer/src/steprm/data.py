"""JSONL readers/writers for the pipeline's file contracts.

The trainer talks to the pipeline only through its files: training records
and eval cases come in as JSON lines under the ``aurora/1`` schema header,
and step scores go out in the same shape the evaluator ingests.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

SCHEMA_VERSION = "aurora/1"


@dataclass(frozen=True)
class TrainingRecord:
    query_id: str
    question: str
    reference_answer: str | None
    steps: tuple[str, ...]
    labels: tuple[float, ...]
    alpha: int


@dataclass(frozen=True)
class EvalCase:
    case_id: str
    question: str
    reference_answer: str | None
    steps: tuple[str, ...]


def _iter_jsonl(path: str | Path) -> Iterable[dict]:
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            yield json.loads(line)


def read_training_records(path: str | Path) -> list[TrainingRecord]:
    records = []
    for obj in _iter_jsonl(path):
        records.append(
            TrainingRecord(
                query_id=obj["query_id"],
                question=obj["question"],
                reference_answer=obj.get("reference_answer"),
                steps=tuple(obj["steps"]),
                labels=tuple(float(v) for v in obj["labels"]),
                alpha=int(obj["alpha"]),
            )
        )
    return records


def read_eval_cases(path: str | Path) -> list[EvalCase]:
    cases = []
    for obj in _iter_jsonl(path):
        cases.append(
            EvalCase(
                case_id=obj["case_id"],
                question=obj["question"],
                reference_answer=obj.get("reference_answer"),
                steps=tuple(obj["steps"]),
            )
        )
    return cases


def write_training_records(path: str | Path, records: list[TrainingRecord]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# {SCHEMA_VERSION}\n")
        for rec in records:
            fh.write(
                json.dumps(
                    {
                        "query_id": rec.query_id,
                        "question": rec.question,
                        "reference_answer": rec.reference_answer,
                        "steps": list(rec.steps),
                        "labels": list(rec.labels),
                        "alpha": rec.alpha,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )


def write_step_scores(path: str | Path, scores: list[tuple[str, list[float]]]) -> None:
    """Emit StepScores JSONL exactly as the evaluator expects."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# {SCHEMA_VERSION}\n")
        for case_id, values in scores:
            fh.write(json.dumps({"case_id": case_id, "scores": values}, ensure_ascii=False) + "\n")
