"""Domain types and stage-boundary JSONL schemas shared by every pipeline stage.

Every record type is a frozen dataclass with tuple-valued sequences, so
instances are immutable and safe to share across concurrent workers. Files
are JSON-lines, UTF-8, one object per line, with a ``# aurora/1`` header
line and a deterministic sort order (samples by :func:`stable_key`, other
stages by their primary key).
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Union

SCHEMA_VERSION = "aurora/1"

# Unit separator: composes the opaque GeneratedSample key out of its fields.
_REF_SEP = ""

GRID_EPS = 1e-9


class CorpusIOError(Exception):
    """Unreadable or structurally broken input file (distinct from validation)."""


def stable_seed(*parts: object) -> int:
    """Deterministic cross-platform seed derived from the given key parts."""
    blob = _REF_SEP.join(str(p) for p in parts).encode("utf-8")
    digest = hashlib.sha256(blob).digest()
    return int.from_bytes(digest[:8], "big") & 0x7FFFFFFFFFFFFFFF


@dataclass(frozen=True)
class Query:
    id: str
    question: str
    reference_answer: str


@dataclass(frozen=True)
class GeneratedSample:
    query_id: str
    policy_id: str
    prompt_id: str
    response_text: str
    seed: int


@dataclass(frozen=True)
class SegmentedSolution:
    sample_ref: str
    steps: tuple[str, ...]
    method: str  # "semantic" | "delimiter_merged"


@dataclass(frozen=True)
class SoftLabelVector:
    values: tuple[float, ...]
    prompt_count: int
    votes_per_prompt: int


@dataclass(frozen=True)
class LabeledSolution:
    """Judge-stage output: a segmented solution paired with its soft labels."""

    sample_ref: str
    steps: tuple[str, ...]
    method: str
    labels: SoftLabelVector
    surviving_prompts: int
    parse_failures: int


@dataclass(frozen=True)
class TrainingRecord:
    query_id: str
    question: str
    reference_answer: str | None
    steps: tuple[str, ...]
    labels: tuple[float, ...]
    alpha: int


@dataclass(frozen=True)
class GoldSteps:
    labels: tuple[int, ...]


@dataclass(frozen=True)
class GoldFirstError:
    index: int


Gold = Union[GoldSteps, GoldFirstError]


@dataclass(frozen=True)
class EvalCase:
    case_id: str
    question: str
    reference_answer: str | None
    steps: tuple[str, ...]
    gold: Gold
    source_tag: str


@dataclass(frozen=True)
class StepScores:
    case_id: str
    scores: tuple[float, ...]


def sample_ref(sample: GeneratedSample) -> str:
    """Opaque key of a GeneratedSample; parseable back via parse_sample_ref."""
    return _REF_SEP.join(
        (sample.query_id, sample.policy_id, sample.prompt_id, str(sample.seed))
    )


def parse_sample_ref(ref: str) -> tuple[str, str, str, int]:
    parts = ref.split(_REF_SEP)
    if len(parts) != 4:
        raise ValueError(f"malformed sample ref: {ref!r}")
    return parts[0], parts[1], parts[2], int(parts[3])


def stable_key(sample: GeneratedSample) -> tuple[str, str, str, int]:
    """Total order over samples, independent of production order."""
    return (sample.query_id, sample.policy_id, sample.prompt_id, sample.seed)


def ref_sort_key(ref: str) -> tuple[str, str, str, int]:
    """stable_key equivalent for records that carry only the sample ref."""
    return parse_sample_ref(ref)


# ---------------------------------------------------------------------------
# Encoding / decoding
# ---------------------------------------------------------------------------


def encode_record(record: object) -> dict[str, Any]:
    if isinstance(record, Query):
        return {
            "id": record.id,
            "question": record.question,
            "reference_answer": record.reference_answer,
        }
    if isinstance(record, GeneratedSample):
        return {
            "query_id": record.query_id,
            "policy_id": record.policy_id,
            "prompt_id": record.prompt_id,
            "response_text": record.response_text,
            "seed": record.seed,
        }
    if isinstance(record, SegmentedSolution):
        return {
            "sample_ref": record.sample_ref,
            "steps": list(record.steps),
            "method": record.method,
        }
    if isinstance(record, LabeledSolution):
        return {
            "sample_ref": record.sample_ref,
            "steps": list(record.steps),
            "method": record.method,
            "labels": {
                "values": list(record.labels.values),
                "prompt_count": record.labels.prompt_count,
                "votes_per_prompt": record.labels.votes_per_prompt,
            },
            "surviving_prompts": record.surviving_prompts,
            "parse_failures": record.parse_failures,
        }
    if isinstance(record, TrainingRecord):
        return {
            "query_id": record.query_id,
            "question": record.question,
            "reference_answer": record.reference_answer,
            "steps": list(record.steps),
            "labels": list(record.labels),
            "alpha": record.alpha,
        }
    if isinstance(record, EvalCase):
        if isinstance(record.gold, GoldSteps):
            gold: dict[str, Any] = {
                "kind": "per_step",
                "labels": list(record.gold.labels),
            }
        else:
            gold = {"kind": "first_error", "index": record.gold.index}
        return {
            "case_id": record.case_id,
            "question": record.question,
            "reference_answer": record.reference_answer,
            "steps": list(record.steps),
            "gold": gold,
            "source_tag": record.source_tag,
        }
    if isinstance(record, StepScores):
        return {"case_id": record.case_id, "scores": list(record.scores)}
    raise TypeError(f"not a stage record type: {type(record).__name__}")


def decode_query(obj: dict[str, Any]) -> Query:
    return Query(
        id=obj["id"],
        question=obj["question"],
        reference_answer=obj["reference_answer"],
    )


def decode_sample(obj: dict[str, Any]) -> GeneratedSample:
    return GeneratedSample(
        query_id=obj["query_id"],
        policy_id=obj["policy_id"],
        prompt_id=obj["prompt_id"],
        response_text=obj["response_text"],
        seed=int(obj["seed"]),
    )


def decode_segmented(obj: dict[str, Any]) -> SegmentedSolution:
    return SegmentedSolution(
        sample_ref=obj["sample_ref"],
        steps=tuple(obj["steps"]),
        method=obj["method"],
    )


def decode_labeled(obj: dict[str, Any]) -> LabeledSolution:
    lab = obj["labels"]
    return LabeledSolution(
        sample_ref=obj["sample_ref"],
        steps=tuple(obj["steps"]),
        method=obj["method"],
        labels=SoftLabelVector(
            values=tuple(float(v) for v in lab["values"]),
            prompt_count=int(lab["prompt_count"]),
            votes_per_prompt=int(lab["votes_per_prompt"]),
        ),
        surviving_prompts=int(obj["surviving_prompts"]),
        parse_failures=int(obj["parse_failures"]),
    )


def decode_training_record(obj: dict[str, Any]) -> TrainingRecord:
    return TrainingRecord(
        query_id=obj["query_id"],
        question=obj["question"],
        reference_answer=obj.get("reference_answer"),
        steps=tuple(obj["steps"]),
        labels=tuple(float(v) for v in obj["labels"]),
        alpha=int(obj["alpha"]),
    )


def decode_eval_case(obj: dict[str, Any]) -> EvalCase:
    raw_gold = obj["gold"]
    if raw_gold.get("kind") == "per_step":
        gold: Gold = GoldSteps(labels=tuple(int(v) for v in raw_gold["labels"]))
    elif raw_gold.get("kind") == "first_error":
        gold = GoldFirstError(index=int(raw_gold["index"]))
    else:
        raise CorpusIOError(f"unknown gold kind: {raw_gold.get('kind')!r}")
    return EvalCase(
        case_id=obj["case_id"],
        question=obj["question"],
        reference_answer=obj.get("reference_answer"),
        steps=tuple(obj["steps"]),
        gold=gold,
        source_tag=obj["source_tag"],
    )


def decode_step_scores(obj: dict[str, Any]) -> StepScores:
    return StepScores(
        case_id=obj["case_id"],
        scores=tuple(float(v) for v in obj["scores"]),
    )


# ---------------------------------------------------------------------------
# JSONL file IO
# ---------------------------------------------------------------------------


def write_jsonl(
    path: str | Path,
    records: Iterable[object],
    sort_key: Callable[[Any], Any] | None = None,
) -> int:
    """Write records with the schema header; returns the record count."""
    items = list(records)
    if sort_key is not None:
        items.sort(key=sort_key)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# {SCHEMA_VERSION}\n")
        for rec in items:
            obj = rec if isinstance(rec, dict) else encode_record(rec)
            fh.write(json.dumps(obj, ensure_ascii=False))
            fh.write("\n")
    return len(items)


def read_jsonl(path: str | Path, decoder: Callable[[dict[str, Any]], Any]) -> list[Any]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise CorpusIOError(f"cannot read {path}: {exc}") from exc
    out: list[Any] = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        if line.startswith("#"):
            version = line.lstrip("#").strip()
            if version and version != SCHEMA_VERSION:
                raise CorpusIOError(
                    f"{path}:{lineno}: unsupported schema version {version!r}"
                )
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorpusIOError(f"{path}:{lineno}: bad JSON: {exc}") from exc
        try:
            out.append(decoder(obj))
        except (KeyError, TypeError, ValueError) as exc:
            raise CorpusIOError(f"{path}:{lineno}: bad record: {exc}") from exc
    return out


def read_queries(path: str | Path) -> list[Query]:
    return read_jsonl(path, decode_query)


def read_samples(path: str | Path) -> list[GeneratedSample]:
    return read_jsonl(path, decode_sample)


def read_segmented(path: str | Path) -> list[SegmentedSolution]:
    return read_jsonl(path, decode_segmented)


def read_labeled(path: str | Path) -> list[LabeledSolution]:
    return read_jsonl(path, decode_labeled)


def read_training_records(path: str | Path) -> list[TrainingRecord]:
    return read_jsonl(path, decode_training_record)


def read_eval_cases(path: str | Path) -> list[EvalCase]:
    return read_jsonl(path, decode_eval_case)


def read_step_scores(path: str | Path) -> list[StepScores]:
    return read_jsonl(path, decode_step_scores)


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    record_key: str
    field: str
    message: str


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, record_key: str, field_name: str, message: str) -> None:
        self.violations.append(Violation(record_key, field_name, message))


def _on_label_grid(value: float, denominator: int) -> bool:
    if denominator < 1 or not math.isfinite(value):
        return False
    scaled = value * denominator
    return abs(scaled - round(scaled)) <= GRID_EPS * denominator and -GRID_EPS <= value <= 1 + GRID_EPS


def _check_soft_labels(
    key: str,
    labels: SoftLabelVector,
    expected_len: int | None,
    report: ValidationReport,
) -> None:
    if expected_len is not None and len(labels.values) != expected_len:
        report.add(key, "labels.values", f"length {len(labels.values)} != step count {expected_len}")
    if labels.prompt_count < 1:
        report.add(key, "labels.prompt_count", "must be >= 1")
        return
    for i, v in enumerate(labels.values):
        if not _on_label_grid(v, labels.prompt_count):
            report.add(
                key,
                "labels.values",
                f"value {v} at step {i} not on the k/{labels.prompt_count} grid",
            )


def validate_corpus(records: Iterable[object]) -> ValidationReport:
    """Check every record's invariants; valid corpora yield an empty report."""
    report = ValidationReport()
    seen_query_ids: set[str] = set()
    seen_sample_keys: set[tuple[str, str, str, int]] = set()
    seen_case_ids: set[str] = set()

    for rec in records:
        if isinstance(rec, Query):
            key = rec.id or "<empty id>"
            if not rec.id:
                report.add(key, "id", "empty")
            elif rec.id in seen_query_ids:
                report.add(key, "id", "duplicate query id")
            else:
                seen_query_ids.add(rec.id)
            if not rec.question:
                report.add(key, "question", "empty")
            if not rec.reference_answer:
                report.add(key, "reference_answer", "empty")
        elif isinstance(rec, GeneratedSample):
            skey = stable_key(rec)
            key = sample_ref(rec)
            if skey in seen_sample_keys:
                report.add(key, "query_id/policy_id/prompt_id/seed", "duplicate sample key")
            else:
                seen_sample_keys.add(skey)
            if not rec.response_text:
                report.add(key, "response_text", "empty")
        elif isinstance(rec, SegmentedSolution):
            key = rec.sample_ref
            if len(rec.steps) < 1:
                report.add(key, "steps", "empty step list")
            for i, step in enumerate(rec.steps):
                if not step:
                    report.add(key, "steps", f"step {i} empty")
            if rec.method not in ("semantic", "delimiter_merged"):
                report.add(key, "method", f"unknown method {rec.method!r}")
        elif isinstance(rec, LabeledSolution):
            key = rec.sample_ref
            if len(rec.steps) < 1:
                report.add(key, "steps", "empty step list")
            _check_soft_labels(key, rec.labels, len(rec.steps), report)
        elif isinstance(rec, SoftLabelVector):
            _check_soft_labels("<soft labels>", rec, None, report)
        elif isinstance(rec, TrainingRecord):
            key = rec.query_id or "<empty query_id>"
            if rec.alpha not in (0, 1):
                report.add(key, "alpha", f"must be 0 or 1, got {rec.alpha}")
            if rec.alpha == 1 and not rec.reference_answer:
                report.add(key, "reference_answer", "missing despite alpha=1")
            if rec.alpha == 0 and rec.reference_answer is not None:
                report.add(key, "reference_answer", "present despite alpha=0")
            if len(rec.labels) != len(rec.steps):
                report.add(key, "labels", f"length {len(rec.labels)} != step count {len(rec.steps)}")
            for i, v in enumerate(rec.labels):
                if not (math.isfinite(v) and -GRID_EPS <= v <= 1 + GRID_EPS):
                    report.add(key, "labels", f"value {v} at step {i} outside [0,1]")
        elif isinstance(rec, EvalCase):
            key = rec.case_id or "<empty case_id>"
            if not rec.case_id:
                report.add(key, "case_id", "empty")
            elif rec.case_id in seen_case_ids:
                report.add(key, "case_id", "duplicate case id")
            else:
                seen_case_ids.add(rec.case_id)
            if len(rec.steps) < 1:
                report.add(key, "steps", "empty step list")
            if isinstance(rec.gold, GoldSteps):
                if len(rec.gold.labels) != len(rec.steps):
                    report.add(key, "gold", f"label count {len(rec.gold.labels)} != step count {len(rec.steps)}")
                for i, g in enumerate(rec.gold.labels):
                    if g not in (0, 1):
                        report.add(key, "gold", f"label {g} at step {i} not in {{0,1}}")
            else:
                if not (-1 <= rec.gold.index <= len(rec.steps) - 1):
                    report.add(key, "gold", f"first-error index {rec.gold.index} out of range")
        elif isinstance(rec, StepScores):
            key = rec.case_id or "<empty case_id>"
            for i, s in enumerate(rec.scores):
                if not math.isfinite(s):
                    report.add(key, "scores", f"score at step {i} not finite")
                elif not (0.0 <= s <= 1.0):
                    report.add(key, "scores", f"score {s} at step {i} outside [0,1]")
        else:
            report.add("<unknown>", "type", f"unrecognized record type {type(rec).__name__}")
    return report
