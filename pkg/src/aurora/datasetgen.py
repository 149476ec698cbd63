"""Turn labeled solutions into training records with reference masking and
a leakage-free train/validation split."""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .core import (
    LabeledSolution,
    Query,
    TrainingRecord,
    parse_sample_ref,
    ref_sort_key,
    stable_seed,
)
from .genpolicy import SkipRecord


@dataclass
class DatasetConfig:
    p_alpha: float = 0.5
    seed: int = 0
    validation_fraction: float = 0.05

    def __post_init__(self) -> None:
        if not (0.0 <= self.p_alpha <= 1.0):
            raise ValueError("p_alpha must be in [0, 1]")
        if not (0.0 < self.validation_fraction < 1.0):
            raise ValueError("validation_fraction must be in (0, 1)")


@dataclass
class DatasetResult:
    train: list[TrainingRecord] = field(default_factory=list)
    validation: list[TrainingRecord] = field(default_factory=list)
    skips: list[SkipRecord] = field(default_factory=list)

    @property
    def alpha_fraction(self) -> float:
        records = self.train + self.validation
        if not records:
            return 0.0
        return sum(r.alpha for r in records) / len(records)


def draw_alpha(config: DatasetConfig, query_id: str, sample_ref_str: str) -> int:
    """Per-record reference-visibility gate, keyed by (seed, query, sample)."""
    rng = random.Random(stable_seed(config.seed, "alpha", query_id, sample_ref_str))
    return 1 if rng.random() < config.p_alpha else 0


def assign_validation(config: DatasetConfig, query_id: str) -> bool:
    """Seeded split by query, so no question leaks across the boundary."""
    rng = random.Random(stable_seed(config.seed, "split", query_id))
    return rng.random() < config.validation_fraction


def build_records(
    labeled: list[LabeledSolution],
    queries: list[Query],
    config: DatasetConfig,
) -> DatasetResult:
    """Reference-masked training records plus the query-level split."""
    by_id = {q.id: q for q in queries}
    result = DatasetResult()
    for sol in sorted(labeled, key=lambda s: ref_sort_key(s.sample_ref)):
        query_id = parse_sample_ref(sol.sample_ref)[0]
        query = by_id.get(query_id)
        if query is None:
            result.skips.append(
                SkipRecord("build", sol.sample_ref, f"no query with id {query_id!r}")
            )
            continue
        alpha = draw_alpha(config, query_id, sol.sample_ref)
        record = TrainingRecord(
            query_id=query_id,
            question=query.question,
            reference_answer=query.reference_answer if alpha == 1 else None,
            steps=sol.steps,
            labels=sol.labels.values,
            alpha=alpha,
        )
        if assign_validation(config, query_id):
            result.validation.append(record)
        else:
            result.train.append(record)
    return result


@dataclass(frozen=True)
class PrefixView:
    question: str
    reference_answer: str | None
    steps: tuple[str, ...]
    target: float


def prefix_views(record: TrainingRecord) -> list[PrefixView]:
    """One view per step: question, optional reference, steps 1..i, target i."""
    return [
        PrefixView(
            question=record.question,
            reference_answer=record.reference_answer,
            steps=record.steps[: i + 1],
            target=record.labels[i],
        )
        for i in range(len(record.steps))
    ]
