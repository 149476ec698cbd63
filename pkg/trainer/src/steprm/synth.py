"""Synthetic secret-matching task: step correctness is decidable only by
comparing each claim against the reference answer, so hiding the reference
puts a floor under the achievable validation loss."""

from __future__ import annotations

import random

from .data import TrainingRecord

SECRET_WORDS = (
    "alpha", "bravo", "charlie", "delta", "echo",
    "foxtrot", "golf", "hotel", "india", "juliet",
)


def make_secret_task(
    n_records: int, seed: int, with_reference: bool, min_steps: int = 2, max_steps: int = 4
) -> list[TrainingRecord]:
    """Each step claims a word; its label is 1 iff the claim equals the
    secret. Half the claims match, so blind prediction cannot beat the base
    rate."""
    rng = random.Random(seed)
    records = []
    for i in range(n_records):
        secret = SECRET_WORDS[rng.randrange(len(SECRET_WORDS))]
        n_steps = rng.randrange(min_steps, max_steps + 1)
        steps, labels = [], []
        for s in range(n_steps):
            if rng.random() < 0.5:
                claim = secret
            else:
                others = [w for w in SECRET_WORDS if w != secret]
                claim = others[rng.randrange(len(others))]
            steps.append(f"guess {s}: the secret is {claim}")
            labels.append(1.0 if claim == secret else 0.0)
        records.append(
            TrainingRecord(
                query_id=f"synth{i:05d}",
                question="name the secret word",
                reference_answer=secret if with_reference else None,
                steps=tuple(steps),
                labels=tuple(labels),
                alpha=1 if with_reference else 0,
            )
        )
    return records
