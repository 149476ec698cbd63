import random

import pytest

from steprm.data import TrainingRecord


def overfit_fixture(n: int = 32, seed: int = 99) -> list[TrainingRecord]:
    """Deterministic 32-record set with binary labels for overfit runs."""
    rng = random.Random(seed)
    words = ["add", "carry", "total", "split", "halve", "double", "check", "borrow"]
    records = []
    for i in range(n):
        n_steps = rng.randrange(2, 5)
        steps, labels = [], []
        for s in range(n_steps):
            w = words[rng.randrange(len(words))]
            good = rng.randrange(2)
            steps.append(f"step {s}: {w} the value {i % 7} giving {(i + s) % 11}")
            labels.append(float(good))
        records.append(
            TrainingRecord(
                query_id=f"fix{i:03d}",
                question=f"compute series {i % 5} item {i}",
                reference_answer=str(i % 9) if i % 2 == 0 else None,
                steps=tuple(steps),
                labels=tuple(labels),
                alpha=1 if i % 2 == 0 else 0,
            )
        )
    return records


@pytest.fixture()
def fixture_records() -> list[TrainingRecord]:
    return overfit_fixture()
