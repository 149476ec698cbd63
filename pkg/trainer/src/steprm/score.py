"""Score eval cases at step boundaries and emit the evaluator's file format."""

from __future__ import annotations

from pathlib import Path

import torch

from .data import EvalCase, TrainingRecord, write_step_scores
from .model import LOGIT_CLAMP, StepScorer, TruncationError, encode, pad_batch
from .vocab import Vocab


def score_cases(
    model: StepScorer,
    vocab: Vocab,
    cases: list[EvalCase],
    with_reference: bool = True,
) -> tuple[list[tuple[str, list[float]]], list[str]]:
    """Per-step scores in strict (0, 1); overflowing cases are skipped and
    reported. with_reference=False hides reference spans even when present."""
    model.eval()
    device = next(model.parameters()).device
    results: list[tuple[str, list[float]]] = []
    flagged: list[str] = []
    with torch.no_grad():
        for case in cases:
            record = TrainingRecord(
                query_id=case.case_id,
                question=case.question,
                reference_answer=case.reference_answer,
                steps=case.steps,
                labels=tuple(0.0 for _ in case.steps),
                alpha=1 if (with_reference and case.reference_answer is not None) else 0,
            )
            try:
                ex = encode(record, vocab, model.config.max_len)
            except TruncationError as exc:
                flagged.append(str(exc))
                continue
            logits = model(pad_batch([ex], device))[0, list(ex.marker_positions)]
            probs = torch.sigmoid(torch.clamp(logits, -LOGIT_CLAMP, LOGIT_CLAMP))
            results.append((case.case_id, [float(p) for p in probs]))
    return results, flagged


def score_to_file(
    model: StepScorer,
    vocab: Vocab,
    cases: list[EvalCase],
    out_path: str | Path,
    with_reference: bool = True,
) -> list[str]:
    results, flagged = score_cases(model, vocab, cases, with_reference)
    write_step_scores(out_path, results)
    return flagged
