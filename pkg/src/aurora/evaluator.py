"""Step-score evaluation under two protocols: first-error localization F1
and pooled per-step weighted F1, with validation-set threshold selection."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .core import EvalCase, GoldFirstError, GoldSteps, StepScores

PROTOCOLS = ("processbench", "universalbench")

SWEEP_GRID = tuple(i / 100 for i in range(101))


class EvalDataError(Exception):
    pass


@dataclass
class EvalConfig:
    protocol: str = "processbench"
    threshold: float | str = "sweep"  # number in [0,1] or "sweep"

    def __post_init__(self) -> None:
        if self.protocol not in PROTOCOLS:
            raise ValueError(f"unknown protocol {self.protocol!r}")
        if isinstance(self.threshold, str):
            if self.threshold != "sweep":
                raise ValueError(f"threshold must be a number or 'sweep', got {self.threshold!r}")
        elif not (0.0 <= self.threshold <= 1.0):
            raise ValueError("threshold must be in [0, 1]")


@dataclass
class MetricsReport:
    protocol: str
    threshold: float
    per_tag: dict[str, dict[str, float]]
    overall: float
    undefined_tags: list[str] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "protocol": self.protocol,
            "threshold": self.threshold,
            "per_tag": self.per_tag,
            "overall": self.overall,
            "undefined_tags": self.undefined_tags,
        }


def binarize(scores: Sequence[float], threshold: float) -> list[int]:
    """Step prediction: 1 (correct) iff score >= threshold."""
    return [1 if s >= threshold else 0 for s in scores]


def first_error(predictions: Sequence[int]) -> int:
    """Smallest index predicted incorrect; -1 when every step is correct."""
    for i, p in enumerate(predictions):
        if p == 0:
            return i
    return -1


def join_scores(cases: list[EvalCase], scores: list[StepScores]) -> dict[str, StepScores]:
    by_id = {s.case_id: s for s in scores}
    joined: dict[str, StepScores] = {}
    for case in cases:
        got = by_id.get(case.case_id)
        if got is None:
            raise EvalDataError(f"no scores for case {case.case_id!r}")
        if len(got.scores) != len(case.steps):
            raise EvalDataError(
                f"case {case.case_id!r}: {len(got.scores)} scores for {len(case.steps)} steps"
            )
        joined[case.case_id] = got
    return joined


def _f1(a: float, b: float) -> float:
    return 0.0 if a + b == 0 else 2 * a * b / (a + b)


def processbench_f1(
    cases: list[EvalCase],
    scores: dict[str, StepScores],
    threshold: float,
) -> tuple[dict[str, dict[str, float]], list[str]]:
    """Per-tag first-error F1: harmonic mean of exact-localization accuracy on
    erroneous samples and full-correct accuracy on correct samples. Tags
    missing one subset are reported as undefined and excluded."""
    tags: dict[str, dict[str, list[int]]] = {}
    for case in cases:
        if not isinstance(case.gold, GoldFirstError):
            raise EvalDataError(f"case {case.case_id!r}: gold is not first-error form")
        predicted = first_error(binarize(scores[case.case_id].scores, threshold))
        bucket = tags.setdefault(case.source_tag, {"err_hits": [], "corr_hits": []})
        if case.gold.index >= 0:
            bucket["err_hits"].append(1 if predicted == case.gold.index else 0)
        else:
            bucket["corr_hits"].append(1 if predicted == -1 else 0)

    per_tag: dict[str, dict[str, float]] = {}
    undefined: list[str] = []
    for tag in sorted(tags):
        err, corr = tags[tag]["err_hits"], tags[tag]["corr_hits"]
        if not err or not corr:
            undefined.append(tag)
            continue
        acc_err = sum(err) / len(err)
        acc_corr = sum(corr) / len(corr)
        per_tag[tag] = {
            "acc_erroneous": acc_err,
            "acc_correct": acc_corr,
            "f1": _f1(acc_err, acc_corr),
            "n_erroneous": float(len(err)),
            "n_correct": float(len(corr)),
        }
    return per_tag, undefined


def weighted_f1(
    cases: list[EvalCase],
    scores: dict[str, StepScores],
    threshold: float,
) -> dict[str, dict[str, float]]:
    """Per-tag support-weighted mean of per-class F1 over pooled steps."""
    pools: dict[str, list[tuple[int, int]]] = {}
    for case in cases:
        if not isinstance(case.gold, GoldSteps):
            raise EvalDataError(f"case {case.case_id!r}: gold is not per-step form")
        preds = binarize(scores[case.case_id].scores, threshold)
        pools.setdefault(case.source_tag, []).extend(zip(case.gold.labels, preds))

    per_tag: dict[str, dict[str, float]] = {}
    for tag in sorted(pools):
        pairs = pools[tag]
        total = len(pairs)
        weighted = 0.0
        metrics: dict[str, float] = {}
        for cls in (0, 1):
            support = sum(1 for g, _ in pairs if g == cls)
            tp = sum(1 for g, p in pairs if g == cls and p == cls)
            pred_cls = sum(1 for _, p in pairs if p == cls)
            precision = tp / pred_cls if pred_cls else 0.0
            recall = tp / support if support else 0.0
            f1 = _f1(precision, recall)
            metrics[f"f1_class{cls}"] = f1
            metrics[f"support_class{cls}"] = float(support)
            weighted += (support / total) * f1
        metrics["weighted_f1"] = weighted
        per_tag[tag] = metrics
    return per_tag


def _overall(per_tag: dict[str, dict[str, float]], metric: str) -> float:
    if not per_tag:
        return 0.0
    return sum(m[metric] for m in per_tag.values()) / len(per_tag)


def evaluate(
    cases: list[EvalCase],
    scores: list[StepScores],
    config: EvalConfig,
) -> MetricsReport:
    joined = join_scores(cases, scores)
    threshold = (
        select_threshold(cases, scores, config.protocol)
        if config.threshold == "sweep"
        else float(config.threshold)
    )
    if config.protocol == "processbench":
        per_tag, undefined = processbench_f1(cases, joined, threshold)
        overall = _overall(per_tag, "f1")
    else:
        per_tag = weighted_f1(cases, joined, threshold)
        undefined = []
        overall = _overall(per_tag, "weighted_f1")
    return MetricsReport(
        protocol=config.protocol,
        threshold=threshold,
        per_tag=per_tag,
        overall=overall,
        undefined_tags=undefined,
    )


def judge_baseline_scores(cases, judge_config, backend, seed: int = 0) -> list[StepScores]:
    """Optional pass-through: score cases with the judge ensemble itself,
    using each case's soft labels as its step scores. Cases the ensemble
    cannot label are skipped (callers see the shorter list)."""
    from .core import Query, SegmentedSolution
    from .judge import LabelingError, ensemble_label

    out: list[StepScores] = []
    for case in cases:
        query = Query(
            id=case.case_id,
            question=case.question,
            reference_answer=case.reference_answer or "",
        )
        solution = SegmentedSolution(
            sample_ref="".join((case.case_id, "eval", "judge_baseline", "0")),
            steps=case.steps,
            method="semantic",
        )
        try:
            labels, _ = ensemble_label(query, solution, judge_config, backend, base_seed=seed)
        except LabelingError:
            continue
        out.append(StepScores(case_id=case.case_id, scores=labels.values))
    return out


def select_threshold(
    cases: list[EvalCase],
    scores: list[StepScores],
    protocol: str,
) -> float:
    """Argmax of the protocol's overall metric over the 0.01 grid; ties take
    the smallest threshold."""
    if not cases:
        raise EvalDataError("validation set is empty")
    joined = join_scores(cases, scores)
    best_threshold = SWEEP_GRID[0]
    best_metric = float("-inf")
    for threshold in SWEEP_GRID:
        if protocol == "processbench":
            per_tag, _ = processbench_f1(cases, joined, threshold)
            metric = _overall(per_tag, "f1")
        else:
            per_tag = weighted_f1(cases, joined, threshold)
            metric = _overall(per_tag, "weighted_f1")
        if metric > best_metric:
            best_metric = metric
            best_threshold = threshold
    return best_threshold


def render_text_table(report: MetricsReport) -> str:
    """Aligned plain-text table: one column per tag plus the overall average."""
    metric_name = "f1" if report.protocol == "processbench" else "weighted_f1"
    tags = list(report.per_tag)
    headers = tags + ["Average"]
    values = [report.per_tag[t][metric_name] for t in tags] + [report.overall]
    cells = [f"{v:.4f}" for v in values]
    widths = [max(len(h), len(c)) for h, c in zip(headers, cells)]
    lines = [
        f"protocol: {report.protocol}    threshold: {report.threshold:.2f}",
        "  ".join(h.rjust(w) for h, w in zip(headers, widths)),
        "  ".join(c.rjust(w) for c, w in zip(cells, widths)),
    ]
    if report.undefined_tags:
        lines.append("undefined tags (missing a subset): " + ", ".join(report.undefined_tags))
    return "\n".join(lines) + "\n"
