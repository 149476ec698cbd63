"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line (run with -s or -rA to see them on success)."""

import functools
import hashlib
import json
import math
import random
import re
import time
from pathlib import Path

import pytest

from aurora import core
from aurora.backend import mock_behavior
from aurora.cli import main as cli_main
from aurora.core import EvalCase, GoldFirstError, GoldSteps, StepScores
from aurora.datasetgen import DatasetConfig, draw_alpha
from aurora.evaluator import join_scores, processbench_f1, weighted_f1
from aurora.judge import DisPromptSpec, JudgeConfig, ensemble_label
from aurora.segmenter import (
    SegmentationConfig,
    merge_blocks,
    segment,
    split_blocks,
    verify_preservation,
)
from helpers import brute_majority, build_fixture_texts, simulate_ensemble_mse

FIXTURE_DIR = Path(__file__).resolve().parent.parent / "fixtures" / "pipeline"
SEP = ""

# Frozen goldens (first seeded runs)
VARIANCE_GOLDEN = {
    "soft": 0.09055555555555177,
    "hard": 0.09933333333333333,
    "min_single": 0.19083333333333333,
}
ALPHA_GOLDEN_ONES = 4988
ORACLE_SEED = 424242
SHIPPED_SEED = 20240501


def criterion(name):
    def decorate(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            try:
                fn(*args, **kwargs)
            except BaseException:
                print(f"[FAIL] {name}")
                raise
            print(f"[PASS] {name}")
        return wrapper
    return decorate


# ---------------------------------------------------------------------------
# Ensemble labeling
# ---------------------------------------------------------------------------

_QUERY = core.Query(id="q1", question="What is 6 * 7?", reference_answer="42")
_STEP_RE = re.compile(r'"Step \d+"')


def _bits_from_seed(seed: int, n: int) -> tuple[int, ...]:
    rng = random.Random(seed)
    return tuple(rng.randrange(2) for _ in range(n))


def _seeded_fallback(request) -> str:
    n = len(_STEP_RE.findall(request.user))
    bits = _bits_from_seed(request.seed, n)
    return "judge_result=[" + ",".join(str(b) for b in bits) + "]"


def _tiny_prompt(pid: str, marker: str) -> DisPromptSpec:
    return DisPromptSpec(
        prompt_id=pid,
        system_template=f"{marker} grader",
        user_template="q={question} ref={ground_truth_solution} sol={student_solution}",
    )


@criterion("ensemble oracle equivalence: 10k random instances, exact, < 10 s")
def test_ensemble_oracle_equivalence_10k() -> None:
    prompt_cache: dict[int, list[DisPromptSpec]] = {}

    def prompts_for(h: int) -> list[DisPromptSpec]:
        if h not in prompt_cache:
            prompt_cache[h] = [_tiny_prompt(f"p{i}", f"PROMPT_{i}") for i in range(h)]
        return prompt_cache[h]

    backend = mock_behavior(fallback=_seeded_fallback, max_concurrency=1)
    rng = random.Random(ORACLE_SEED)
    started = time.perf_counter()
    for trial in range(10_000):
        n_steps = rng.randrange(1, 9)
        h = rng.randrange(1, 6)
        g = rng.randrange(1, 8)
        ref = SEP.join((f"q{trial}", "pol", "plain", str(trial)))
        sol = core.SegmentedSolution(
            sample_ref=ref, steps=tuple(f"t{i}" for i in range(n_steps)), method="semantic"
        )
        prompts = prompts_for(h)
        labels, _ = ensemble_label(
            _QUERY, sol, JudgeConfig(prompts=prompts, votes=g), backend, base_seed=trial
        )
        modes = [
            brute_majority(
                [
                    _bits_from_seed(
                        core.stable_seed(trial, "judge", ref, p.prompt_id, g_i, 0), n_steps
                    )
                    for g_i in range(g)
                ]
            )
            for p in prompts
        ]
        expected = tuple(sum(m[i] for m in modes) / h for i in range(n_steps))
        assert labels.values == expected
    elapsed = time.perf_counter() - started
    assert elapsed < 10.0, f"oracle equivalence run took {elapsed:.2f}s"


@criterion("ensemble hand cases: H=2 average, H=1/G=1 identity, unanimity (grid-exact)")
def test_ensemble_hand_cases() -> None:
    sol2 = core.SegmentedSolution(
        sample_ref=SEP.join(("q1", "pol", "plain", "1")), steps=("a", "b"), method="semantic"
    )
    backend = mock_behavior(
        script=[("PROMPT_A", "judge_result=[1, 0]"), ("PROMPT_B", "judge_result=[1, 1]")]
    )
    prompts = [_tiny_prompt("pa", "PROMPT_A"), _tiny_prompt("pb", "PROMPT_B")]
    labels, _ = ensemble_label(_QUERY, sol2, JudgeConfig(prompts=prompts, votes=1), backend)
    assert labels.values == (1.0, 0.5)

    sol3 = core.SegmentedSolution(
        sample_ref=SEP.join(("q1", "pol", "plain", "2")), steps=("a", "b", "c"), method="semantic"
    )
    backend_one = mock_behavior(script=[("PROMPT_A", "judge_result=[1,1,0]")])
    labels_one, _ = ensemble_label(
        _QUERY, sol3, JudgeConfig(prompts=[_tiny_prompt("pa", "PROMPT_A")], votes=1), backend_one
    )
    assert labels_one.values == (1.0, 1.0, 0.0)

    sol1 = core.SegmentedSolution(
        sample_ref=SEP.join(("q1", "pol", "plain", "3")), steps=("a",), method="semantic"
    )
    backend_unanimous = mock_behavior(
        script=[(f"PROMPT_{i}", "judge_result=[1]") for i in range(3)]
    )
    unanimous, _ = ensemble_label(
        _QUERY,
        sol1,
        JudgeConfig(prompts=[_tiny_prompt(f"p{i}", f"PROMPT_{i}") for i in range(3)], votes=3),
        backend_unanimous,
    )
    assert unanimous.values == (1.0,)


@criterion("variance reduction: soft <= min single prompt and soft <= hard over 1000 trials")
def test_variance_reduction_1000_trials() -> None:
    mse = simulate_ensemble_mse(n_trials=1000, h=3, n_steps=6, seed=SHIPPED_SEED)
    assert mse["soft"] <= mse["min_single"]
    assert mse["soft"] <= mse["hard"]
    for key, frozen in VARIANCE_GOLDEN.items():
        assert mse[key] == pytest.approx(frozen, abs=1e-12), key


# ---------------------------------------------------------------------------
# Segmentation
# ---------------------------------------------------------------------------


@criterion("segmentation preservation on 50 fixtures; 1-char mutations detected 50/50")
def test_segmentation_preservation_and_mutation_detection() -> None:
    texts = build_fixture_texts(50, seed=1234)
    backend = mock_behavior()
    config = SegmentationConfig()
    rng = random.Random(5678)
    detected = 0
    for i, text in enumerate(texts):
        sample = core.GeneratedSample(
            query_id=f"q{i:03d}", policy_id="pol", prompt_id="plain",
            response_text=text, seed=i,
        )
        sol = segment(sample, config, backend)
        assert verify_preservation(text, sol.steps, config.normalization).ok

        steps = list(sol.steps)
        step_idx = rng.randrange(len(steps))
        chars = list(steps[step_idx])
        positions = [p for p, ch in enumerate(chars) if not ch.isspace()]
        pos = positions[rng.randrange(len(positions))]
        chars[pos] = "Ω" if chars[pos] != "Ω" else "X"
        steps[step_idx] = "".join(chars)
        if not verify_preservation(text, steps, config.normalization).ok:
            detected += 1
    assert detected == 50


@criterion("fallback arithmetic: 120 blocks / group 5 -> 24 steps; ceil(B/g) property")
def test_fallback_arithmetic() -> None:
    text = "\n\n".join(f"block {i}" for i in range(120))
    blocks = split_blocks(text)
    merged = merge_blocks(blocks, 5)
    assert len(merged) == 24
    assert verify_preservation(text, merged).ok

    rng = random.Random(31337)
    for _ in range(300):
        b = rng.randrange(1, 1001)
        g = rng.randrange(1, 11)
        blocks = [f"content {j};" for j in range(b)]
        merged = merge_blocks(blocks, g)
        assert len(merged) == math.ceil(b / g)
        assert verify_preservation("".join(blocks), merged).ok


# ---------------------------------------------------------------------------
# Evaluation protocols
# ---------------------------------------------------------------------------


def _fe_case(case_id: str, n: int, gold_index: int) -> EvalCase:
    return EvalCase(
        case_id=case_id, question="q", reference_answer="r",
        steps=tuple(f"s{i}" for i in range(n)),
        gold=GoldFirstError(index=gold_index), source_tag="synthetic",
    )


@criterion("first-error F1 arithmetic: 4/7 fixture, symmetric 0.5, degenerate 0")
def test_processbench_f1_arithmetic() -> None:
    cases = [
        _fe_case("e1", 3, 1), _fe_case("e2", 3, 2), _fe_case("e3", 3, 0),
        _fe_case("c1", 2, -1), _fe_case("c2", 2, -1),
    ]
    scores = [
        StepScores("e1", (0.9, 0.1, 0.9)), StepScores("e2", (0.9, 0.9, 0.1)),
        StepScores("e3", (0.9, 0.1, 0.1)), StepScores("c1", (0.9, 0.9)),
        StepScores("c2", (0.9, 0.2)),
    ]
    per_tag, _ = processbench_f1(cases, join_scores(cases, scores), 0.5)
    assert abs(per_tag["synthetic"]["f1"] - 4 / 7) < 1e-9

    sym_cases = [
        _fe_case("e1", 2, 0), _fe_case("e2", 2, 1),
        _fe_case("c1", 2, -1), _fe_case("c2", 2, -1),
    ]
    sym_scores = [
        StepScores("e1", (0.1, 0.9)), StepScores("e2", (0.1, 0.9)),
        StepScores("c1", (0.9, 0.9)), StepScores("c2", (0.1, 0.9)),
    ]
    sym, _ = processbench_f1(sym_cases, join_scores(sym_cases, sym_scores), 0.5)
    assert abs(sym["synthetic"]["f1"] - 0.5) < 1e-9

    deg_cases = [_fe_case("e1", 2, 0), _fe_case("c1", 2, -1)]
    deg_scores = [StepScores("e1", (0.1, 0.9)), StepScores("c1", (0.1, 0.9))]
    deg, _ = processbench_f1(deg_cases, join_scores(deg_cases, deg_scores), 0.5)
    assert deg["synthetic"]["acc_erroneous"] == 1.0
    assert deg["synthetic"]["acc_correct"] == 0.0
    assert deg["synthetic"]["f1"] == 0.0


def _brute_weighted_f1(pairs: list[tuple[int, int]]) -> float:
    total = len(pairs)
    out = 0.0
    for cls in (0, 1):
        tp = sum(1 for g, p in pairs if g == cls and p == cls)
        fp = sum(1 for g, p in pairs if g != cls and p == cls)
        fn = sum(1 for g, p in pairs if g == cls and p != cls)
        support = tp + fn
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        out += (support / total) * f1
    return out


@criterion("weighted F1 arithmetic: 0.7333 hand case; 1000-fixture oracle equivalence, exact")
def test_weighted_f1_arithmetic_and_oracle() -> None:
    cases = [
        EvalCase("c1", "q", "r", ("s0", "s1", "s2", "s3"),
                 GoldSteps(labels=(1, 1, 0, 0)), "synthetic")
    ]
    scores = [StepScores("c1", (0.9, 0.1, 0.1, 0.1))]
    per_tag = weighted_f1(cases, join_scores(cases, scores), 0.5)
    assert abs(per_tag["synthetic"]["weighted_f1"] - 11 / 15) < 1e-9

    rng = random.Random(777)
    for trial in range(1000):
        n = rng.randrange(1, 201)
        gold = tuple(rng.randrange(2) for _ in range(n))
        raw = tuple(rng.random() for _ in range(n))
        case = EvalCase(f"c{trial}", "q", "r", tuple(f"s{i}" for i in range(n)),
                        GoldSteps(labels=gold), "synthetic")
        sc = [StepScores(f"c{trial}", raw)]
        got = weighted_f1([case], join_scores([case], sc), 0.5)
        preds = [1 if s >= 0.5 else 0 for s in raw]
        assert got["synthetic"]["weighted_f1"] == _brute_weighted_f1(list(zip(gold, preds)))


# ---------------------------------------------------------------------------
# Reference masking
# ---------------------------------------------------------------------------


@criterion("reference masking: frozen 0.4988 fraction at shipped seed; p in {0,1} exact")
def test_bernoulli_masking() -> None:
    cfg = DatasetConfig(p_alpha=0.5, seed=SHIPPED_SEED)
    ones = 0
    for i in range(10_000):
        qid = f"q{i // 2:05d}"
        ones += draw_alpha(cfg, qid, SEP.join((qid, "pol", "plain", str(i))))
    assert ones == ALPHA_GOLDEN_ONES
    assert 0.48 <= ones / 10_000 <= 0.52

    all_on = DatasetConfig(p_alpha=1.0, seed=SHIPPED_SEED)
    all_off = DatasetConfig(p_alpha=0.0, seed=SHIPPED_SEED)
    for i in range(500):
        ref = SEP.join((f"q{i}", "pol", "plain", str(i)))
        assert draw_alpha(all_on, f"q{i}", ref) == 1
        assert draw_alpha(all_off, f"q{i}", ref) == 0


# ---------------------------------------------------------------------------
# End-to-end determinism
# ---------------------------------------------------------------------------


def _tree_hashes(out_dir: Path) -> dict[str, str]:
    return {
        p.name: hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(out_dir.iterdir())
        if p.is_file()
    }


@criterion("end-to-end determinism: byte-identical pipeline trees, golden match, < 60 s")
def test_pipeline_determinism(tmp_path) -> None:
    config = FIXTURE_DIR / "run_config.json"
    started = time.perf_counter()
    out1, out2 = tmp_path / "run1", tmp_path / "run2"
    assert cli_main(["pipeline", "--config", str(config), "--out", str(out1)]) == 0
    assert cli_main(["pipeline", "--config", str(config), "--out", str(out2)]) == 0
    elapsed = time.perf_counter() - started
    tree1, tree2 = _tree_hashes(out1), _tree_hashes(out2)
    assert tree1 == tree2
    golden = json.loads((FIXTURE_DIR / "golden_tree.json").read_text())
    assert tree1 == golden
    assert elapsed < 60.0, f"pipeline runs took {elapsed:.2f}s"
