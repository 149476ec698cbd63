"""Ensemble step labeling: G sampled verdicts per grading prompt, per-step
majority within a prompt, then elementwise average across prompts."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources

from .backend import BackendConfig, ChatRequest, complete_many, judging_decoding
from .core import Query, SegmentedSolution, SoftLabelVector, stable_seed


class JudgeError(Exception):
    pass


class VerdictParseError(JudgeError):
    """No judge_result list, or one containing tokens other than 0/1."""


class VerdictLengthError(JudgeError):
    """judge_result list length does not match the step count."""


class LabelingError(JudgeError):
    """Every prompt failed for this case; no label can be produced."""


def _prompt_text(name: str) -> str:
    return (resources.files("aurora") / "prompts" / name).read_text(encoding="utf-8")


JUDGE_PROMPT_IDS = ("zero_shot", "one_shot_a", "reread", "one_shot_b")
DEFAULT_JUDGE_PROMPT_IDS = ("zero_shot", "one_shot_a", "one_shot_b")

_PLACEHOLDERS = ("{question}", "{ground_truth_solution}", "{student_solution}")


@dataclass(frozen=True)
class DisPromptSpec:
    prompt_id: str
    system_template: str
    user_template: str
    shot: str | None = None

    def __post_init__(self) -> None:
        combined = self.system_template + "\n" + self.user_template
        for ph in _PLACEHOLDERS:
            if combined.count(ph) != 1:
                raise ValueError(
                    f"judge prompt {self.prompt_id!r}: {ph} must appear exactly once"
                )


def default_judge_shot() -> str:
    return _prompt_text("judge_shot.txt")


def load_judge_prompt(prompt_id: str, shot: str | None = None) -> DisPromptSpec:
    if prompt_id not in JUDGE_PROMPT_IDS:
        raise ValueError(f"unknown judge prompt id {prompt_id!r}")
    system = _prompt_text(f"judge/{prompt_id}.system.txt")
    user = _prompt_text(f"judge/{prompt_id}.user.txt")
    needs_shot = "{shot}" in system or "{shot}" in user
    if needs_shot and shot is None:
        shot = default_judge_shot()
    return DisPromptSpec(prompt_id=prompt_id, system_template=system, user_template=user, shot=shot)


def load_judge_prompts(
    prompt_ids: tuple[str, ...] | list[str] = DEFAULT_JUDGE_PROMPT_IDS,
    shot: str | None = None,
) -> list[DisPromptSpec]:
    return [load_judge_prompt(pid, shot) for pid in prompt_ids]


@dataclass
class JudgeConfig:
    prompts: list[DisPromptSpec] = field(default_factory=load_judge_prompts)
    votes: int = 3
    tie_break: str = "to_zero"
    max_parse_retries: int = 2

    def __post_init__(self) -> None:
        if not self.prompts:
            raise ValueError("need at least one judge prompt")
        if self.votes < 1:
            raise ValueError("votes must be >= 1")
        if self.tie_break != "to_zero":
            raise ValueError(f"unknown tie_break {self.tie_break!r}")


@dataclass(frozen=True)
class VerdictVector:
    bits: tuple[int, ...]

    def __post_init__(self) -> None:
        for b in self.bits:
            if b not in (0, 1):
                raise ValueError(f"verdict bit {b!r} not in {{0,1}}")


def serialize_steps(steps: tuple[str, ...] | list[str]) -> str:
    """Step-map JSON for the {student_solution} slot; matches segmenter keys."""
    return json.dumps(
        {f"Step {i}": s for i, s in enumerate(steps, start=1)}, ensure_ascii=False
    )


def _fill(template: str, mapping: dict[str, str]) -> str:
    out = template
    for key, value in mapping.items():
        out = out.replace(key, value, 1)
    return out


def render_judge_request(
    query: Query, solution: SegmentedSolution, prompt: DisPromptSpec, seed: int
) -> ChatRequest:
    mapping = {
        "{shot}": prompt.shot or "",
        "{question}": query.question,
        "{ground_truth_solution}": query.reference_answer,
        "{student_solution}": serialize_steps(solution.steps),
    }
    return ChatRequest(
        system=_fill(prompt.system_template, mapping),
        user=_fill(prompt.user_template, mapping),
        decoding=judging_decoding(),
        seed=seed,
    )


_VERDICT_RE = re.compile(r"judge_result\s*=\s*\[([^\[\]]*)\]")


def parse_verdict(llm_output: str, expected_len: int) -> VerdictVector:
    """Bits from the LAST judge_result=[...] occurrence in the output."""
    matches = _VERDICT_RE.findall(llm_output)
    if not matches:
        raise VerdictParseError("no judge_result list found")
    tokens = [t.strip() for t in matches[-1].split(",")]
    bits: list[int] = []
    for tok in tokens:
        if tok == "0":
            bits.append(0)
        elif tok == "1":
            bits.append(1)
        else:
            raise VerdictParseError(f"judge_result token {tok!r} is not 0 or 1")
    if len(bits) != expected_len:
        raise VerdictLengthError(f"expected {expected_len} verdicts, got {len(bits)}")
    return VerdictVector(bits=tuple(bits))


def majority_mode(verdicts: list[VerdictVector]) -> VerdictVector:
    """Per-step majority across sampled verdicts; exact ties go to 0."""
    if not verdicts:
        raise JudgeError("majority_mode needs at least one verdict")
    n = len(verdicts[0].bits)
    for v in verdicts:
        if len(v.bits) != n:
            raise JudgeError("verdict length mismatch")
    bits = []
    for i in range(n):
        ones = sum(v.bits[i] for v in verdicts)
        bits.append(1 if 2 * ones > len(verdicts) else 0)
    return VerdictVector(bits=tuple(bits))


def average_modes(modes: list[VerdictVector]) -> tuple[float, ...]:
    """Elementwise mean of the per-prompt mode vectors; values land on k/H."""
    if not modes:
        raise JudgeError("average_modes needs at least one mode vector")
    n = len(modes[0].bits)
    h = len(modes)
    return tuple(sum(m.bits[i] for m in modes) / h for i in range(n))


@dataclass(frozen=True)
class LabelDiagnostics:
    surviving_prompts: int
    parse_failures: int
    dropped_by_prompt: dict[str, int]


def ensemble_label(
    query: Query,
    solution: SegmentedSolution,
    config: JudgeConfig,
    backend: BackendConfig,
    base_seed: int = 0,
) -> tuple[SoftLabelVector, LabelDiagnostics]:
    """Soft labels for one segmented solution via the prompt ensemble.

    Each of the H prompts contributes G verdict slots. A slot is re-requested
    with a fresh seed up to max_parse_retries times on transport or parse
    failure, then dropped. Prompts whose every slot drops are excluded and the
    averaging divisor becomes the surviving prompt count.
    """
    n_steps = len(solution.steps)
    # (system, user) is identical across a prompt's G slots; render each once.
    rendered = [
        render_judge_request(query, solution, prompt, seed=0) for prompt in config.prompts
    ]
    slots: list[tuple[int, int]] = [
        (h, g) for h in range(len(config.prompts)) for g in range(config.votes)
    ]
    resolved: dict[tuple[int, int], VerdictVector] = {}
    pending = list(slots)
    for attempt in range(config.max_parse_retries + 1):
        if not pending:
            break
        requests = []
        for h, g in pending:
            seed = stable_seed(
                base_seed, "judge", solution.sample_ref, config.prompts[h].prompt_id, g, attempt
            )
            requests.append(
                ChatRequest(
                    system=rendered[h].system,
                    user=rendered[h].user,
                    decoding=rendered[h].decoding,
                    seed=seed,
                )
            )
        results = complete_many(requests, backend)
        still_pending = []
        for (h, g), res in zip(pending, results):
            if res.ok and res.text is not None:
                try:
                    resolved[(h, g)] = parse_verdict(res.text, n_steps)
                    continue
                except (VerdictParseError, VerdictLengthError):
                    pass
            still_pending.append((h, g))
        pending = still_pending

    dropped_by_prompt: dict[str, int] = {}
    modes: list[VerdictVector] = []
    dropped_slots = 0
    for h, prompt in enumerate(config.prompts):
        verdicts = [resolved[(h, g)] for g in range(config.votes) if (h, g) in resolved]
        dropped = config.votes - len(verdicts)
        dropped_slots += dropped
        if dropped:
            dropped_by_prompt[prompt.prompt_id] = dropped
        if verdicts:
            modes.append(majority_mode(verdicts))
    if not modes:
        raise LabelingError(f"all judge prompts failed for {solution.sample_ref!r}")

    labels = SoftLabelVector(
        values=average_modes(modes),
        prompt_count=len(modes),
        votes_per_prompt=config.votes,
    )
    diagnostics = LabelDiagnostics(
        surviving_prompts=len(modes),
        parse_failures=dropped_slots,
        dropped_by_prompt=dropped_by_prompt,
    )
    return labels, diagnostics
