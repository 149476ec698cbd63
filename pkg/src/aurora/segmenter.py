"""Decompose responses into semantic steps, verify content preservation,
and fall back to blank-line splitting with group merging for long CoT."""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from importlib import resources

from .backend import BackendConfig, ChatRequest, complete_detailed, segmentation_decoding
from .core import GeneratedSample, SegmentedSolution, sample_ref, stable_seed


class StepMapError(Exception):
    """LLM output does not contain a usable step map."""


class SegmentationError(Exception):
    """Sample cannot be segmented even by the fallback path."""


def _prompt_text(name: str) -> str:
    return (resources.files("aurora") / "prompts" / name).read_text(encoding="utf-8")


SEGMENTATION_SYSTEM = _prompt_text("segmentation.system.txt")
SEGMENTATION_USER_TEMPLATE = _prompt_text("segmentation.user.txt")


def default_segmentation_shot() -> str:
    return _prompt_text("segmentation_shot.txt")


@dataclass
class SegmentationConfig:
    long_cot_step_threshold: int = 50
    merge_group_size: int = 5
    max_retries: int = 2
    normalization: str = "strip_all_whitespace"
    shot: str = ""

    def __post_init__(self) -> None:
        if self.merge_group_size < 1:
            raise ValueError("merge_group_size must be >= 1")
        if self.long_cot_step_threshold < 1:
            raise ValueError("long_cot_step_threshold must be >= 1")
        if self.normalization != "strip_all_whitespace":
            raise ValueError(f"unknown normalization {self.normalization!r}")


def render_segmentation_request(sample: GeneratedSample, shot: str = "") -> ChatRequest:
    user = SEGMENTATION_USER_TEMPLATE.replace("{shot}", shot, 1)
    user = user.replace("{answer}", sample.response_text, 1)
    return ChatRequest(
        system=SEGMENTATION_SYSTEM,
        user=user,
        decoding=segmentation_decoding(),
        seed=stable_seed("segment", sample_ref(sample)),
    )


_STEP_KEY_RE = re.compile(r"^Step\s+(\d+)$")
_FENCE_RE = re.compile(r"```(?:[A-Za-z0-9_-]+)?\s*(.*?)```", re.DOTALL)


def _json_object_candidates(text: str) -> list[str]:
    """Brace-balanced {...} slices, fenced blocks first, outermost first."""
    regions = [m.group(1) for m in _FENCE_RE.finditer(text)]
    regions.append(text)
    slices: list[str] = []
    for region in regions:
        start = region.find("{")
        while start != -1:
            depth = 0
            in_string = False
            escaped = False
            for i in range(start, len(region)):
                ch = region[i]
                if in_string:
                    if escaped:
                        escaped = False
                    elif ch == "\\":
                        escaped = True
                    elif ch == '"':
                        in_string = False
                    continue
                if ch == '"':
                    in_string = True
                elif ch == "{":
                    depth += 1
                elif ch == "}":
                    depth -= 1
                    if depth == 0:
                        slices.append(region[start : i + 1])
                        break
            start = region.find("{", start + 1)
    return slices


def parse_step_map(llm_output: str) -> list[str]:
    """Extract the step map ``{"Step 1": ..., "Step 2": ...}`` from LLM output.

    Tolerates surrounding prose and code fences. Step numbers must be
    contiguous from 1 with no duplicates; step texts must be non-empty.
    """
    candidates = _json_object_candidates(llm_output)
    if not candidates:
        raise StepMapError("no JSON object found")
    last_error: Exception | None = None
    for cand in candidates:
        try:
            pairs = json.loads(cand, object_pairs_hook=lambda p: p)
        except json.JSONDecodeError as exc:
            last_error = exc
            continue
        if not isinstance(pairs, list) or not pairs:
            last_error = StepMapError("empty JSON object")
            continue
        try:
            return _pairs_to_steps(pairs)
        except StepMapError as exc:
            last_error = exc
            continue
    raise StepMapError(f"no usable step map: {last_error}")


def _pairs_to_steps(pairs: list[tuple[str, object]]) -> list[str]:
    numbered: dict[int, str] = {}
    for key, value in pairs:
        m = _STEP_KEY_RE.match(key.strip()) if isinstance(key, str) else None
        if not m:
            raise StepMapError(f"key {key!r} does not match 'Step <integer>'")
        n = int(m.group(1))
        if n in numbered:
            raise StepMapError(f"duplicate step number {n}")
        if not isinstance(value, str) or not value.strip():
            raise StepMapError(f"step {n} is not non-empty text")
        numbered[n] = value
    expected = list(range(1, len(numbered) + 1))
    if sorted(numbered) != expected:
        raise StepMapError(f"step numbers {sorted(numbered)} not contiguous from 1")
    return [numbered[n] for n in expected]


@dataclass(frozen=True)
class PreservationResult:
    ok: bool
    first_divergence: int | None = None


def normalize_text(text: str, normalization: str = "strip_all_whitespace") -> str:
    if normalization != "strip_all_whitespace":
        raise ValueError(f"unknown normalization {normalization!r}")
    return "".join(ch for ch in text if not ch.isspace())


def verify_preservation(
    original: str, steps: list[str] | tuple[str, ...], normalization: str = "strip_all_whitespace"
) -> PreservationResult:
    """Pass iff the steps concatenate back to the original under normalization."""
    norm_original = normalize_text(original, normalization)
    norm_steps = normalize_text("".join(steps), normalization)
    if norm_original == norm_steps:
        return PreservationResult(ok=True)
    for i, (a, b) in enumerate(zip(norm_original, norm_steps)):
        if a != b:
            return PreservationResult(ok=False, first_divergence=i)
    return PreservationResult(ok=False, first_divergence=min(len(norm_original), len(norm_steps)))


_BLANK_LINE_RE = re.compile(r"(?:\r?\n){2,}")


def split_blocks(text: str) -> list[str]:
    """Blank-line separated blocks, stripped, empties dropped."""
    return [b.strip() for b in _BLANK_LINE_RE.split(text) if b.strip()]


def merge_blocks(blocks: list[str], group_size: int) -> list[str]:
    """Merge consecutive groups of blocks into single steps (last may be short)."""
    return [
        "\n\n".join(blocks[i : i + group_size]) for i in range(0, len(blocks), group_size)
    ]


def fallback_step_count(block_count: int, group_size: int) -> int:
    return math.ceil(block_count / group_size)


def segment(
    sample: GeneratedSample, config: SegmentationConfig, backend: BackendConfig
) -> SegmentedSolution:
    """Segment one response; semantic LLM path first, delimiter fallback second.

    The semantic request is retried up to max_retries on parse or preservation
    failure. A semantic result whose step count exceeds long_cot_step_threshold
    is discarded in favor of the fallback.
    """
    request = render_segmentation_request(sample, config.shot)
    steps: list[str] | None = None
    for _attempt in range(config.max_retries + 1):
        res = complete_detailed(request, backend)
        if not res.ok or res.text is None:
            continue
        try:
            parsed = parse_step_map(res.text)
        except StepMapError:
            continue
        if verify_preservation(sample.response_text, parsed, config.normalization).ok:
            steps = parsed
            break

    ref = sample_ref(sample)
    if steps is not None and len(steps) <= config.long_cot_step_threshold:
        return SegmentedSolution(sample_ref=ref, steps=tuple(steps), method="semantic")

    blocks = split_blocks(sample.response_text)
    merged = merge_blocks(blocks, config.merge_group_size)
    if not merged:
        raise SegmentationError("response has no non-whitespace content")
    return SegmentedSolution(sample_ref=ref, steps=tuple(merged), method="delimiter_merged")
