"""Diverse response generation: cross policies with generation prompts and queries."""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .backend import BackendConfig, ChatRequest, complete_many, generation_decoding
from .core import GeneratedSample, Query, sample_ref, stable_key, stable_seed

SYSTEM_PROMPTS = {
    "default": "You are a helpful assistant.",
    "long_cot_a": (
        "You are a helpful and harmless assistant. You are Qwen developed by Alibaba. "
        "You should think step-by-step."
    ),
    "long_cot_b": (
        "You are an advanced AI language model specializing in solving math and programming "
        "problems step by step. Carefully analyze each part of the problem, verify the accuracy "
        "of your reasoning with relevant facts and data, and provide clear, logical solutions. "
        "Reflect on and review your approach throughout the problem-solving process to ensure "
        "precision and thoroughness. Always think through the problem step by step and provide "
        "your answers accordingly."
    ),
}

QUESTION_PROMPT_TEMPLATES = {
    "plain": "{question}",
    "step_by_step": "{question}\nLet's think step by step.\n",
    "analyze_then_solve": (
        "{question}\nFirst, deeply analyze the problem and identify key concepts and "
        "relationships, then solve it step by step with clear reasoning.\n"
    ),
}

# Two prompts match the main-run setup; three is the full listed set.
PROMPT_PRESETS = {
    "two_prompt": ("plain", "step_by_step"),
    "three_prompt": ("plain", "step_by_step", "analyze_then_solve"),
}

PLACEHOLDER = "{question}"


class TemplateError(Exception):
    pass


@dataclass(frozen=True)
class GenPromptSpec:
    prompt_id: str
    template: str

    def __post_init__(self) -> None:
        if self.template.count(PLACEHOLDER) != 1:
            raise TemplateError(
                f"prompt {self.prompt_id!r}: template must contain {PLACEHOLDER} exactly once"
            )


@dataclass
class PolicySpec:
    policy_id: str
    backend: BackendConfig
    system_prompt_id: str = "default"

    def __post_init__(self) -> None:
        if self.system_prompt_id not in SYSTEM_PROMPTS:
            raise ValueError(f"unknown system prompt id {self.system_prompt_id!r}")


def preset_prompts(preset: str) -> list[GenPromptSpec]:
    ids = PROMPT_PRESETS[preset]
    return [GenPromptSpec(pid, QUESTION_PROMPT_TEMPLATES[pid]) for pid in ids]


def render_generation_request(
    query: Query, policy: PolicySpec, prompt: GenPromptSpec, seed: int
) -> ChatRequest:
    if PLACEHOLDER not in prompt.template:
        raise TemplateError(f"prompt {prompt.prompt_id!r}: missing {PLACEHOLDER}")
    return ChatRequest(
        system=SYSTEM_PROMPTS[policy.system_prompt_id],
        user=prompt.template.replace(PLACEHOLDER, query.question, 1),
        decoding=generation_decoding(),
        seed=seed,
    )


@dataclass(frozen=True)
class SkipRecord:
    stage: str
    key: str
    reason: str


@dataclass
class GridResult:
    samples: list[GeneratedSample] = field(default_factory=list)
    skips: list[SkipRecord] = field(default_factory=list)


def assign_prompt(
    seed: int, policy_id: str, query_id: str, prompts: list[GenPromptSpec]
) -> GenPromptSpec:
    """Seeded per-(policy, query) prompt choice, independent of iteration order."""
    rng = random.Random(stable_seed(seed, "prompt_assign", policy_id, query_id))
    return prompts[rng.randrange(len(prompts))]


def generate_grid(
    queries: list[Query],
    policies: list[PolicySpec],
    prompts: list[GenPromptSpec],
    prompt_assignment: str = "random_one_per_query",
    seed: int = 0,
    samples_per_cell: int = 1,
) -> GridResult:
    """Build the generation dataset over the (policy, prompt, query) grid.

    full_cross issues every combination; random_one_per_query picks one prompt
    per (policy, query) with a seeded RNG. Backend failures land in the skip
    report instead of aborting; samples come back sorted by stable_key so
    concurrency never affects the bytes on disk.
    """
    if not queries or not policies or not prompts:
        raise ValueError("queries, policies and prompts must all be non-empty")
    if prompt_assignment not in ("full_cross", "random_one_per_query"):
        raise ValueError(f"unknown prompt_assignment {prompt_assignment!r}")
    if samples_per_cell < 1:
        raise ValueError("samples_per_cell must be >= 1")

    result = GridResult()
    for policy in policies:
        cells: list[tuple[Query, GenPromptSpec, int]] = []
        for query in queries:
            if prompt_assignment == "full_cross":
                chosen = prompts
            else:
                chosen = [assign_prompt(seed, policy.policy_id, query.id, prompts)]
            for prompt in chosen:
                for rep in range(samples_per_cell):
                    cells.append((query, prompt, rep))

        requests = []
        seeds = []
        for query, prompt, rep in cells:
            cell_seed = stable_seed(seed, "gen", query.id, policy.policy_id, prompt.prompt_id, rep)
            seeds.append(cell_seed)
            requests.append(render_generation_request(query, policy, prompt, cell_seed))
        responses = complete_many(requests, policy.backend)

        for (query, prompt, rep), cell_seed, res in zip(cells, seeds, responses):
            sample = GeneratedSample(
                query_id=query.id,
                policy_id=policy.policy_id,
                prompt_id=prompt.prompt_id,
                response_text=res.text or "",
                seed=cell_seed,
            )
            if res.ok and res.text:
                result.samples.append(sample)
            else:
                reason = res.error or "empty response"
                result.skips.append(SkipRecord("generate", sample_ref(sample), reason))

    result.samples.sort(key=stable_key)
    result.skips.sort(key=lambda s: s.key)
    return result
