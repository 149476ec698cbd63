"""Shared test helpers: brute-force oracles and synthetic-judge simulation."""

from __future__ import annotations

import random


def brute_majority(verdicts: list[tuple[int, ...]]) -> tuple[int, ...]:
    """Independent per-step majority oracle; exact ties go to 0."""
    n = len(verdicts[0])
    out = []
    for i in range(n):
        ones = sum(v[i] for v in verdicts)
        zeros = len(verdicts) - ones
        out.append(1 if ones > zeros else 0)
    return tuple(out)


def simulate_ensemble_mse(
    n_trials: int, h: int, n_steps: int, seed: int
) -> dict[str, float]:
    """Synthetic biased judges: each prompt's mode vector is a Bernoulli flip
    of a hidden truth vector at a heterogeneous per-prompt rate in [0.05, 0.35].

    Returns trial-averaged mean squared errors to the truth of the soft
    (averaged) ensemble label, the hard (majority-of-modes) label, and the
    best single prompt.
    """
    rng = random.Random(seed)
    soft_se = 0.0
    hard_se = 0.0
    single_se = [0.0] * h
    n_values = n_trials * n_steps
    for _ in range(n_trials):
        truth = [rng.randrange(2) for _ in range(n_steps)]
        flip_rates = [rng.uniform(0.05, 0.35) for _ in range(h)]
        modes = [
            tuple(t ^ (1 if rng.random() < flip_rates[ph] else 0) for t in truth)
            for ph in range(h)
        ]
        soft = [sum(m[i] for m in modes) / h for i in range(n_steps)]
        hard = brute_majority(modes)
        for i in range(n_steps):
            soft_se += (soft[i] - truth[i]) ** 2
            hard_se += (hard[i] - truth[i]) ** 2
            for ph in range(h):
                single_se[ph] += (modes[ph][i] - truth[i]) ** 2
    return {
        "soft": soft_se / n_values,
        "hard": hard_se / n_values,
        "min_single": min(se / n_values for se in single_se),
    }


def build_fixture_texts(count: int, seed: int) -> list[str]:
    """Diverse multi-step solution texts: unicode math, code fences, CRLF."""
    rng = random.Random(seed)
    flavors = ["plain", "unicode", "code", "crlf", "mixed"]
    texts = []
    for i in range(count):
        flavor = flavors[i % len(flavors)]
        n_steps = rng.randrange(2, 6)
        parts = []
        for s in range(n_steps):
            if flavor == "unicode":
                parts.append(f"Step reasoning {i}.{s}: θ_{s} = π·{s} ≈ {3.14 * s:.2f}, so Σ grows.")
            elif flavor == "code":
                parts.append(f"```python\nx_{s} = {s} ** 2  # case {i}\n```\nThus x_{s} is {s * s}.")
            elif flavor == "crlf":
                parts.append(f"Line one of part {s}.\r\nLine two of part {s}.")
            elif flavor == "mixed":
                parts.append(f"部分 {s}: compute {s}+{i} = {s + i} ✓")
            else:
                parts.append(f"First consider quantity {s}; it equals {s * 2 + i}.")
        sep = "\r\n\r\n" if flavor == "crlf" else "\n\n"
        texts.append(sep.join(parts))
    return texts
