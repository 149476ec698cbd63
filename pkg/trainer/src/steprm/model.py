"""Tiny causal transformer with a scalar reward head read at step boundaries."""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from .data import TrainingRecord
from .vocab import BOS, PAD, REF, STEP, Vocab

# Inference logits are clamped so sigmoid stays strictly inside (0, 1)
# in float32.
LOGIT_CLAMP = 12.0

PRESETS = {
    "tiny": {"d_model": 32, "n_heads": 4, "n_layers": 2, "max_len": 160},
    "small": {"d_model": 64, "n_heads": 4, "n_layers": 3, "max_len": 320},
}


class TruncationError(Exception):
    """Encoded sequence exceeds the model's context length."""


@dataclass(frozen=True)
class EncodedExample:
    tokens: tuple[int, ...]
    marker_positions: tuple[int, ...]
    targets: tuple[float, ...]


def encode(
    record: TrainingRecord, vocab: Vocab, max_len: int, with_reference: bool | None = None
) -> EncodedExample:
    """[BOS] question ([REF] reference)? (step [STEP])* with one target per marker.

    The reference span appears only when the record's alpha gate is on (or the
    explicit with_reference override says so); a boundary marker follows each
    step's final token and carries that step's target.
    """
    include_ref = record.alpha == 1 if with_reference is None else with_reference
    tokens: list[int] = [BOS]
    tokens.extend(vocab.encode(record.question))
    if include_ref and record.reference_answer is not None:
        tokens.append(REF)
        tokens.extend(vocab.encode(record.reference_answer))
    markers: list[int] = []
    for step in record.steps:
        tokens.extend(vocab.encode(step))
        tokens.append(STEP)
        markers.append(len(tokens) - 1)
    if len(tokens) > max_len:
        raise TruncationError(
            f"{record.query_id}: {len(tokens)} tokens exceed context length {max_len}"
        )
    return EncodedExample(
        tokens=tuple(tokens),
        marker_positions=tuple(markers),
        targets=tuple(record.labels),
    )


@dataclass
class ModelConfig:
    vocab_size: int
    d_model: int = 32
    n_heads: int = 4
    n_layers: int = 2
    max_len: int = 160

    @classmethod
    def from_preset(cls, preset: str, vocab_size: int) -> "ModelConfig":
        return cls(vocab_size=vocab_size, **PRESETS[preset])

    def to_dict(self) -> dict:
        return {
            "vocab_size": self.vocab_size,
            "d_model": self.d_model,
            "n_heads": self.n_heads,
            "n_layers": self.n_layers,
            "max_len": self.max_len,
        }


class StepScorer(nn.Module):
    """Causal encoder over tokens; the head emits one pre-activation per
    position, read at the step-boundary markers."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.tok_emb = nn.Embedding(config.vocab_size, config.d_model, padding_idx=PAD)
        self.pos_emb = nn.Embedding(config.max_len, config.d_model)
        layer = nn.TransformerEncoderLayer(
            d_model=config.d_model,
            nhead=config.n_heads,
            dim_feedforward=4 * config.d_model,
            dropout=0.0,
            batch_first=True,
            norm_first=True,
        )
        self.encoder = nn.TransformerEncoder(layer, config.n_layers, enable_nested_tensor=False)
        self.head = nn.Linear(config.d_model, 1)

    def forward(self, tokens: torch.Tensor) -> torch.Tensor:
        """tokens [B, T] -> pre-activations [B, T]; PAD positions are masked."""
        b, t = tokens.shape
        positions = torch.arange(t, device=tokens.device).unsqueeze(0).expand(b, t)
        x = self.tok_emb(tokens) + self.pos_emb(positions)
        causal = torch.triu(
            torch.ones(t, t, dtype=torch.bool, device=tokens.device), diagonal=1
        )
        padding_mask = tokens == PAD
        x = self.encoder(x, mask=causal, src_key_padding_mask=padding_mask)
        return self.head(x).squeeze(-1)


def pad_batch(examples: list[EncodedExample], device: torch.device) -> torch.Tensor:
    width = max(len(ex.tokens) for ex in examples)
    out = torch.full((len(examples), width), PAD, dtype=torch.long, device=device)
    for i, ex in enumerate(examples):
        out[i, : len(ex.tokens)] = torch.tensor(ex.tokens, dtype=torch.long, device=device)
    return out
