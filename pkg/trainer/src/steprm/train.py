"""Seeded training loop over encoded records, with checkpoint IO."""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, field
from pathlib import Path

import torch

from .data import TrainingRecord
from .losses import hard_targets, torch_loss_ce, torch_loss_mse
from .model import EncodedExample, ModelConfig, StepScorer, TruncationError, encode, pad_batch
from .vocab import Vocab, build_vocab


class TrainingDiverged(Exception):
    def __init__(self, message: str, last_finite_step: int):
        super().__init__(message)
        self.last_finite_step = last_finite_step


@dataclass
class TrainerConfig:
    loss: str = "mse_soft"  # "mse_soft" | "ce_hard"
    learning_rate: float = 1e-3  # paper-scale runs use 1e-6
    batch_size: int = 8  # paper-scale runs use 16
    epochs: float = 10.0  # paper-scale runs use 1.5
    max_steps: int | None = None
    target_loss: float | None = None  # early stop when full-train loss dips under
    seed: int = 0
    model_size: str = "tiny"

    def __post_init__(self) -> None:
        if self.loss not in ("mse_soft", "ce_hard"):
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.model_size not in ("tiny", "small"):
            raise ValueError(f"unknown model_size {self.model_size!r}")


@dataclass
class TrainResult:
    model: StepScorer
    vocab: Vocab
    config: TrainerConfig
    loss_log: list[tuple[int, float]] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)

    @property
    def final_loss(self) -> float:
        return self.loss_log[-1][1] if self.loss_log else float("nan")


def _encode_all(
    records: list[TrainingRecord], vocab: Vocab, max_len: int
) -> tuple[list[EncodedExample], list[str]]:
    encoded, skipped = [], []
    for rec in records:
        try:
            encoded.append(encode(rec, vocab, max_len))
        except TruncationError as exc:
            skipped.append(str(exc))
    return encoded, skipped


def _batch_loss(
    model: StepScorer, batch: list[EncodedExample], loss_kind: str, device: torch.device
) -> torch.Tensor:
    tokens = pad_batch(batch, device)
    logits = model(tokens)
    losses = []
    for i, ex in enumerate(batch):
        z = logits[i, list(ex.marker_positions)]
        targets = torch.tensor(ex.targets, dtype=torch.float32, device=device)
        if loss_kind == "mse_soft":
            losses.append(torch_loss_mse(z, targets))
        else:
            hard = torch.tensor(
                hard_targets(list(ex.targets)), dtype=torch.float32, device=device
            )
            losses.append(torch_loss_ce(z, hard))
    return torch.stack(losses).mean()


def dataset_loss(
    model: StepScorer,
    vocab: Vocab,
    records: list[TrainingRecord],
    loss_kind: str = "mse_soft",
) -> float:
    """Mean per-sample loss over a whole record set (no gradients)."""
    was_training = model.training
    model.eval()
    device = next(model.parameters()).device
    total, count = 0.0, 0
    with torch.no_grad():
        for rec in records:
            try:
                ex = encode(rec, vocab, model.config.max_len)
            except TruncationError:
                continue
            total += float(_batch_loss(model, [ex], loss_kind, device))
            count += 1
    if was_training:
        model.train()
    return total / count if count else float("nan")


def train(records: list[TrainingRecord], config: TrainerConfig) -> TrainResult:
    """Deterministic-per-platform training; fractional epochs run the leading
    part of one more reshuffled pass."""
    if not records:
        raise ValueError("train set is empty")
    torch.manual_seed(config.seed)
    device = torch.device("cpu")
    vocab = build_vocab(records)
    model_config = ModelConfig.from_preset(config.model_size, vocab.size)
    model = StepScorer(model_config).to(device)
    encoded, skipped = _encode_all(records, vocab, model_config.max_len)
    if not encoded:
        raise ValueError("every record exceeded the context length")

    optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    result = TrainResult(model=model, vocab=vocab, config=config, skipped=skipped)

    step = 0
    full_passes = int(config.epochs)
    fraction = config.epochs - full_passes
    model.train()
    for epoch in range(full_passes + (1 if fraction > 0 else 0)):
        order = list(range(len(encoded)))
        random.Random(config.seed * 1_000_003 + epoch).shuffle(order)
        n_batches = (len(order) + config.batch_size - 1) // config.batch_size
        if epoch == full_passes:  # fractional tail pass
            n_batches = max(1, int(n_batches * fraction))
        for b in range(n_batches):
            batch = [encoded[i] for i in order[b * config.batch_size : (b + 1) * config.batch_size]]
            if not batch:
                break
            optimizer.zero_grad()
            loss = _batch_loss(model, batch, config.loss, device)
            if not torch.isfinite(loss):
                last = result.loss_log[-1][0] if result.loss_log else -1
                raise TrainingDiverged(f"loss became non-finite at step {step}", last)
            loss.backward()
            optimizer.step()
            result.loss_log.append((step, float(loss.item())))
            step += 1
            if config.max_steps is not None and step >= config.max_steps:
                return result
        if (
            config.target_loss is not None
            and dataset_loss(model, vocab, records, config.loss) < config.target_loss
        ):
            return result
    return result


# Checkpoint IO --------------------------------------------------------------


def _sha(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def save_checkpoint(result: TrainResult, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    torch.save(result.model.state_dict(), out / "model.pt")
    result.vocab.save(out / "vocab.json")
    config_payload = {
        "trainer": {
            "loss": result.config.loss,
            "learning_rate": result.config.learning_rate,
            "batch_size": result.config.batch_size,
            "epochs": result.config.epochs,
            "seed": result.config.seed,
            "model_size": result.config.model_size,
        },
        "model": result.model.config.to_dict(),
    }
    config_text = json.dumps(config_payload, indent=2, sort_keys=True)
    (out / "config.json").write_text(config_text + "\n", encoding="utf-8")
    manifest = {
        "config_hash": _sha(config_text),
        "vocab_hash": _sha((out / "vocab.json").read_text(encoding="utf-8")),
        "final_loss": result.final_loss,
        "steps": len(result.loss_log),
        "skipped_records": len(result.skipped),
    }
    (out / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    (out / "loss_log.jsonl").write_text(
        "\n".join(json.dumps({"step": s, "loss": l}) for s, l in result.loss_log) + "\n",
        encoding="utf-8",
    )
    return out


def load_checkpoint(ckpt_dir: str | Path) -> tuple[StepScorer, Vocab]:
    ckpt = Path(ckpt_dir)
    payload = json.loads((ckpt / "config.json").read_text(encoding="utf-8"))
    vocab = Vocab.load(ckpt / "vocab.json")
    model = StepScorer(ModelConfig(**payload["model"]))
    model.load_state_dict(torch.load(ckpt / "model.pt", weights_only=True))
    model.eval()
    return model, vocab
