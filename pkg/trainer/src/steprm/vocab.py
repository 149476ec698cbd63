"""Word-level vocabulary built from the training corpus."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

from .data import TrainingRecord

PAD, BOS, REF, STEP, UNK = 0, 1, 2, 3, 4
SPECIALS = ("[PAD]", "[BOS]", "[REF]", "[STEP]", "[UNK]")

_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text)


@dataclass
class Vocab:
    token_to_id: dict[str, int]

    @property
    def size(self) -> int:
        return len(self.token_to_id) + len(SPECIALS)

    def encode(self, text: str) -> list[int]:
        offset = len(SPECIALS)
        out = []
        for tok in tokenize(text):
            idx = self.token_to_id.get(tok)
            out.append(UNK if idx is None else idx + offset)
        return out

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.token_to_id, ensure_ascii=False, sort_keys=True),
            encoding="utf-8",
        )

    @classmethod
    def load(cls, path: str | Path) -> "Vocab":
        return cls(token_to_id=json.loads(Path(path).read_text(encoding="utf-8")))


def build_vocab(records: list[TrainingRecord]) -> Vocab:
    """Sorted-unique tokens over questions, references, and steps."""
    seen: set[str] = set()
    for rec in records:
        seen.update(tokenize(rec.question))
        if rec.reference_answer:
            seen.update(tokenize(rec.reference_answer))
        for step in rec.steps:
            seen.update(tokenize(step))
    return Vocab(token_to_id={tok: i for i, tok in enumerate(sorted(seen))})
