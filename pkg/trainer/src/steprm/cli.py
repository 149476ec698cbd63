"""Train a step scorer on pipeline records or score eval cases with one."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .data import read_eval_cases, read_training_records
from .score import score_to_file
from .train import TrainerConfig, dataset_loss, load_checkpoint, save_checkpoint, train


def _cmd_train(args: argparse.Namespace) -> int:
    records = read_training_records(args.train)
    config = TrainerConfig(
        loss=args.loss,
        learning_rate=args.learning_rate,
        batch_size=args.batch_size,
        epochs=args.epochs,
        max_steps=args.max_steps,
        target_loss=args.target_loss,
        seed=args.seed,
        model_size=args.model_size,
    )
    result = train(records, config)
    save_checkpoint(result, args.out)
    print(f"trained {len(result.loss_log)} steps, final loss {result.final_loss:.6f}")
    if args.validation:
        val = read_training_records(args.validation)
        loss = dataset_loss(result.model, result.vocab, val, config.loss)
        print(f"validation loss {loss:.6f}")
    return 0


def _cmd_score(args: argparse.Namespace) -> int:
    model, vocab = load_checkpoint(args.checkpoint)
    cases = read_eval_cases(args.cases)
    flagged = score_to_file(
        model, vocab, cases, args.out, with_reference=not args.no_reference
    )
    print(f"scored {len(cases) - len(flagged)} cases -> {args.out}")
    for msg in flagged:
        print(f"skipped: {msg}", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="steprm", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train")
    p_train.add_argument("--train", required=True, type=Path)
    p_train.add_argument("--validation", type=Path, default=None)
    p_train.add_argument("--out", required=True, type=Path)
    p_train.add_argument("--loss", choices=["mse_soft", "ce_hard"], default="mse_soft")
    p_train.add_argument("--learning-rate", type=float, default=1e-3)
    p_train.add_argument("--batch-size", type=int, default=8)
    p_train.add_argument("--epochs", type=float, default=10.0)
    p_train.add_argument("--max-steps", type=int, default=None)
    p_train.add_argument("--target-loss", type=float, default=None)
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument("--model-size", choices=["tiny", "small"], default="tiny")
    p_train.set_defaults(fn=_cmd_train)

    p_score = sub.add_parser("score")
    p_score.add_argument("--checkpoint", required=True, type=Path)
    p_score.add_argument("--cases", required=True, type=Path)
    p_score.add_argument("--out", required=True, type=Path)
    p_score.add_argument("--no-reference", action="store_true")
    p_score.set_defaults(fn=_cmd_score)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
