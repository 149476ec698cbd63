"""Operator surface: subcommands tying the pipeline stages into reproducible runs.

Every command is idempotent given identical inputs and seed; under the mock
backend the whole output tree is byte-identical across runs. Each stage
writes a manifest with config/input/output hashes and skip totals. Secrets
travel only via the environment, never via config files.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from . import core, datasetgen, evaluator, genpolicy, judge, segmenter
from .backend import BackendConfig, MockBehavior, RetryPolicy

USAGE_ERROR = 2
STAGE_ERROR = 1


class UsageError(Exception):
    pass


class StageError(Exception):
    pass


# ---------------------------------------------------------------------------
# Run configuration
# ---------------------------------------------------------------------------


@dataclass
class RunConfig:
    run_id: str
    seed: int
    out_dir: Path
    queries_path: Path | None
    eval_cases_path: Path | None
    eval_scores_path: Path | None
    backend: BackendConfig
    policies: list[genpolicy.PolicySpec]
    prompts: list[genpolicy.GenPromptSpec]
    prompt_assignment: str
    samples_per_cell: int
    segmentation: segmenter.SegmentationConfig
    judge_config: judge.JudgeConfig
    dataset: datasetgen.DatasetConfig
    eval_config: evaluator.EvalConfig
    eval_scores_source: str = "file"
    max_skip_fraction: float = 1.0
    raw: dict[str, Any] = field(default_factory=dict)


def _resolve_path(base: Path, value: str | None) -> Path | None:
    if value is None:
        return None
    p = Path(value)
    return p if p.is_absolute() else (base / p)


def _build_backend(cfg: dict[str, Any], kind_override: str | None) -> BackendConfig:
    kind = cfg.get("kind", "mock")
    if kind_override:
        kind = {"http": "http_openai_compatible", "mock": "mock"}[kind_override]
    retry_cfg = cfg.get("retry", {})
    mock = None
    if kind == "mock":
        script = [
            (entry["contains"], entry["text"]) for entry in cfg.get("mock_script", [])
        ]
        mock = MockBehavior(script=script)
    return BackendConfig(
        kind=kind,
        model_name=cfg.get("model_name", "mock"),
        endpoint_url=cfg.get("endpoint_url"),
        max_concurrency=cfg.get("max_concurrency", 4),
        retry=RetryPolicy(
            max_attempts=retry_cfg.get("max_attempts", 3),
            backoff_base_ms=retry_cfg.get("backoff_base_ms", 100),
        ),
        timeout_ms=cfg.get("timeout_ms", 60_000),
        mock=mock,
    )


def load_run_config(config_path: Path, args: argparse.Namespace) -> RunConfig:
    try:
        raw = json.loads(config_path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise UsageError(f"cannot read config {config_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {config_path} is not valid JSON: {exc}") from exc

    base = config_path.parent
    io_cfg = raw.get("io", {})
    seed = args.seed if args.seed is not None else raw.get("seed", 0)
    out_dir = Path(args.out) if args.out else _resolve_path(base, io_cfg.get("out_dir", "out"))
    assert out_dir is not None

    backend_cfg = raw.get("backend", {})
    backend = _build_backend(backend_cfg, getattr(args, "backend_kind", None))

    gen_cfg = raw.get("genpolicy", {})
    policies = []
    for entry in gen_cfg.get("policies", [{"policy_id": "default-policy"}]):
        pb_cfg = dict(backend_cfg)
        pb_cfg.update({k: v for k, v in entry.items() if k in ("model_name", "endpoint_url")})
        policies.append(
            genpolicy.PolicySpec(
                policy_id=entry["policy_id"],
                backend=_build_backend(pb_cfg, getattr(args, "backend_kind", None)),
                system_prompt_id=entry.get("system_prompt_id", "default"),
            )
        )
    if "prompts" in gen_cfg:
        prompts = [
            genpolicy.GenPromptSpec(p["prompt_id"], p["template"]) for p in gen_cfg["prompts"]
        ]
    else:
        prompts = genpolicy.preset_prompts(gen_cfg.get("prompt_preset", "three_prompt"))

    seg_cfg = raw.get("segmentation", {})
    seg_shot_path = _resolve_path(base, seg_cfg.get("shot_path"))
    segmentation = segmenter.SegmentationConfig(
        long_cot_step_threshold=seg_cfg.get("long_cot_step_threshold", 50),
        merge_group_size=seg_cfg.get("merge_group_size", 5),
        max_retries=seg_cfg.get("max_retries", 2),
        normalization=seg_cfg.get("normalization", "strip_all_whitespace"),
        shot=seg_shot_path.read_text(encoding="utf-8") if seg_shot_path else "",
    )

    judge_cfg = raw.get("judge", {})
    judge_shot_path = _resolve_path(base, judge_cfg.get("shot_path"))
    judge_shot = judge_shot_path.read_text(encoding="utf-8") if judge_shot_path else None
    judge_config = judge.JudgeConfig(
        prompts=judge.load_judge_prompts(
            judge_cfg.get("prompt_ids", list(judge.DEFAULT_JUDGE_PROMPT_IDS)), judge_shot
        ),
        votes=judge_cfg.get("votes", 3),
        tie_break=judge_cfg.get("tie_break", "to_zero"),
        max_parse_retries=judge_cfg.get("max_parse_retries", 2),
    )

    ds_cfg = raw.get("dataset", {})
    dataset = datasetgen.DatasetConfig(
        p_alpha=ds_cfg.get("p_alpha", 0.5),
        seed=seed,
        validation_fraction=ds_cfg.get("validation_fraction", 0.05),
    )

    eval_cfg = raw.get("eval", {})
    protocol = getattr(args, "protocol", None) or eval_cfg.get("protocol", "processbench")
    threshold_arg = getattr(args, "threshold", None)
    if threshold_arg is not None:
        threshold: float | str = "sweep" if threshold_arg == "sweep" else float(threshold_arg)
    else:
        threshold = eval_cfg.get("threshold", "sweep")
    eval_config = evaluator.EvalConfig(protocol=protocol, threshold=threshold)
    scores_source = eval_cfg.get("scores_source", "file")
    if scores_source not in ("file", "judge_baseline"):
        raise UsageError(f"eval.scores_source must be 'file' or 'judge_baseline', got {scores_source!r}")

    run_id = raw.get("run_id", "")
    if not run_id:
        raise UsageError("config must set a non-empty run_id")

    return RunConfig(
        run_id=run_id,
        seed=seed,
        out_dir=out_dir,
        queries_path=_resolve_path(base, io_cfg.get("queries")),
        eval_cases_path=_resolve_path(base, io_cfg.get("eval_cases")),
        eval_scores_path=_resolve_path(base, io_cfg.get("eval_scores")),
        backend=backend,
        policies=policies,
        prompts=prompts,
        prompt_assignment=gen_cfg.get("prompt_assignment", "random_one_per_query"),
        samples_per_cell=gen_cfg.get("samples_per_cell", 1),
        segmentation=segmentation,
        judge_config=judge_config,
        dataset=dataset,
        eval_config=eval_config,
        eval_scores_source=scores_source,
        max_skip_fraction=raw.get("max_skip_fraction", 1.0),
        raw=raw,
    )


# ---------------------------------------------------------------------------
# Manifests and skip reports
# ---------------------------------------------------------------------------


def _sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _config_hash(params: dict[str, Any]) -> str:
    return hashlib.sha256(
        json.dumps(params, sort_keys=True, ensure_ascii=False).encode("utf-8")
    ).hexdigest()


def _write_json(path: Path, obj: dict[str, Any]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )


def _write_skips(path: Path, skips: list[genpolicy.SkipRecord]) -> None:
    core.write_jsonl(
        path,
        [{"stage": s.stage, "key": s.key, "reason": s.reason} for s in skips],
    )


def _write_manifest(
    cfg: RunConfig,
    stage: str,
    params: dict[str, Any],
    inputs: list[Path],
    outputs: list[Path],
    counts: dict[str, int],
    skip_total: int,
) -> None:
    manifest = {
        "schema": core.SCHEMA_VERSION,
        "stage": stage,
        "run_id": cfg.run_id,
        "seed": cfg.seed,
        "config_hash": _config_hash(params),
        "inputs": {p.name: _sha256_file(p) for p in inputs},
        "outputs": {p.name: _sha256_file(p) for p in outputs},
        "counts": counts,
        "skip_total": skip_total,
    }
    _write_json(cfg.out_dir / f"{stage}.manifest.json", manifest)


def _require_input(path: Path | None, what: str) -> Path:
    if path is None:
        raise UsageError(f"missing input: no {what} path configured")
    if not path.exists():
        raise UsageError(f"missing input: expected {what} at {path}")
    return path


def _check_skip_budget(
    cfg: RunConfig, stage: str, produced: int, skipped: int, expected: int
) -> None:
    skip_path = cfg.out_dir / f"{stage}.skips.jsonl"
    if expected > 0 and produced == 0:
        raise StageError(f"{stage}: every item failed; see skip report {skip_path}")
    if expected > 0 and skipped / expected > cfg.max_skip_fraction:
        raise StageError(
            f"{stage}: skip fraction {skipped}/{expected} exceeds budget; see {skip_path}"
        )


# ---------------------------------------------------------------------------
# Stage commands
# ---------------------------------------------------------------------------


def cmd_generate(cfg: RunConfig) -> Path:
    queries_path = _require_input(cfg.queries_path, "queries JSONL")
    queries = core.read_queries(queries_path)
    report = core.validate_corpus(queries)
    if not report.ok:
        first = report.violations[0]
        raise StageError(f"queries invalid: {first.record_key}.{first.field}: {first.message}")
    grid = genpolicy.generate_grid(
        queries,
        cfg.policies,
        cfg.prompts,
        prompt_assignment=cfg.prompt_assignment,
        seed=cfg.seed,
        samples_per_cell=cfg.samples_per_cell,
    )
    out = cfg.out_dir / "samples.jsonl"
    core.write_jsonl(out, grid.samples, sort_key=core.stable_key)
    _write_skips(cfg.out_dir / "generate.skips.jsonl", grid.skips)
    params = {
        "policies": [p.policy_id for p in cfg.policies],
        "prompt_ids": [p.prompt_id for p in cfg.prompts],
        "prompt_assignment": cfg.prompt_assignment,
        "samples_per_cell": cfg.samples_per_cell,
        "seed": cfg.seed,
    }
    _write_manifest(
        cfg,
        "generate",
        params,
        inputs=[queries_path],
        outputs=[out, cfg.out_dir / "generate.skips.jsonl"],
        counts={"queries": len(queries), "samples": len(grid.samples)},
        skip_total=len(grid.skips),
    )
    _check_skip_budget(
        cfg, "generate", len(grid.samples), len(grid.skips),
        len(grid.samples) + len(grid.skips),
    )
    return out


def cmd_segment(cfg: RunConfig) -> Path:
    samples_path = _require_input(cfg.out_dir / "samples.jsonl", "samples JSONL")
    samples = core.read_samples(samples_path)
    segmented: list[core.SegmentedSolution] = []
    skips: list[genpolicy.SkipRecord] = []
    for sample in samples:
        try:
            segmented.append(segmenter.segment(sample, cfg.segmentation, cfg.backend))
        except segmenter.SegmentationError as exc:
            skips.append(genpolicy.SkipRecord("segment", core.sample_ref(sample), str(exc)))
    out = cfg.out_dir / "segmented.jsonl"
    core.write_jsonl(out, segmented, sort_key=lambda s: core.ref_sort_key(s.sample_ref))
    _write_skips(cfg.out_dir / "segment.skips.jsonl", skips)
    params = {
        "long_cot_step_threshold": cfg.segmentation.long_cot_step_threshold,
        "merge_group_size": cfg.segmentation.merge_group_size,
        "max_retries": cfg.segmentation.max_retries,
        "normalization": cfg.segmentation.normalization,
        "seed": cfg.seed,
    }
    _write_manifest(
        cfg,
        "segment",
        params,
        inputs=[samples_path],
        outputs=[out, cfg.out_dir / "segment.skips.jsonl"],
        counts={
            "samples": len(samples),
            "segmented": len(segmented),
            "semantic": sum(1 for s in segmented if s.method == "semantic"),
            "delimiter_merged": sum(1 for s in segmented if s.method == "delimiter_merged"),
        },
        skip_total=len(skips),
    )
    _check_skip_budget(cfg, "segment", len(segmented), len(skips), len(samples))
    return out


def cmd_label(cfg: RunConfig) -> Path:
    segmented_path = _require_input(cfg.out_dir / "segmented.jsonl", "segmented JSONL")
    queries_path = _require_input(cfg.queries_path, "queries JSONL")
    segmented = core.read_segmented(segmented_path)
    queries = {q.id: q for q in core.read_queries(queries_path)}
    labeled: list[core.LabeledSolution] = []
    skips: list[genpolicy.SkipRecord] = []
    for sol in segmented:
        query_id = core.parse_sample_ref(sol.sample_ref)[0]
        query = queries.get(query_id)
        if query is None:
            skips.append(
                genpolicy.SkipRecord("label", sol.sample_ref, f"no query with id {query_id!r}")
            )
            continue
        try:
            labels, diag = judge.ensemble_label(
                query, sol, cfg.judge_config, cfg.backend, base_seed=cfg.seed
            )
        except judge.LabelingError as exc:
            skips.append(genpolicy.SkipRecord("label", sol.sample_ref, str(exc)))
            continue
        if diag.parse_failures:
            skips.append(
                genpolicy.SkipRecord(
                    "label",
                    sol.sample_ref,
                    "dropped slots (case still labeled): "
                    + json.dumps(diag.dropped_by_prompt, sort_keys=True),
                )
            )
        labeled.append(
            core.LabeledSolution(
                sample_ref=sol.sample_ref,
                steps=sol.steps,
                method=sol.method,
                labels=labels,
                surviving_prompts=diag.surviving_prompts,
                parse_failures=diag.parse_failures,
            )
        )
    out = cfg.out_dir / "labeled.jsonl"
    core.write_jsonl(out, labeled, sort_key=lambda s: core.ref_sort_key(s.sample_ref))
    _write_skips(cfg.out_dir / "label.skips.jsonl", skips)
    params = {
        "prompt_ids": [p.prompt_id for p in cfg.judge_config.prompts],
        "votes": cfg.judge_config.votes,
        "tie_break": cfg.judge_config.tie_break,
        "max_parse_retries": cfg.judge_config.max_parse_retries,
        "seed": cfg.seed,
    }
    _write_manifest(
        cfg,
        "label",
        params,
        inputs=[segmented_path, queries_path],
        outputs=[out, cfg.out_dir / "label.skips.jsonl"],
        counts={"segmented": len(segmented), "labeled": len(labeled)},
        skip_total=len(skips),
    )
    _check_skip_budget(cfg, "label", len(labeled), len(skips), len(segmented))
    return out


def cmd_build(cfg: RunConfig) -> tuple[Path, Path]:
    labeled_path = _require_input(cfg.out_dir / "labeled.jsonl", "labeled JSONL")
    queries_path = _require_input(cfg.queries_path, "queries JSONL")
    labeled = core.read_labeled(labeled_path)
    queries = core.read_queries(queries_path)
    result = datasetgen.build_records(labeled, queries, cfg.dataset)
    train_out = cfg.out_dir / "train.jsonl"
    val_out = cfg.out_dir / "validation.jsonl"
    core.write_jsonl(train_out, result.train)
    core.write_jsonl(val_out, result.validation)
    _write_skips(cfg.out_dir / "build.skips.jsonl", result.skips)
    dataset_manifest = {
        "p_alpha": cfg.dataset.p_alpha,
        "seed": cfg.seed,
        "train_count": len(result.train),
        "validation_count": len(result.validation),
        "alpha_fraction": result.alpha_fraction,
    }
    _write_json(cfg.out_dir / "dataset_manifest.json", dataset_manifest)
    params = {
        "p_alpha": cfg.dataset.p_alpha,
        "validation_fraction": cfg.dataset.validation_fraction,
        "seed": cfg.seed,
    }
    _write_manifest(
        cfg,
        "build",
        params,
        inputs=[labeled_path, queries_path],
        outputs=[
            train_out,
            val_out,
            cfg.out_dir / "build.skips.jsonl",
            cfg.out_dir / "dataset_manifest.json",
        ],
        counts={
            "labeled": len(labeled),
            "train": len(result.train),
            "validation": len(result.validation),
            "alpha_ones": sum(r.alpha for r in result.train + result.validation),
        },
        skip_total=len(result.skips),
    )
    _check_skip_budget(
        cfg, "build", len(result.train) + len(result.validation), len(result.skips), len(labeled)
    )
    return train_out, val_out


def cmd_eval(cfg: RunConfig) -> Path:
    cases_path = _require_input(cfg.eval_cases_path, "eval cases JSONL")
    cases = core.read_eval_cases(cases_path)
    if cfg.eval_scores_source == "judge_baseline":
        scores_path = None
        scores = evaluator.judge_baseline_scores(
            cases, cfg.judge_config, cfg.backend, seed=cfg.seed
        )
    else:
        scores_path = _require_input(cfg.eval_scores_path, "scores JSONL")
        scores = core.read_step_scores(scores_path)
    try:
        report = evaluator.evaluate(cases, scores, cfg.eval_config)
    except evaluator.EvalDataError as exc:
        raise StageError(f"eval: {exc}") from exc
    json_out = cfg.out_dir / "metrics.json"
    _write_json(json_out, report.to_json_dict())
    txt_out = cfg.out_dir / "metrics.txt"
    txt_out.parent.mkdir(parents=True, exist_ok=True)
    txt_out.write_text(evaluator.render_text_table(report), encoding="utf-8")
    params = {
        "protocol": cfg.eval_config.protocol,
        "threshold": str(cfg.eval_config.threshold),
        "scores_source": cfg.eval_scores_source,
        "seed": cfg.seed,
    }
    _write_manifest(
        cfg,
        "eval",
        params,
        inputs=[cases_path] + ([scores_path] if scores_path else []),
        outputs=[json_out, txt_out],
        counts={"cases": len(cases), "tags": len(report.per_tag)},
        skip_total=0,
    )
    return json_out


def cmd_pipeline(cfg: RunConfig) -> None:
    cmd_generate(cfg)
    cmd_segment(cfg)
    cmd_label(cfg)
    cmd_build(cfg)
    if cfg.eval_cases_path is not None and cfg.eval_scores_path is not None:
        cmd_eval(cfg)


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aurora", description="Step-labeling pipeline for reward-model training data"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("generate", "segment", "label", "build", "eval", "pipeline"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, type=Path)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None)
        p.add_argument("--backend-kind", choices=["http", "mock"], default=None)
        p.add_argument("--protocol", choices=list(evaluator.PROTOCOLS), default=None)
        p.add_argument("--threshold", default=None, help="number in [0,1] or 'sweep'")
    return parser


_COMMANDS = {
    "generate": cmd_generate,
    "segment": cmd_segment,
    "label": cmd_label,
    "build": cmd_build,
    "eval": cmd_eval,
    "pipeline": cmd_pipeline,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_run_config(args.config, args)
        _COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except StageError as exc:
        print(f"stage error: {exc}", file=sys.stderr)
        return STAGE_ERROR
    except KeyboardInterrupt:
        print("interrupted; in-flight requests drained", file=sys.stderr)
        return 130
    return 0


if __name__ == "__main__":
    sys.exit(main())
