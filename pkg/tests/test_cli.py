import hashlib
import json
from pathlib import Path

from aurora.cli import main

FIXTURE_DIR = Path(__file__).resolve().parent.parent / "fixtures" / "pipeline"
CONFIG = FIXTURE_DIR / "run_config.json"


def _tree_hashes(out_dir: Path) -> dict[str, str]:
    return {
        p.name: hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(out_dir.iterdir())
        if p.is_file()
    }


def test_pipeline_runs_and_matches_golden_tree(tmp_path) -> None:
    out = tmp_path / "run"
    assert main(["pipeline", "--config", str(CONFIG), "--out", str(out)]) == 0
    golden = json.loads((FIXTURE_DIR / "golden_tree.json").read_text())
    assert _tree_hashes(out) == golden


def test_pipeline_rerun_is_idempotent(tmp_path) -> None:
    out = tmp_path / "run"
    assert main(["pipeline", "--config", str(CONFIG), "--out", str(out)]) == 0
    first = _tree_hashes(out)
    assert main(["pipeline", "--config", str(CONFIG), "--out", str(out)]) == 0
    assert _tree_hashes(out) == first


def test_eval_command_reproduces_hand_computed_table(tmp_path) -> None:
    out = tmp_path / "run"
    assert main(["eval", "--config", str(CONFIG), "--out", str(out)]) == 0
    report = json.loads((out / "metrics.json").read_text())
    assert abs(report["per_tag"]["synthetic"]["f1"] - 4 / 7) < 1e-9
    assert "0.5714" in (out / "metrics.txt").read_text()


def test_eval_threshold_flag_override(tmp_path) -> None:
    out = tmp_path / "run"
    assert main(["eval", "--config", str(CONFIG), "--out", str(out), "--threshold", "sweep"]) == 0
    report = json.loads((out / "metrics.json").read_text())
    assert 0.0 <= report["threshold"] <= 1.0


def test_missing_input_is_usage_error(tmp_path, capsys) -> None:
    out = tmp_path / "run"
    # segment before generate: samples.jsonl does not exist yet
    code = main(["segment", "--config", str(CONFIG), "--out", str(out)])
    assert code == 2
    err = capsys.readouterr().err
    assert "samples.jsonl" in err


def test_bad_config_path_is_usage_error(tmp_path) -> None:
    assert main(["pipeline", "--config", str(tmp_path / "nope.json")]) == 2


def test_stage_commands_run_individually(tmp_path) -> None:
    out = tmp_path / "run"
    for command in ("generate", "segment", "label", "build", "eval"):
        assert main([command, "--config", str(CONFIG), "--out", str(out)]) == 0
    assert (out / "train.jsonl").exists()
    assert (out / "metrics.json").exists()


def test_manifest_lists_every_output_with_hash(tmp_path) -> None:
    out = tmp_path / "run"
    main(["generate", "--config", str(CONFIG), "--out", str(out)])
    manifest = json.loads((out / "generate.manifest.json").read_text())
    assert set(manifest["outputs"]) == {"samples.jsonl", "generate.skips.jsonl"}
    for name, digest in manifest["outputs"].items():
        assert hashlib.sha256((out / name).read_bytes()).hexdigest() == digest
    assert manifest["counts"]["samples"] == 20
    assert manifest["skip_total"] == 0


def test_eval_judge_baseline_scores_source(tmp_path) -> None:
    cfg = json.loads(CONFIG.read_text())
    cfg["io"]["queries"] = str(FIXTURE_DIR / "queries.jsonl")
    cfg["io"]["eval_cases"] = str(FIXTURE_DIR / "eval_cases.jsonl")
    del cfg["io"]["eval_scores"]
    cfg["eval"] = {"protocol": "processbench", "threshold": 0.5, "scores_source": "judge_baseline"}
    config_path = tmp_path / "config.json"
    config_path.write_text(json.dumps(cfg))
    out = tmp_path / "run"
    assert main(["eval", "--config", str(config_path), "--out", str(out)]) == 0
    report = json.loads((out / "metrics.json").read_text())
    assert report["protocol"] == "processbench"
    manifest = json.loads((out / "eval.manifest.json").read_text())
    assert list(manifest["inputs"]) == ["eval_cases.jsonl"]


def test_skips_alone_do_not_fail_the_run(tmp_path) -> None:
    # one query whose generation cell fails via a scripted error marker
    cfg = json.loads(CONFIG.read_text())
    cfg["backend"]["mock_script"] = [{"contains": "What is 12 × 3?", "text": ""}]
    cfg["io"]["queries"] = str(FIXTURE_DIR / "queries.jsonl")
    cfg["io"]["eval_cases"] = str(FIXTURE_DIR / "eval_cases.jsonl")
    cfg["io"]["eval_scores"] = str(FIXTURE_DIR / "eval_scores.jsonl")
    config_path = tmp_path / "config.json"
    config_path.write_text(json.dumps(cfg))
    out = tmp_path / "run"
    assert main(["generate", "--config", str(config_path), "--out", str(out)]) == 0
    skips = [
        json.loads(line)
        for line in (out / "generate.skips.jsonl").read_text().splitlines()
        if line and not line.startswith("#")
    ]
    assert len(skips) == 2  # one per policy for the scripted query
    manifest = json.loads((out / "generate.manifest.json").read_text())
    assert manifest["counts"]["samples"] + manifest["skip_total"] == 20
