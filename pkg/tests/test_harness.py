"""Run harness and CLI: file layout, resume, ablations, exit codes."""

import json
import os

import numpy as np
import pytest

from dreamcfr.cli import main
from dreamcfr.config import build_config
from dreamcfr.errors import ConfigError, TrainingDivergedError
from dreamcfr.harness import (
    EVAL_HEADER,
    OUTPUT_ROOT_ENV,
    REPORT_FIELDS,
    _RowLog,
    config_as_dict,
    evaluate_archive,
    format_ablation,
    output_root,
    run_ablation,
    run_id_for,
    run_seeds,
    run_train,
)
from dreamcfr.trainer import DreamTrainer

# small enough that a full run takes well under a second
TINY = {
    "game": "kuhn",
    "iterations": 4,
    "traversals": 10,
    "q_batches": 2,
    "q_batch_size": 16,
    "d_batches": 2,
    "d_finetune_batches": 1,
    "d_batch_size": 16,
    "avg_batches": 2,
    "avg_batch_size": 16,
    "hidden": 8,
    "n_hidden": 1,
    "cadence": 2,
    "deterministic": True,
}


def tiny_config(**over):
    return build_config(dict(TINY, **over))


def write_config_file(path, **over):
    pairs = dict(TINY, **over)
    with open(path, "w") as fh:
        for key, value in pairs.items():
            if isinstance(value, bool):
                value = "yes" if value else "no"
            fh.write(f"{key} = {value}\n")
    return str(path)


def tree_bytes(root):
    out = {}
    for dirpath, _dirs, files in os.walk(root):
        for name in files:
            path = os.path.join(dirpath, name)
            with open(path, "rb") as fh:
                out[os.path.relpath(path, root)] = fh.read()
    return out


def test_run_id_names_the_experiment():
    cfg = build_config(
        {"game": "kuhn", "algorithm": "os-sdcfr", "weighting": "linear",
         "profile": "desk", "seed": 3}
    )
    assert run_id_for(cfg) == "kuhn_os-sdcfr_linear_desk_seed3"


def test_output_root_resolution(tmp_path, monkeypatch):
    monkeypatch.delenv(OUTPUT_ROOT_ENV, raising=False)
    assert output_root("explicit") == "explicit"
    assert output_root(None) == "runs"
    monkeypatch.setenv(OUTPUT_ROOT_ENV, str(tmp_path / "envroot"))
    assert output_root(None) == str(tmp_path / "envroot")
    assert output_root("explicit") == "explicit"
    manifest = run_train(tiny_config(iterations=2))
    assert manifest.directory.startswith(str(tmp_path / "envroot"))


def test_run_train_file_layout(tmp_path):
    cfg = tiny_config()
    manifest = run_train(cfg, root=str(tmp_path))
    run_dir = tmp_path / run_id_for(cfg)
    assert manifest.directory == str(run_dir)
    assert manifest.status == "completed"
    assert manifest.iterations_done == 4
    assert manifest.error is None

    names = sorted(os.listdir(run_dir))
    assert names == [
        "archive", "checkpoint.npz", "config.json", "evals.csv",
        "manifest.json", "probes.csv", "reports.csv",
    ]
    assert (run_dir / "archive" / "index.json").exists()
    # alternating traversers: two archived models per agent after 4 iterations
    nets = [n for n in os.listdir(run_dir / "archive") if n.endswith(".net")]
    assert len(nets) == 4

    with open(run_dir / "config.json") as fh:
        assert json.load(fh) == config_as_dict(cfg)

    reports = _RowLog(str(run_dir / "reports.csv"), ",".join(REPORT_FIELDS)).rows()
    assert [int(r["iteration"]) for r in reports] == [1, 2, 3, 4]
    assert all(float(r["wall_time_s"]) == 0.0 for r in reports)
    cums = [int(r["cumulative_nodes"]) for r in reports]
    assert cums == sorted(cums)
    assert cums[-1] == manifest.cumulative_nodes

    evals = _RowLog(str(run_dir / "evals.csv"), EVAL_HEADER).rows()
    assert [int(r["iteration"]) for r in evals] == [2, 4]
    assert all(r["run_id"] == manifest.run_id for r in evals)
    assert float(evals[-1]["exploitability_mbb"]) >= 0.0
    assert manifest.final_eval["iteration"] == 4

    with open(run_dir / "manifest.json") as fh:
        payload = json.load(fh)
    assert "directory" not in payload
    assert payload["run_id"] == manifest.run_id
    assert payload["status"] == "completed"
    assert payload["config"]["game"] == "kuhn"
    assert payload["final_eval"] == manifest.final_eval


def test_run_train_jsonl_reports(tmp_path):
    cfg = tiny_config(iterations=2, log_format="jsonl")
    manifest = run_train(cfg, root=str(tmp_path))
    run_dir = tmp_path / manifest.run_id
    assert (run_dir / "reports.jsonl").exists()
    assert not (run_dir / "reports.csv").exists()
    with open(run_dir / "reports.jsonl") as fh:
        rows = [json.loads(line) for line in fh]
    assert [r["iteration"] for r in rows] == [1, 2]
    assert isinstance(rows[0]["nodes_touched"], int)


def test_resumed_run_matches_uninterrupted_bytes(tmp_path):
    full = dict(iterations=7)
    run_train(tiny_config(**full), root=str(tmp_path / "a"))
    # partial run ends with an off-grid eval at t=5; resuming to the full
    # horizon must drop that row and reproduce the straight run exactly
    run_train(tiny_config(iterations=5), root=str(tmp_path / "b"))
    run_train(tiny_config(**full), root=str(tmp_path / "b"), resume=True)
    ta = tree_bytes(tmp_path / "a")
    tb = tree_bytes(tmp_path / "b")
    assert sorted(ta) == sorted(tb)
    assert [k for k in ta if ta[k] != tb[k]] == []


def test_resume_rejects_changed_config(tmp_path):
    run_train(tiny_config(iterations=2), root=str(tmp_path))
    with pytest.raises(ConfigError, match="different configuration"):
        run_train(tiny_config(iterations=4, traversals=20), root=str(tmp_path), resume=True)


def test_resume_with_same_horizon_is_a_no_op(tmp_path):
    cfg = tiny_config(iterations=2)
    first = run_train(cfg, root=str(tmp_path))
    again = run_train(tiny_config(iterations=2), root=str(tmp_path), resume=True)
    assert again.iterations_done == 2
    assert again.cumulative_nodes == first.cumulative_nodes
    assert again.final_eval == first.final_eval


def test_row_log_truncates_to_iteration_and_grid(tmp_path):
    log = _RowLog(str(tmp_path / "t.csv"), "iteration,x")
    for it, x in [(2, "a"), (4, "b"), (5, "c")]:
        log.append({"iteration": it, "x": x})
    log.truncate(5, cadence=2)
    assert [r["iteration"] for r in log.rows()] == ["2", "4"]
    log.truncate(2)
    assert [r["x"] for r in log.rows()] == ["a"]


def test_row_log_jsonl_round_trip(tmp_path):
    log = _RowLog(str(tmp_path / "t.jsonl"), "iteration,x", jsonl=True)
    log.append({"iteration": 1, "x": 0.5})
    log.append({"iteration": 2, "x": 0.25})
    with open(log.path) as fh:
        assert fh.readline().startswith("{")  # no csv header line
    assert log.rows() == [{"iteration": 1, "x": 0.5}, {"iteration": 2, "x": 0.25}]
    log.truncate(1)
    assert log.rows() == [{"iteration": 1, "x": 0.5}]


def test_run_seeds_writes_summary(tmp_path):
    cfg = tiny_config(iterations=2)
    manifests, summary = run_seeds(cfg, [0, 1], root=str(tmp_path))
    assert [m.run_id for m in manifests] == summary["runs"]
    assert manifests[0].run_id.endswith("seed0")
    assert manifests[1].run_id.endswith("seed1")
    assert summary["metric"] == "exploitability_mbb"
    assert len(summary["values"]) == 2
    assert np.isfinite(summary["mean"]) and summary["std"] >= 0.0
    with open(tmp_path / "summary.json") as fh:
        assert json.load(fh) == summary


def test_evaluate_archive_probes_large_games():
    cfg = build_config(
        {"game": "fhp", "iterations": 1, "traversals": 2, "q_batches": 1,
         "q_batch_size": 8, "d_batches": 1, "d_finetune_batches": 1,
         "d_batch_size": 8, "avg_batches": 1, "avg_batch_size": 8,
         "hidden": 8, "n_hidden": 1, "probe_hands": 10, "deterministic": True}
    )
    trainer = DreamTrainer(cfg.trainer)
    rep = trainer.iteration()
    rows, kind = evaluate_archive(cfg, trainer, 1, rep.nodes_touched, "probe-run")
    assert kind == "probe"
    assert [r["opponent"] for r in rows] == ["uniform", "always-call"]
    for row in rows:
        assert row["hands"] == 10
        assert np.isfinite(row["mean_chips"])
        assert row["ci_low"] <= row["mean_chips"] <= row["ci_high"]
        assert row["wall_time_s"] == 0.0


def test_run_ablation_writes_comparison(tmp_path):
    result = run_ablation(
        "baseline-vs-none",
        base=dict(TINY, iterations=2),
        root=str(tmp_path),
        seeds=[0],
    )
    assert result["suite"] == "baseline-vs-none"
    assert [r["variant"] for r in result["rows"]] == ["dream", "os-sdcfr"]
    for row in result["rows"]:
        assert row["metric"] == "exploitability_mbb"
        assert np.isfinite(row["mean"])
        assert row["nodes"] > 0
    suite_dir = tmp_path / "ablate_baseline-vs-none"
    with open(suite_dir / "comparison.json") as fh:
        assert json.load(fh) == result
    with open(suite_dir / "comparison.csv") as fh:
        lines = fh.read().splitlines()
    assert lines[0] == "variant,metric,mean,std,nodes"
    assert len(lines) == 3
    text = format_ablation(result)
    assert text.startswith("suite: baseline-vs-none")
    assert "dream" in text and "os-sdcfr" in text


def test_unknown_ablation_suite_rejected(tmp_path):
    with pytest.raises(ConfigError, match="unknown ablation suite"):
        run_ablation("wizard", base=dict(TINY), root=str(tmp_path))


def test_cli_train_eval_bestresponse(tmp_path, capsys):
    cfg_path = write_config_file(tmp_path / "kuhn.cfg", iterations=2)
    runs = tmp_path / "runs"
    assert main(["train", str(cfg_path), "--output-root", str(runs)]) == 0
    out = capsys.readouterr().out
    assert "completed after 2 iterations" in out
    assert "exploitability" in out

    (run_dir,) = runs.iterdir()
    archive = str(run_dir / "archive")
    assert main(["eval", archive, "--game", "kuhn"]) == 0
    assert "exploitability:" in capsys.readouterr().out

    assert main(["bestresponse", archive, "--game", "kuhn"]) == 0
    out = capsys.readouterr().out
    assert "best response vs seat 1" in out
    assert "sum:" in out


def test_cli_train_multi_seed(tmp_path, capsys):
    cfg_path = write_config_file(tmp_path / "kuhn.cfg", iterations=2)
    rc = main(["train", str(cfg_path), "--output-root", str(tmp_path / "runs"),
               "--seeds", "0", "1"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "over 2 seeds" in out
    assert (tmp_path / "runs" / "summary.json").exists()


def test_cli_config_errors_exit_2(tmp_path, capsys):
    assert main(["train", str(tmp_path / "missing.cfg")]) == 2
    assert "error" in capsys.readouterr().err

    bad = tmp_path / "bad.cfg"
    bad.write_text("game = kuhn\nwizard = 3\n")
    assert main(["train", str(bad)]) == 2
    assert "config error" in capsys.readouterr().err

    assert main(["eval", str(tmp_path / "no_archive"), "--game", "kuhn"]) == 2
    capsys.readouterr()

    assert main(["bestresponse", str(tmp_path / "no_archive"), "--game", "fhp"]) == 2
    assert "enumerable" in capsys.readouterr().err


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_cli_divergence_exits_3(tmp_path, capsys):
    cfg_path = write_config_file(tmp_path / "div.cfg", iterations=2, cadence=1, lr=1e160)
    rc = main(["train", str(cfg_path), "--output-root", str(tmp_path / "runs")])
    assert rc == 3
    assert "training diverged" in capsys.readouterr().err
    (run_dir,) = (tmp_path / "runs").iterdir()
    with open(run_dir / "manifest.json") as fh:
        payload = json.load(fh)
    assert payload["status"] == "diverged"
    assert payload["error"]


def test_cli_print_config(tmp_path, capsys):
    assert main(["print-config", "--game", "kuhn", "--algorithm", "os-sdcfr"]) == 0
    out = capsys.readouterr().out
    assert "os-sdcfr" in out
    assert "set in config" in out
    assert "artifact default" in out

    cfg_path = tmp_path / "k.cfg"
    cfg_path.write_text("game = kuhn\nprofile = paper\n")
    assert main(["print-config", str(cfg_path), "--profile", "desk"]) == 2
    assert "conflicts" in capsys.readouterr().err
    assert main(["print-config", str(cfg_path), "--profile", "paper"]) == 0
    assert "paper" in capsys.readouterr().out


def test_cli_rejects_unknown_suite():
    with pytest.raises(SystemExit):
        main(["ablate", "nonsense"])
