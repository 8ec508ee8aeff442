"""Experiment runner: training loops with manifests, evals, and ablations.

Each run owns one directory under the output root, named from its config
so reruns land in the same place. The directory accumulates:

* ``config.json``: the resolved configuration,
* ``reports.csv`` / ``reports.jsonl``: one row per training iteration,
* ``evals.csv``: periodic exploitability rows (enumerable games),
* ``probes.csv``: head-to-head probe rows (games too large to enumerate),
* ``archive/``: every iteration's policy network,
* ``checkpoint.npz``: latest resumable trainer state,
* ``manifest.json``: end-of-run summary.

Rows are appended as they are produced, so an interrupted run leaves a
valid prefix on disk. Resuming loads the checkpoint, drops any rows and
archived models past it, and continues; with the deterministic flag set
(wall-clock columns forced to zero) the resumed files end byte-identical
to an uninterrupted run.
"""

from __future__ import annotations

import dataclasses
import json
import os
import time
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .buffers import ModelArchive, load_archive
from .config import ExperimentConfig, build_config
from .errors import ConfigError, TrainingDivergedError
from .evaluation import (
    AlwaysCallPolicy,
    TabularPolicy,
    UniformPolicy,
    exploitability,
    head_to_head,
)
from .trainer import (
    EVAL,
    ArchiveAveragePolicy,
    DreamTrainer,
    IterationReport,
    archive_average_profile,
    load_checkpoint,
    rng_stream,
    save_checkpoint,
)

OUTPUT_ROOT_ENV = "DREAMCFR_OUTPUT_ROOT"

EVAL_HEADER = "run_id,iteration,nodes_touched,exploitability_mbb,br_value_p1,br_value_p2,wall_time_s"
PROBE_HEADER = "run_id,iteration,nodes_touched,opponent,mean_chips,ci_low,ci_high,hands,wall_time_s"
REPORT_FIELDS = (
    "iteration",
    "traverser",
    "nodes_touched",
    "cumulative_nodes",
    "adv_rows_p1",
    "adv_rows_p2",
    "q_rows_p1",
    "q_rows_p2",
    "avg_rows_p1",
    "avg_rows_p2",
    "q_loss",
    "d_loss",
    "wall_time_s",
)

ABLATION_SUITES = (
    "epsilon-sweep",
    "traversal-sweep",
    "q-batch-sweep",
    "reset-mode",
    "baseline-vs-none",
)


def output_root(explicit: Optional[str] = None) -> str:
    if explicit:
        return explicit
    return os.environ.get(OUTPUT_ROOT_ENV, "runs")


def run_id_for(config: ExperimentConfig) -> str:
    t = config.trainer
    return f"{t.game}_{t.algorithm}_{t.weighting}_{config.profile}_seed{t.seed}"


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _json_dump(obj, path: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def config_as_dict(config: ExperimentConfig) -> dict:
    out = dataclasses.asdict(config.trainer)
    for key in ("profile", "cadence", "output_dir", "log_format", "deterministic", "probe_hands", "big_blind"):
        out[key] = getattr(config, key)
    return out


@dataclass
class RunManifest:
    run_id: str
    directory: str
    status: str  # completed | diverged
    iterations_done: int
    cumulative_nodes: int
    final_eval: Optional[dict]
    error: Optional[str] = None


class _RowLog:
    """Append-only table that can truncate itself back to an iteration."""

    def __init__(self, path: str, header: str, jsonl: bool = False):
        self.path = path
        self.header = header
        self.jsonl = jsonl
        if not os.path.exists(path):
            with open(path, "w") as fh:
                if not jsonl:
                    fh.write(header + "\n")

    def append(self, values: Dict[str, object]) -> None:
        with open(self.path, "a") as fh:
            if self.jsonl:
                fh.write(json.dumps(values, sort_keys=True) + "\n")
            else:
                fh.write(",".join(_fmt(values[k]) for k in self.header.split(",")) + "\n")

    def rows(self) -> List[Dict[str, str]]:
        with open(self.path) as fh:
            lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
        if self.jsonl:
            return [json.loads(ln) for ln in lines]
        keys = self.header.split(",")
        return [dict(zip(keys, ln.split(","))) for ln in lines[1:]]

    def truncate(self, iteration: int, cadence: Optional[int] = None) -> None:
        # cadence given: also drop end-of-run eval rows off the cadence grid,
        # which a resumed run with a later horizon would not reproduce
        def keep(r) -> bool:
            it = int(float(r["iteration"]))
            if it > iteration:
                return False
            return cadence is None or it % cadence == 0

        kept = [r for r in self.rows() if keep(r)]
        with open(self.path, "w") as fh:
            if not self.jsonl:
                fh.write(self.header + "\n")
            for row in kept:
                if self.jsonl:
                    fh.write(json.dumps(row, sort_keys=True) + "\n")
                else:
                    fh.write(",".join(_fmt(row[k]) for k in self.header.split(",")) + "\n")


def _report_row(run_id: str, rep: IterationReport, cumulative: int, deterministic: bool) -> dict:
    wall = 0.0 if deterministic else rep.wall_time
    return {
        "iteration": rep.iteration,
        "traverser": rep.traverser,
        "nodes_touched": rep.nodes_touched,
        "cumulative_nodes": cumulative,
        "adv_rows_p1": rep.adv_sizes[0],
        "adv_rows_p2": rep.adv_sizes[1],
        "q_rows_p1": rep.q_sizes[0],
        "q_rows_p2": rep.q_sizes[1],
        "avg_rows_p1": rep.avg_sizes[0],
        "avg_rows_p2": rep.avg_sizes[1],
        "q_loss": float(rep.q_loss),
        "d_loss": float(rep.d_loss),
        "wall_time_s": wall,
    }


def evaluate_archive(
    config: ExperimentConfig, trainer: DreamTrainer, iteration: int, cumulative: int, run_id: str
) -> Tuple[dict, str]:
    """One eval row for the current archive; kind is 'eval' or 'probe'."""
    started = time.perf_counter()
    game = trainer.game
    weighting = config.trainer.weighting
    if getattr(game, "enumerable", False):
        profile = archive_average_profile(game, trainer.archive, weighting=weighting)
        result = exploitability(game, TabularPolicy(game, profile))
        wall = 0.0 if config.deterministic else time.perf_counter() - started
        row = {
            "run_id": run_id,
            "iteration": iteration,
            "nodes_touched": cumulative,
            "exploitability_mbb": float(result.total_mbb),
            "br_value_p1": float(result.br_values[0]),
            "br_value_p2": float(result.br_values[1]),
            "wall_time_s": wall,
        }
        return row, "eval"
    policy = ArchiveAveragePolicy(game, trainer.archive, weighting=weighting)
    seed = int(rng_stream(config.trainer.seed, iteration, EVAL).integers(1 << 31))
    probes = {}
    for name, opponent in (("uniform", UniformPolicy()), ("always-call", AlwaysCallPolicy())):
        probes[name] = head_to_head(game, policy, opponent, config.probe_hands, seed=seed)
    wall = 0.0 if config.deterministic else time.perf_counter() - started
    rows = []
    for name, match in probes.items():
        rows.append(
            {
                "run_id": run_id,
                "iteration": iteration,
                "nodes_touched": cumulative,
                "opponent": name,
                "mean_chips": float(match.mean_chips),
                "ci_low": float(match.ci_low),
                "ci_high": float(match.ci_high),
                "hands": int(match.hands),
                "wall_time_s": wall,
            }
        )
    return rows, "probe"


def run_train(
    config: ExperimentConfig, root: Optional[str] = None, resume: bool = False
) -> RunManifest:
    """Train to config.iterations, writing manifests as the run progresses."""
    config.validate()
    run_id = run_id_for(config)
    run_dir = os.path.join(output_root(root or config.output_dir), run_id)
    os.makedirs(run_dir, exist_ok=True)
    archive_dir = os.path.join(run_dir, "archive")
    ckpt_path = os.path.join(run_dir, "checkpoint.npz")
    jsonl = config.log_format == "jsonl"
    reports_path = os.path.join(run_dir, "reports.jsonl" if jsonl else "reports.csv")

    _json_dump(config_as_dict(config), os.path.join(run_dir, "config.json"))
    reports = _RowLog(reports_path, ",".join(REPORT_FIELDS), jsonl=jsonl)
    evals = _RowLog(os.path.join(run_dir, "evals.csv"), EVAL_HEADER)
    probes = _RowLog(os.path.join(run_dir, "probes.csv"), PROBE_HEADER)

    cumulative = 0
    final_eval: Optional[dict] = None
    manifest_path = os.path.join(run_dir, "manifest.json")
    if resume and os.path.exists(ckpt_path):
        archive = load_archive(archive_dir) if os.path.exists(os.path.join(archive_dir, "index.json")) else ModelArchive(2, archive_dir)
        trainer = load_checkpoint(ckpt_path, archive=archive)
        want = dict(dataclasses.asdict(config.trainer), iterations=0)
        have = dict(dataclasses.asdict(trainer.config), iterations=0)
        if want != have:
            raise ConfigError("checkpoint was written by a different configuration")
        trainer.config = config.trainer
        archive.truncate(trainer.t)
        reports.truncate(trainer.t)
        evals.truncate(trainer.t, cadence=config.cadence)
        probes.truncate(trainer.t, cadence=config.cadence)
        cumulative = sum(int(float(r["nodes_touched"])) for r in reports.rows())
        # a resume that is already at its horizon runs no iterations, so keep
        # the recorded final eval instead of rewriting the manifest with none
        if os.path.exists(manifest_path):
            with open(manifest_path) as fh:
                prior = json.load(fh).get("final_eval")
            rows = prior.get("probes", [prior]) if isinstance(prior, dict) else []
            if rows and all(r.get("iteration") == trainer.t for r in rows):
                final_eval = prior
    else:
        trainer = DreamTrainer(config.trainer, archive_dir=archive_dir)

    status = "completed"
    error: Optional[str] = None
    try:
        while trainer.t < config.trainer.iterations:
            rep = trainer.iteration()
            cumulative += rep.nodes_touched
            reports.append(_report_row(run_id, rep, cumulative, config.deterministic))
            at_end = trainer.t == config.trainer.iterations
            if trainer.t % config.cadence == 0 or at_end:
                result, kind = evaluate_archive(config, trainer, trainer.t, cumulative, run_id)
                if kind == "eval":
                    evals.append(result)
                    final_eval = result
                else:
                    for row in result:
                        probes.append(row)
                    final_eval = {"probes": result}
                save_checkpoint(trainer, ckpt_path)
    except TrainingDivergedError as exc:
        status = "diverged"
        error = str(exc)

    manifest = RunManifest(
        run_id=run_id,
        directory=run_dir,
        status=status,
        iterations_done=trainer.t,
        cumulative_nodes=cumulative,
        final_eval=final_eval,
        error=error,
    )
    payload = dataclasses.asdict(manifest)
    del payload["directory"]  # keep manifests portable across output roots
    payload["config"] = config_as_dict(config)
    _json_dump(payload, manifest_path)
    if status == "diverged":
        raise TrainingDivergedError(error)
    return manifest


def run_seeds(
    config: ExperimentConfig, seeds: Sequence[int], root: Optional[str] = None
) -> Tuple[List[RunManifest], dict]:
    """Run one config across seeds; returns manifests and mean/std summary."""
    manifests = []
    for seed in seeds:
        cfg = dataclasses.replace(config, trainer=dataclasses.replace(config.trainer, seed=seed))
        manifests.append(run_train(cfg, root=root))
    summary = summarize_runs(manifests)
    if manifests:
        _json_dump(summary, os.path.join(os.path.dirname(manifests[0].directory), "summary.json"))
    return manifests, summary


def summarize_runs(manifests: Sequence[RunManifest]) -> dict:
    """Mean and sample std of the final headline metric across runs."""
    values = []
    metric = "exploitability_mbb"
    for m in manifests:
        if m.final_eval is None:
            continue
        if "probes" in m.final_eval:
            metric = "mean_chips_vs_uniform"
            for row in m.final_eval["probes"]:
                if row["opponent"] == "uniform":
                    values.append(float(row["mean_chips"]))
        else:
            values.append(float(m.final_eval["exploitability_mbb"]))
    arr = np.asarray(values, dtype=float)
    return {
        "runs": [m.run_id for m in manifests],
        "metric": metric,
        "values": values,
        "mean": float(arr.mean()) if arr.size else float("nan"),
        "std": float(arr.std(ddof=1)) if arr.size > 1 else 0.0,
    }


def _suite_variants(suite: str, base: Dict[str, object]) -> List[Tuple[str, Dict[str, object]]]:
    game = str(base.get("game", "leduc"))
    if suite == "epsilon-sweep":
        return [(f"eps{e}", {**base, "epsilon": e}) for e in (0.1, 0.3, 0.5, 0.9)]
    if suite == "traversal-sweep":
        staged = build_config({**base, "profile": "desk"})
        n = staged.trainer.traversals
        return [(f"trav{k}", {**base, "traversals": k}) for k in (max(1, n // 3), n, n * 3)]
    if suite == "q-batch-sweep":
        staged = build_config({**base, "profile": "desk"})
        n = staged.trainer.q_batches
        return [(f"qb{k}", {**base, "q_batches": k}) for k in (max(1, n // 4), n, n * 4)]
    if suite == "reset-mode":
        return [(f"reset-{m}", {**base, "reset_mode": m}) for m in ("always", "never", "every10")]
    if suite == "baseline-vs-none":
        return [("dream", {**base, "algorithm": "dream"}), ("os-sdcfr", {**base, "algorithm": "os-sdcfr"})]
    raise ConfigError(f"unknown ablation suite {suite!r}; pick one of {ABLATION_SUITES}")


def run_ablation(
    suite: str,
    base: Optional[Dict[str, object]] = None,
    root: Optional[str] = None,
    seeds: Sequence[int] = (0,),
) -> dict:
    """Run one ablation grid at desk profile and write a comparison table."""
    base = dict(base or {})
    base["profile"] = "desk"
    variants = _suite_variants(suite, base)
    suite_root = os.path.join(output_root(root), f"ablate_{suite}")
    table = []
    for name, overrides in variants:
        cfg = build_config({**overrides, "profile": "desk"})
        manifests, summary = run_seeds(cfg, seeds, root=os.path.join(suite_root, name))
        table.append(
            {
                "variant": name,
                "metric": summary["metric"],
                "mean": summary["mean"],
                "std": summary["std"],
                "nodes": manifests[-1].cumulative_nodes,
            }
        )
    result = {"suite": suite, "rows": table}
    _json_dump(result, os.path.join(suite_root, "comparison.json"))
    with open(os.path.join(suite_root, "comparison.csv"), "w") as fh:
        fh.write("variant,metric,mean,std,nodes\n")
        for row in table:
            fh.write(
                f"{row['variant']},{row['metric']},{_fmt(row['mean'])},{_fmt(row['std'])},{row['nodes']}\n"
            )
    return result


def format_ablation(result: dict) -> str:
    lines = [f"suite: {result['suite']}"]
    rows = result["rows"]
    width = max(len(r["variant"]) for r in rows)
    for r in rows:
        lines.append(
            f"  {r['variant']:<{width}}  {r['metric']} = {r['mean']:.3f} +/- {r['std']:.3f}"
            f"  (nodes {r['nodes']})"
        )
    return "\n".join(lines)
