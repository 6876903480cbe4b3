"""Experiment entry point.

Subcommands: gen-logs, train-kt, train, evaluate, sweep. One YAML config
drives a run; flags only pick the subcommand, config path, scalar overrides
(`--set section.key=value`), and a checkpoint to evaluate.
Exit codes: 0 success, 2 config error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .config import (ExperimentConfig, build_model_from_config, build_scenario,
                     config_hash, load_config, load_curriculum)
from .curriculum import RawLogRow, parse_logs, read_log_csv, write_log_csv
from .errors import ConfigError, HierRecError
from .evaluation import (EvalProtocol, HierAgent, RandomAgent, evaluate,
                         plot_metric_curve, sweep, write_results_csv)
from .model import load_model
from .rng import substream
from .training import train_run, write_metrics_csv

OUTPUT_SUBDIRS = ("checkpoints", "metrics", "results", "plots", "logs")


def _prepare_output_dir(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.output_dir)
    for sub in OUTPUT_SUBDIRS:
        (out / sub).mkdir(parents=True, exist_ok=True)
    return out


def _resolve_input(cfg: ExperimentConfig, path_str: str) -> Path:
    """Input paths may be given relative to the cwd or to the output directory."""
    path = Path(path_str)
    if path.exists() or path.is_absolute():
        return path
    candidate = Path(cfg.output_dir) / path
    return candidate if candidate.exists() else path


def cmd_gen_logs(cfg: ExperimentConfig) -> int:
    if cfg.simulator.kind != "kss":
        raise ConfigError("gen-logs drives the rule-based simulator; set simulator.kind: kss")
    if cfg.data.session_len > cfg.simulator.kss.max_steps:
        raise ConfigError(
            f"data.session_len {cfg.data.session_len} exceeds the simulator's "
            f"max_steps {cfg.simulator.kss.max_steps}"
        )
    out = _prepare_output_dir(cfg)
    from .simulators import KssSimulator

    sim = KssSimulator(cfg.simulator.kss)
    n = sim.n_questions
    rng = substream(cfg.seed, "data", "gen-logs")
    rows = []
    for i in range(cfg.data.n_sessions):
        session = sim.reset(targets=(0,), warmup_len=0, seed=int(rng.integers(2**63)))
        for step in range(cfg.data.session_len):
            q = int(rng.integers(n))
            y = session.answer(q)
            rows.append(RawLogRow(f"s{i:05d}", f"q{q:04d}", y, f"e{i:06d}", step))
    path = out / cfg.data.logs_path if not Path(cfg.data.logs_path).is_absolute() else Path(cfg.data.logs_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    write_log_csv(path, rows)
    print(f"wrote {len(rows)} rows ({cfg.data.n_sessions} sessions) to {path}")
    return 0


def cmd_train_kt(cfg: ExperimentConfig) -> int:
    from .dkt import DktTrainConfig, dkt_train

    out = _prepare_output_dir(cfg)
    logs_path = _resolve_input(cfg, cfg.kt_training.logs_path)
    if not logs_path.exists():
        raise ConfigError(f"log file not found: {logs_path}")
    cmap, qdict, _ = load_curriculum(cfg)
    histories, report = parse_logs(read_log_csv(logs_path), qdict)
    if report.n_unknown:
        print(f"warning: {report.n_unknown} rows referenced unknown question ids")
    train_cfg = DktTrainConfig(
        hidden_dim=cfg.kt_training.hidden_dim,
        epochs=cfg.kt_training.epochs,
        learning_rate=cfg.kt_training.learning_rate,
        batch_size=cfg.kt_training.batch_size,
        holdout_fraction=cfg.kt_training.holdout_fraction,
        seed=cfg.seed,
    )
    model, fit = dkt_train(list(histories.values()), train_cfg, n_questions=cmap.n)
    ckpt = out / cfg.kt_training.checkpoint_path
    ckpt.parent.mkdir(parents=True, exist_ok=True)
    model.save(ckpt)
    if fit.single_class:
        print("held-out AUC undefined (single-class labels); model saved anyway")
    else:
        print(f"held-out AUC: {fit.heldout_auc:.4f} over {fit.n_heldout} sessions")
    print(f"train sessions: {fit.n_train}  final train BCE: {fit.final_train_bce:.4f}")
    print(f"wrote KT checkpoint to {ckpt}")
    return 0


def cmd_train(cfg: ExperimentConfig) -> int:
    out = _prepare_output_dir(cfg)
    cmap, _, _ = load_curriculum(cfg)
    scenario = build_scenario(cfg, cmap)
    model = build_model_from_config(cfg, cmap)
    result = train_run(
        model, scenario, cfg.training, k=cfg.policy.k,
        disable_high=cfg.policy.disable_high, out_dir=out,
        config_hash=config_hash(cfg, cmap),
    )
    metrics_path = out / "metrics" / "train_metrics.csv"
    write_metrics_csv(metrics_path, result.metrics)
    tail = [row["delta_u"] for row in result.metrics[-100:]]
    print(f"trained {result.episodes_run} episodes; "
          f"mean delta_u over last {len(tail)}: {np.mean(tail):.4f}" if tail else "no episodes run")
    print(f"checkpoint: {result.checkpoint_path}")
    print(f"metrics: {metrics_path}")
    return 0


def _load_agent(cfg: ExperimentConfig, cmap, checkpoint: str | None, agent_kind: str, k: int | None = None):
    if agent_kind == "random":
        return RandomAgent(cmap.n)
    model = build_model_from_config(cfg, cmap)
    ckpt = Path(checkpoint) if checkpoint else Path(cfg.output_dir) / "checkpoints" / "policy_final.ckpt"
    if not ckpt.exists():
        raise ConfigError(f"checkpoint not found: {ckpt}")
    load_model(ckpt, model, expected_config_hash=config_hash(cfg, cmap))
    return HierAgent(model, cmap, k=k if k is not None else cfg.policy.k,
                     mode=cfg.evaluation.mode, disable_high=cfg.policy.disable_high)


def _protocol(cfg: ExperimentConfig) -> EvalProtocol:
    ev = cfg.evaluation
    return EvalProtocol(budgets=tuple(ev.budgets), n_students=ev.n_students,
                        coldstart=ev.coldstart, warmup_len=ev.warmup_len,
                        seeds=tuple(ev.seeds), mode=ev.mode)


def cmd_evaluate(cfg: ExperimentConfig, checkpoint: str | None, agent_kind: str) -> int:
    out = _prepare_output_dir(cfg)
    cmap, _, _ = load_curriculum(cfg)
    scenario = build_scenario(cfg, cmap)
    agent = _load_agent(cfg, cmap, checkpoint, agent_kind)
    result = evaluate(agent, scenario, _protocol(cfg))
    suffix = "" if agent_kind == "checkpoint" else f"_{agent_kind}"
    csv_path = out / "results" / f"results{suffix}.csv"
    write_results_csv(csv_path, result.rows)
    budgets = sorted({row["budget"] for row in result.rows})
    means = [result.mean_over_seeds(b) for b in budgets]
    plot_metric_curve(out / "plots" / f"eval_budgets{suffix}.png", budgets, means,
                      "step budget", "mean learning effect", f"{scenario.name} evaluation")
    for budget, mean in zip(budgets, means):
        print(f"budget {budget}: mean delta_u over seeds = {mean:.4f}")
    print(f"results: {csv_path}")
    return 0


def cmd_sweep(cfg: ExperimentConfig, checkpoint: str | None, axis: str) -> int:
    out = _prepare_output_dir(cfg)
    cmap, _, _ = load_curriculum(cfg)
    scenario = build_scenario(cfg, cmap)

    def factory(k=None):
        return _load_agent(cfg, cmap, checkpoint, "checkpoint", k=k)

    values = (cfg.evaluation.sweep_k_values if axis == "k_concepts"
              else cfg.evaluation.sweep_warmup_values)
    rows = sweep(factory, axis, values, scenario, _protocol(cfg))
    csv_path = out / "results" / f"sweep_{axis}.csv"
    write_results_csv(csv_path, rows, extra_fields=("axis", "value"))
    top_budget = max(cfg.evaluation.budgets)
    means = []
    for v in values:
        sel = [r["mean_delta"] for r in rows if r["value"] == v and r["budget"] == top_budget]
        means.append(float(np.mean(sel)))
    plot_metric_curve(out / "plots" / f"sweep_{axis}.png", list(values), means,
                      axis, "mean learning effect", f"{axis} sweep (budget {top_budget})")
    print(f"sweep table: {csv_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hierrec", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("gen-logs", "train-kt", "train", "evaluate", "sweep"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="path to the experiment YAML")
        p.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="SECTION.KEY=VALUE", help="override a scalar config leaf")
        if name in ("evaluate", "sweep"):
            p.add_argument("--checkpoint", default=None, help="policy checkpoint path")
        if name == "evaluate":
            p.add_argument("--agent", choices=("checkpoint", "random"), default="checkpoint")
        if name == "sweep":
            p.add_argument("--axis", choices=("k_concepts", "warmup_len"), required=True)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.overrides)
        if args.command == "gen-logs":
            return cmd_gen_logs(cfg)
        if args.command == "train-kt":
            return cmd_train_kt(cfg)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "evaluate":
            return cmd_evaluate(cfg, args.checkpoint, args.agent)
        if args.command == "sweep":
            return cmd_sweep(cfg, args.checkpoint, args.axis)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except HierRecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
