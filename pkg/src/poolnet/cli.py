"""Command-line front end: city/data generation, training, evaluation, plots.

Every command is reproducible from (config, seed); all randomness hangs off the
root seed, which is echoed into each output directory's run_meta.json.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import learner as L
from . import neural
from .citygen import SyntheticCitySpec, build_synthetic_city, default_city_spec
from .config import RunConfig, build_runtime, grid_to_json
from .datasets import TransitionDataset
from .errors import PoolnetError
from .sim import EpisodeMetrics
from .svgplot import render_line_chart

LOG = logging.getLogger("poolnet")

METRIC_COLUMNS = [
    "episode",
    "service_rate",
    "total_reward",
    "avg_detour",
    "overestimation_rate",
    "epsilon",
]


def write_metrics_csv(metrics: list[EpisodeMetrics], path: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(METRIC_COLUMNS) + "\n")
        for m in metrics:
            row = [
                str(m.episode),
                repr(float(m.service_rate)),
                repr(float(m.total_reward)),
                repr(float(m.avg_detour_min)),
                repr(float(m.overestimation_rate)),
                repr(float(m.epsilon)),
            ]
            fh.write(",".join(row) + "\n")


def read_metrics_csv(path: str) -> dict[str, list[float]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != METRIC_COLUMNS:
            raise PoolnetError(f"{path}: unexpected metrics header")
        cols: dict[str, list[float]] = {name: [] for name in METRIC_COLUMNS}
        for row in reader:
            if not row:
                continue
            for name, tok in zip(METRIC_COLUMNS, row):
                cols[name].append(float(tok))
    return cols


def write_rounds_csv(round_logs: list[list[tuple]], path: str) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["episode", "round", "vehicle", "rider", "action", "weight", "explored"])
        for episode, rows in enumerate(round_logs):
            for row in rows:
                w.writerow([episode, *row])


def write_run_meta(out_dir: Path, command: str, cfg: RunConfig | None, seed: int, **extra) -> None:
    payload = {"command": command, "seed": seed, **extra}
    if cfg is not None:
        payload["config"] = cfg.to_dict()
    with open(out_dir / "run_meta.json", "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def save_nets(out_dir: Path, qnet, target_net, guider) -> None:
    neural.save_checkpoint(qnet, str(out_dir / "qnet.ckpt"))
    neural.save_checkpoint(target_net, str(out_dir / "target.ckpt"))
    neural.save_checkpoint(guider, str(out_dir / "guider.ckpt"))


def load_nets(ckpt_dir: str):
    d = Path(ckpt_dir)
    return (
        neural.load_checkpoint(str(d / "qnet.ckpt")),
        neural.load_checkpoint(str(d / "target.ckpt")),
        neural.load_checkpoint(str(d / "guider.ckpt")),
    )


def _load_config(args) -> RunConfig:
    cfg = RunConfig.from_json(args.config) if args.config else RunConfig()
    if getattr(args, "seed", None) is not None:
        cfg.experiment.seed = args.seed
    if getattr(args, "episodes", None) is not None:
        cfg.experiment.episodes = args.episodes
    if getattr(args, "p_pool", None) is not None:
        cfg.experiment.p_pool = args.p_pool
    if getattr(args, "epsilon0", None) is not None:
        cfg.learner.eps0 = args.epsilon0
        cfg.learner.eps_floor = min(cfg.learner.eps_floor, args.epsilon0)
    return cfg


def _dtype_of(cfg: RunConfig):
    return np.float32 if cfg.neural.dtype == "float32" else np.float64


def cmd_gen_city(args) -> int:
    spec = SyntheticCitySpec.from_json(args.spec) if args.spec else default_city_spec()
    grid, timetable, _ = build_synthetic_city(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    grid_to_json(grid, str(out / "grid.json"))
    timetable.to_csv(str(out / "timetable.csv"))
    spec.to_json(str(out / "demand.json"))
    print(f"wrote grid.json, timetable.csv, demand.json to {out}")
    return 0


def cmd_gen_orders(args) -> int:
    from .sim import save_orders

    spec = SyntheticCitySpec.from_json(args.demand)
    _, _, demand = build_synthetic_city(spec)
    orders = demand.generate(L.child_seed(args.seed, 31))
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    save_orders(orders, args.out)
    print(f"wrote {len(orders)} orders to {args.out}")
    return 0


def _parse_mixture(args) -> list[tuple[str, float]]:
    if args.recipe in L.DATASET_RECIPES:
        return L.DATASET_RECIPES[args.recipe]
    if args.recipe != "custom":
        raise PoolnetError(f"unknown recipe {args.recipe!r} (use T1, T2 or custom)")
    if not args.mixture:
        raise PoolnetError("--mixture is required with --recipe custom")
    mixture = []
    for part in args.mixture.split(","):
        mode, _, frac = part.partition(":")
        mixture.append((mode.strip(), float(frac)))
    return mixture


def cmd_gen_dataset(args) -> int:
    cfg = _load_config(args)
    builder = build_runtime(cfg)
    mixture = _parse_mixture(args)
    data = L.generate_dataset(
        mixture,
        args.n,
        builder,
        cfg.learner_config(),
        seed=cfg.experiment.seed,
        episode_budget=args.episode_budget,
    )
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    data.to_csv(args.out)
    print(f"wrote {len(data)} transitions to {args.out}")
    return 0


def cmd_train_offline(args) -> int:
    cfg = _load_config(args)
    builder = build_runtime(cfg)
    dataset = TransitionDataset.from_csv(args.dataset)
    lc = cfg.learner_config()
    ctx = builder.match_context()
    qnet, target_net, guider = L.make_nets(
        ctx.n_actions, lc.hidden, seed=cfg.experiment.seed, dtype=_dtype_of(cfg)
    )
    curves = L.train_offline(dataset, qnet, target_net, guider, lc, seed=cfg.experiment.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_nets(out, qnet, target_net, guider)
    with open(out / "losses.csv", "w", newline="") as fh:
        fh.write("step,q_loss,guider_loss\n")
        for i, (lq, lg) in enumerate(zip(curves.q_loss, curves.guider_loss)):
            fh.write(f"{i},{lq!r},{lg!r}\n")
    write_run_meta(out, "train-offline", cfg, cfg.experiment.seed, dataset=args.dataset)
    print(f"offline training done ({len(curves.q_loss)} steps); checkpoints in {out}")
    return 0


def cmd_finetune(args) -> int:
    cfg = _load_config(args)
    builder = build_runtime(cfg)
    lc = cfg.learner_config()
    qnet, target_net, guider = load_nets(args.checkpoints)
    result = L.finetune_online(
        builder,
        qnet,
        target_net,
        guider,
        lc,
        cfg.experiment.episodes,
        use_guider_filter=args.guider == "on",
        seed=cfg.experiment.seed,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_nets(out, result.qnet, result.target_net, result.guider)
    write_metrics_csv(result.metrics, str(out / "metrics.csv"))
    if result.round_logs:
        write_rounds_csv(result.round_logs, str(out / "rounds.csv"))
    write_run_meta(out, "finetune", cfg, cfg.experiment.seed, guider=args.guider)
    print(f"fine-tuned {len(result.metrics)} episodes; outputs in {out}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    builder = build_runtime(cfg)
    qnet, _, _ = load_nets(args.checkpoints)
    result = L.evaluate_policy(
        builder, qnet, cfg.learner_config(), cfg.experiment.episodes, seed=cfg.experiment.seed
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_metrics_csv(result.metrics, str(out / "metrics.csv"))
    write_run_meta(out, "evaluate", cfg, cfg.experiment.seed, checkpoints=args.checkpoints)
    print(f"evaluated {len(result.metrics)} episodes; metrics in {out}")
    return 0


def cmd_baseline(args) -> int:
    cfg = _load_config(args)
    builder = build_runtime(cfg)
    dataset = TransitionDataset.from_csv(args.dataset) if args.dataset else None
    result = L.run_baseline(
        args.mode,
        builder,
        cfg.learner_config(),
        cfg.experiment.episodes,
        seed=cfg.experiment.seed,
        dataset=dataset,
        epsilon0=args.epsilon0,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_metrics_csv(result.metrics, str(out / "metrics.csv"))
    if result.qnet is not None:
        save_nets(out, result.qnet, result.target_net, result.guider)
    if result.round_logs:
        write_rounds_csv(result.round_logs, str(out / "rounds.csv"))
    write_run_meta(out, "baseline", cfg, cfg.experiment.seed, mode=args.mode)
    print(f"baseline {args.mode}: {len(result.metrics)} episodes; outputs in {out}")
    return 0


def cmd_plot(args) -> int:
    series = []
    for path in args.metrics.split(","):
        cols = read_metrics_csv(path.strip())
        label = Path(path.strip()).stem
        series.append((label, cols["episode"], cols["total_reward"]))
    if not any(xs for _, xs, _ in series):
        raise PoolnetError("no rows to plot")
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    render_line_chart(series, args.out, title="episode reward", window=args.window)
    print(f"wrote {args.out}")
    return 0


def cmd_show_config(args) -> int:
    cfg = _load_config(args)
    sys.stdout.write(cfg.to_json())
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="poolnet", description=__doc__)
    sub = p.add_subparsers(dest="cmd", required=True)

    def add_common(sp, config=True):
        if config:
            sp.add_argument("--config", help="run config JSON")
        sp.add_argument("--seed", type=int, default=None)

    sp = sub.add_parser("gen-city", help="emit grid/timetable/demand files from a city spec")
    sp.add_argument("--spec", help="city spec JSON (defaults to the built-in 5x5 city)")
    sp.add_argument("--out", required=True)
    add_common(sp, config=False)
    sp.set_defaults(fn=cmd_gen_city)

    sp = sub.add_parser("gen-orders", help="sample an order CSV from a demand spec")
    sp.add_argument("--demand", required=True, help="demand.json from gen-city")
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(fn=cmd_gen_orders)

    sp = sub.add_parser("gen-dataset", help="harvest an offline transition dataset")
    add_common(sp)
    sp.add_argument("--recipe", default="T1", help="T1, T2 or custom")
    sp.add_argument("--mixture", help="custom recipe: mode:frac,mode:frac,...")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--episode-budget", type=int, default=200)
    sp.add_argument("--p-pool", dest="p_pool", type=float, default=None)
    sp.set_defaults(fn=cmd_gen_dataset)

    sp = sub.add_parser("train-offline", help="offline CDDQN + Guider training")
    add_common(sp)
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_train_offline)

    sp = sub.add_parser("finetune", help="online fine-tuning from checkpoints")
    add_common(sp)
    sp.add_argument("--checkpoints", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--episodes", type=int, default=None)
    sp.add_argument("--guider", choices=["on", "off"], default="on")
    sp.add_argument("--epsilon0", type=float, default=None)
    sp.add_argument("--p-pool", dest="p_pool", type=float, default=None)
    sp.set_defaults(fn=cmd_finetune)

    sp = sub.add_parser("evaluate", help="greedy no-learning rollouts of a checkpoint")
    add_common(sp)
    sp.add_argument("--checkpoints", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--episodes", type=int, default=None)
    sp.add_argument("--p-pool", dest="p_pool", type=float, default=None)
    sp.set_defaults(fn=cmd_evaluate)

    sp = sub.add_parser("baseline", help="run a named baseline mode")
    add_common(sp)
    sp.add_argument("--mode", required=True, choices=sorted(L.BASELINE_MODES))
    sp.add_argument("--out", required=True)
    sp.add_argument("--episodes", type=int, default=None)
    sp.add_argument("--dataset", help="offline dataset (pwt_rgcql / hybrid_q)")
    sp.add_argument("--epsilon0", type=float, default=None)
    sp.add_argument("--p-pool", dest="p_pool", type=float, default=None)
    sp.set_defaults(fn=cmd_baseline)

    sp = sub.add_parser("plot", help="render metric curves to SVG")
    sp.add_argument("--metrics", required=True, help="comma-separated metrics CSVs")
    sp.add_argument("--out", required=True)
    sp.add_argument("--window", type=int, default=1, help="rolling-average window")
    sp.set_defaults(fn=cmd_plot)

    sp = sub.add_parser("show-config", help="print the effective config")
    add_common(sp)
    sp.set_defaults(fn=cmd_show_config)

    return p


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("POOLNET_LOG", "WARNING").upper())
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except PoolnetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
