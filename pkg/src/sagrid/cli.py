"""Command line entry point: ``sagrid <subcommand> [config] [overrides]``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import harness, nn_core
from .harness import ExperimentConfig, load_config

log = logging.getLogger("sagrid")


def _int_list(text: str) -> list[int]:
    """'15,20,30' or an inclusive range 'start:stop:step'."""
    if ":" in text:
        parts = [int(p) for p in text.split(":")]
        start, stop = parts[0], parts[1]
        step = parts[2] if len(parts) > 2 else 1
        return list(range(start, stop + 1, step))
    return [int(p) for p in text.split(",") if p]


def _strategies(text: str) -> list[str]:
    return [s.strip().upper() for s in text.split(",") if s.strip()]


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    spec = cfg.sweep
    if args.seed is not None:
        spec.seed = args.seed
    if args.grid_sizes is not None:
        spec.grid_sizes = args.grid_sizes
    if args.radii is not None:
        spec.radii = args.radii
    if args.runs is not None:
        spec.runs_per_cell = args.runs
    if args.strategy is not None:
        spec.strategies = args.strategy
    spec.__post_init__()
    return cfg


def cmd_train_rl(args, cfg):
    out = Path(args.out_dir) / "models"
    out.mkdir(parents=True, exist_ok=True)
    for L in cfg.sweep.grid_sizes:
        for r in cfg.sweep.radii:
            net, steps = harness.train_q_network(L, r, cfg.rl, cfg.sweep.obstacle_density, cfg.sweep.seed)
            nn_core.save(net, out / f"q_L{L}_r{r}.txt")
            print(f"L={L} r_obs={r}: {steps} training steps -> {out / f'q_L{L}_r{r}.txt'}")


def cmd_train_estimator(args, cfg):
    out = Path(args.out_dir) / "models"
    out.mkdir(parents=True, exist_ok=True)
    net, horizon = harness.train_estimator_model(cfg)
    nn_core.save(net, out / "estimator.txt")
    (out / "estimator.json").write_text(json.dumps({"horizon": horizon, "k": cfg.estimator.k}) + "\n",
                                        encoding="utf-8")
    print(f"estimator saved to {out / 'estimator.txt'}; reliable horizon {horizon}")


def cmd_sweep(args, cfg):
    result = harness.run_sweep(cfg, out_dir=args.out_dir)
    print(",".join(harness.SWEEP_HEADER))
    for c in result.cells:
        print(",".join(c.row()))


def cmd_compare(args, cfg):
    rows = harness.compare_to_optimal(cfg, out_dir=args.out_dir)
    for row in rows:
        print(f"L={row.L} r_obs={row.r_obs} {row.strategy:8s} ratio={row.ratio:.4f} "
              f"({row.paired_episodes} paired episodes)")


def cmd_estimate_study(args, cfg):
    study = harness.estimation_study(cfg, out_dir=args.out_dir)
    for name, acc in study.accuracy.items():
        print(f"{name}: accuracy " + " ".join(f"{a:.3f}" for a in acc)
              + f"; reliable horizon {study.reliable_horizon[name]} at threshold {study.threshold}")


def cmd_replay(args, cfg):
    if not args.episode:
        raise SystemExit("replay needs --episode, e.g. --episode L15-r3-0")
    strategy = (args.strategy or cfg.sweep.strategies)[0]
    L, r, _ = harness.parse_episode_id(args.episode)
    models = harness.prepare_models(cfg, Path(args.out_dir) / "models", [strategy], [L], [r])
    rec, trace = harness.replay(cfg, args.episode, strategy, models)
    for row in trace:
        print(f"t={row['t']:3d} o={row['o']} x={row['x']} mode={row['mode']:8s} "
              f"o_action={row['o_action']:5s} x_action={row['x_action']}")
    print(f"steps={rec.steps} failed={rec.failed} collisions={rec.collisions}")


COMMANDS = {
    "train-rl": cmd_train_rl,
    "train-estimator": cmd_train_estimator,
    "sweep": cmd_sweep,
    "compare": cmd_compare,
    "estimate-study": cmd_estimate_study,
    "replay": cmd_replay,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sagrid", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("config", nargs="?", help="YAML or JSON experiment config")
        p.add_argument("--seed", type=int)
        p.add_argument("--out-dir", default="runs")
        p.add_argument("--strategy", type=_strategies, help="comma list of RL, GAME, OPTIMAL")
        p.add_argument("--grid-sizes", type=_int_list, help="'15,20' or '15:50:5'")
        p.add_argument("--radii", type=_int_list)
        p.add_argument("--runs", type=int)
        if name == "replay":
            p.add_argument("--episode", help="episode id such as L15-r3-0")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    cfg = _config(args)
    log.info("config hash %s", cfg.digest())
    COMMANDS[args.command](args, cfg)
    return 0


if __name__ == "__main__":
    sys.exit(main())
