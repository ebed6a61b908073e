"""Command-line entry point: ``smartbsp <command> [options]``."""
from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from . import dataset, nets, ppo, svg
from .config import ConfigError, RunConfig, load_config
from .grid import OccupancyGrid, polar_binning, read_cloud_csv, threshold_grid
from .planner import ALL_BLOCKED, ConfigurationError, PolicySet, plan_step
from .sim import ScenarioError, make_scenario, run_episode, write_scenario_csv

log = logging.getLogger("smartbsp")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_BLOCKED = 4
EXIT_IO = 5


def _effective_config(args) -> RunConfig:
    cfg = load_config(args.config)
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.out is not None:
        over["output_dir"] = args.out
    return cfg.with_overrides(**over)


def _outdir(cfg: RunConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(cfg.dumps() + "\n")
    return out


def _weights_dir(args, cfg) -> Path:
    return Path(args.weights) if args.weights else Path(cfg.output_dir) / "weights"


def cmd_gen_data(args) -> int:
    cfg = _effective_config(args)
    hyper = cfg.effective_hyper
    if args.count is not None:
        hyper = dataclasses.replace(hyper, dataset_size=args.count)
        cfg = cfg.with_overrides(hyper=hyper)
    out = _outdir(cfg)
    grids = ppo.gen_training_grids(hyper.dataset_size, hyper.obstacle_prob, hyper.seed, cfg.geometry)
    path = Path(args.file) if args.file else out / "grids.bin"
    dataset.write_grids(path, grids)
    print(f"wrote {len(grids)} grids to {path}")
    return EXIT_OK


def write_summary(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["network", "success_rate"])
        for i, s in rows:
            w.writerow([i, f"{s:.4f}"])


def print_summary(rows, title="Success rate of trained networks"):
    print(title)
    print(f"{'network':<10}{'success':>10}")
    for i, s in rows:
        print(f"{'NN ' + str(i):<10}{100 * s:>9.1f}%")


def _eval_grids(cfg):
    hyper = cfg.effective_hyper
    return ppo.gen_training_grids(cfg.eval_size, hyper.obstacle_prob, hyper.seed + 1, cfg.geometry)


def cmd_train(args) -> int:
    cfg = _effective_config(args)
    hyper = cfg.effective_hyper
    if args.epochs is not None:
        hyper = dataclasses.replace(hyper, epochs=args.epochs)
        cfg = cfg.with_overrides(hyper=dataclasses.replace(cfg.hyper, epochs=args.epochs))
    out = _outdir(cfg)
    if args.data:
        grids = dataset.read_grids(args.data)
    else:
        grids = ppo.gen_training_grids(hyper.dataset_size, hyper.obstacle_prob, hyper.seed, cfg.geometry)
    workers = args.workers if args.workers is not None else cfg.workers
    results = ppo.train_all(grids, hyper, cfg.geometry, cfg.weights, workers=workers)
    wdir = _weights_dir(args, cfg)
    wdir.mkdir(parents=True, exist_ok=True)
    (out / "reports").mkdir(exist_ok=True)
    held_out = _eval_grids(cfg)
    rows = []
    policies = PolicySet([pair for pair, _ in results])
    policies.save_dir(wdir)
    for pair, report in results:
        report.success_rate = ppo.evaluate_success(pair, held_out, cfg.geometry, cfg.eval_mode,
                                                   np.random.default_rng(hyper.seed + 2))
        report.to_csv(out / "reports" / f"train_{pair.target_index}.csv")
        rows.append((pair.target_index, report.success_rate))
    write_summary(out / "success_summary.csv", rows)
    print_summary(rows)
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _effective_config(args)
    policies = PolicySet.load_dir(_weights_dir(args, cfg))
    out = _outdir(cfg)
    held_out = _eval_grids(cfg)
    rng = np.random.default_rng(cfg.seed + 2)
    rows = [(i, ppo.evaluate_success(policies[i], held_out, cfg.geometry, cfg.eval_mode, rng))
            for i in range(1, cfg.geometry.n + 1)]
    feasible = ppo.feasible_mask(held_out, cfg.geometry)
    write_summary(out / "eval_summary.csv", rows)
    print_summary(rows)
    print(f"grids with any collision-free path: {100 * feasible.mean():.1f}%")
    return EXIT_OK


def read_grid_file(path, geometry) -> OccupancyGrid:
    p = Path(path)
    if p.suffix.lower() == ".csv":
        return threshold_grid(polar_binning(read_cloud_csv(p), geometry))
    try:
        return OccupancyGrid.from_ascii(p.read_text(), geometry)
    except ValueError as exc:
        raise ConfigError(f"malformed grid file {path}: {exc}") from exc


def cmd_plan(args) -> int:
    cfg = _effective_config(args)
    grid = read_grid_file(args.grid, cfg.geometry)
    policies = PolicySet.load_dir(_weights_dir(args, cfg))
    out = _outdir(cfg)
    res = plan_step(grid, np.array(args.target, dtype=float), policies, cfg.weights, cfg.geometry)
    c = res.cost
    print(f"status: {res.status}")
    print(f"network: {res.used_network} (preferred {res.chosen_index})")
    print(f"action: {' '.join(map(str, res.action))}")
    print(f"cost: total={c.total:.6f} dist={c.dist:.6f} curv={c.curv:.6f} obs={c.obs}")
    res.path.to_csv(out / "path.csv")
    (out / "path.svg").write_text(svg.grid_path_svg(grid, res.path.dense(200)[1],
                                                    args.target, res.path.points))
    return EXIT_BLOCKED if res.status == ALL_BLOCKED else EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _effective_config(args)
    params = cfg.scenario
    if args.count is not None:
        params = dataclasses.replace(params, count=args.count)
    if args.wall_length is not None:
        params = dataclasses.replace(params, wall_length=args.wall_length)
    if args.fov is not None:
        cfg = cfg.with_overrides(geometry=cfg.geometry.with_fov(args.fov))
    cfg = cfg.with_overrides(scenario=params)
    policies = PolicySet.load_dir(_weights_dir(args, cfg))
    out = _outdir(cfg)
    agg = []
    for k in range(args.seeds):
        seed = cfg.seed + k
        world = make_scenario(args.scenario, seed, params, csv_path=args.scenario_file)
        res = run_episode(world, policies, cfg.sim, cfg.geometry, cfg.weights)
        tag = f"{args.scenario}_{seed}"
        res.to_csv(out / f"episode_{tag}.csv")
        write_scenario_csv(out / f"world_{tag}.csv", world)
        (out / f"episode_{tag}.svg").write_text(svg.episode_svg(world, res))
        agg.append((seed, int(res.reached), int(res.collided), res.steps, res.fallbacks, res.cause))
        print(f"seed {seed}: reached={res.reached} collided={res.collided} "
              f"steps={res.steps} fallbacks={res.fallbacks} ({res.cause})")
    with open(out / f"aggregate_{args.scenario}.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["seed", "reached", "collided", "steps", "fallbacks", "cause"])
        w.writerows(agg)
    print(f"reached {sum(a[1] for a in agg)}/{len(agg)}")
    return EXIT_OK


def cmd_inspect_model(args) -> int:
    cfg = _effective_config(args)
    path = Path(args.file)
    pair = nets.load_weights(path)
    print(f"file: {path}")
    print(f"target_index: {pair.target_index}")
    print(f"signature: {nets.signature()}")
    for label, params in (("actor", pair.actor), ("critic", pair.critic)):
        total = sum(v.size for v in params.values())
        print(f"{label}: {total} parameters")
        for name, v in params.items():
            print(f"  {name:<8} {str(v.shape):<18} |w|max={np.abs(v).max():.4g}")
    free = OccupancyGrid.free(cfg.geometry)
    dist = pair.distribution(free)
    print("modal action on an empty grid:", " ".join(map(str, dist.modal().rows)))
    print(f"baseline on an empty grid: {pair.baseline(free):.4f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--weights", help="directory of network_<i>.json files")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="smartbsp", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("gen-data", parents=[common], help="write a seeded grid dataset")
    s.add_argument("--count", type=int)
    s.add_argument("--file", help="dataset path (default <out>/grids.bin)")
    s.set_defaults(func=cmd_gen_data)

    s = sub.add_parser("train", parents=[common], help="train all five networks")
    s.add_argument("--data", help="grid dataset file (generated from the seed if omitted)")
    s.add_argument("--epochs", type=int)
    s.add_argument("--workers", type=int)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", parents=[common], help="held-out success rates")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("plan", parents=[common], help="plan once on a grid file")
    s.add_argument("grid", help="5x5 ASCII grid, or .csv point cloud (x_m,y_m)")
    s.add_argument("--target", type=float, nargs=2, default=(10.0, 0.0), metavar=("X", "Y"))
    s.set_defaults(func=cmd_plan)

    s = sub.add_parser("simulate", parents=[common], help="run seeded episodes")
    s.add_argument("--scenario", choices=("random_field", "wall", "custom_csv"), default="random_field")
    s.add_argument("--scenario-file")
    s.add_argument("--seeds", type=int, default=1)
    s.add_argument("--count", type=int, help="obstacle count for random_field")
    s.add_argument("--wall-length", type=float)
    s.add_argument("--fov", type=float, help="override field of view (degrees)")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("inspect-model", parents=[common], help="describe a weight file")
    s.add_argument("file")
    s.set_defaults(func=cmd_inspect_model)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ConfigurationError, ScenarioError, nets.WeightFileError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ppo.TrainingDiverged as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (OSError, dataset.DatasetError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
