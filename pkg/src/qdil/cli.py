"""Command-line entry points.

Subcommands:
    run             search with a learned reward (or expert mode if the
                    config names no demonstration file)
    eval            re-evaluate a saved archive on the environment reward
    export-heatmap  render a saved archive as CSV + PGM heatmaps
    gen-demos       expert QD run, demonstrator selection, demo recording
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import demos as demos_mod
from . import env as walker
from .archive import GridArchive, export_heatmap, load_snapshot
from .config import Config, load_config, save_config
from .loop import run as run_loop
from .nets import PolicySpec, RunningNorm
from .vppo import Vppo, VppoConfig, make_walker_factory


def _load_cfg(args) -> Config:
    cfg = load_config(args.config) if args.config else Config()
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def cmd_run(args) -> int:
    cfg = _load_cfg(args)
    demo_data = None
    if cfg.demos:
        demo_data = demos_mod.load_demos(cfg.demos).arrays()
    os.makedirs(args.out_dir, exist_ok=True)
    save_config(cfg, os.path.join(args.out_dir, "config.txt"))
    result = run_loop(cfg, demo_data=demo_data, out_dir=args.out_dir)
    m = result.archive.metrics()
    mode = "expert" if demo_data is None else cfg.variant
    print(f"mode={mode} iterations={cfg.iterations} restarts={result.restarts}")
    print(
        f"qd_score={m['qd_score']:.3f} coverage={m['coverage']:.2f}% "
        f"best={m['best'] if m['best'] is None else round(m['best'], 3)} "
        f"average={m['average'] if m['average'] is None else round(m['average'], 3)}"
    )
    print(f"outputs in {args.out_dir}")
    return 0


def _eval_archive(archive: GridArchive, cfg: Config, obs_norm: RunningNorm, seed: int, episodes: int):
    policy_spec = PolicySpec(walker.OBS_DIM, walker.ACT_DIM, tuple(cfg.policy_hidden))
    obs_norm.frozen = True
    vppo = Vppo(
        policy_spec,
        VppoConfig(normalize_obs=False, normalize_rewards=False),
        make_walker_factory(cfg.horizon),
        walker.MEASURE_DIM,
        obs_norm=obs_norm,
    )
    ss = np.random.SeedSequence(seed)
    rows = []
    for (r, c), elite in sorted(archive.cells.items()):
        _, measure, f_true = vppo.evaluate(elite.params, episodes, ss.spawn(1)[0])
        rows.append(((r, c), elite.fitness, f_true, measure))
    return rows


def cmd_eval(args) -> int:
    cfg = load_config(os.path.join(args.archive_dir, "config.txt"))
    if args.seed is not None:
        cfg.seed = args.seed
    archive = load_snapshot(
        os.path.join(args.archive_dir, "archive.csv"),
        os.path.join(args.archive_dir, "archive_params.bin"),
    )
    obs_norm = RunningNorm.load(os.path.join(args.archive_dir, "obs_norm.txt"))
    rows = _eval_archive(archive, cfg, obs_norm, cfg.seed, args.episodes)
    stored = np.array([r[1] for r in rows])
    fresh = np.array([r[2] for r in rows])
    g2 = archive.resolution**2
    print(f"elites={len(rows)} coverage={100.0 * len(rows) / g2:.2f}%")
    print(f"stored:  qd_score={stored.sum():.3f} best={stored.max():.3f} average={stored.mean():.3f}")
    print(f"re-eval: qd_score={fresh.sum():.3f} best={fresh.max():.3f} average={fresh.mean():.3f}")
    if args.out_dir:
        os.makedirs(args.out_dir, exist_ok=True)
        out = os.path.join(args.out_dir, "eval.csv")
        with open(out, "w") as f:
            f.write("row,col,stored_fitness,fresh_fitness,measure1,measure2\n")
            for (r, c), sf, ff, m in rows:
                f.write(
                    f"{r},{c},{float(sf)!r},{float(ff)!r},"
                    f"{float(m[0])!r},{float(m[1])!r}\n"
                )
        print(f"wrote {out}")
    return 0


def cmd_export_heatmap(args) -> int:
    archive = load_snapshot(
        os.path.join(args.archive_dir, "archive.csv"),
        os.path.join(args.archive_dir, "archive_params.bin"),
    )
    os.makedirs(args.out_dir, exist_ok=True)
    csv_path = os.path.join(args.out_dir, "heatmap.csv")
    pgm_path = os.path.join(args.out_dir, "heatmap.pgm")
    export_heatmap(archive, csv_path, pgm_path)
    print(f"wrote {csv_path} and {pgm_path}")
    return 0


def cmd_gen_demos(args) -> int:
    cfg = _load_cfg(args)
    out_dir = args.out_dir
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
    result = demos_mod.generate_expert_archive(cfg, out_dir=out_dir)
    chosen = demos_mod.select_demonstrators(result.archive, cfg.demo_pool, cfg.demo_count)
    demo_set = demos_mod.record_demonstrations(
        result.policy_spec, chosen, cfg.seed, obs_norm=result.obs_norm, horizon=cfg.horizon
    )
    demos_mod.save_demos(args.out, demo_set)
    m = result.archive.metrics()
    print(f"expert archive: qd_score={m['qd_score']:.3f} coverage={m['coverage']:.2f}%")
    print(f"wrote {len(demo_set)} demonstrations to {args.out}")
    print(demos_mod.demo_stats_table(demo_set))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qdil", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)

    pr = sub.add_parser("run", help="archive search with the configured reward")
    pr.add_argument("--config", default=None, help="key=value config file")
    pr.add_argument("--seed", type=int, default=None, help="override the config seed")
    pr.add_argument("--out-dir", required=True)
    pr.set_defaults(fn=cmd_run)

    pe = sub.add_parser("eval", help="re-evaluate a saved archive")
    pe.add_argument("--archive-dir", required=True, help="directory written by run")
    pe.add_argument("--seed", type=int, default=None)
    pe.add_argument("--episodes", type=int, default=4)
    pe.add_argument("--out-dir", default=None)
    pe.set_defaults(fn=cmd_eval)

    ph = sub.add_parser("export-heatmap", help="archive fitness heatmap as CSV + PGM")
    ph.add_argument("--archive-dir", required=True)
    ph.add_argument("--out-dir", required=True)
    ph.set_defaults(fn=cmd_export_heatmap)

    pg = sub.add_parser("gen-demos", help="expert run + demonstration recording")
    pg.add_argument("--config", default=None)
    pg.add_argument("--seed", type=int, default=None)
    pg.add_argument("--out", required=True, help="demonstration file to write")
    pg.add_argument("--out-dir", default=None, help="also save expert archive artifacts here")
    pg.set_defaults(fn=cmd_gen_demos)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
