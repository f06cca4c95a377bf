"""Command-line entry points.

Subcommands: voxelize, plan, gen-data, metrics, render, serve.
Exit codes: 0 success, 2 bad config, 3 no path, 4 I/O or input data.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import SimConfig, load_config
from .dataset import BACKGROUND, generate_dataset, load_manifest
from .episode import EpisodeConfig, SceneAssets, build_assets, camera_at_state, run_episode
from .errors import BadConfigError, NoPathError, SamplingExhaustedError
from .expert import RobotState
from .render import render_observation
from .service import StepService
from .splats import EmptySceneError, SceneFormatError, load_scene
from .voxelgrid import (
    HUMAN_WALKABLE,
    ROBOT_NAVIGABLE,
    OccupancyGrid2D,
    VoxelGrid,
    inflate,
    project_occupancy,
    voxelize,
    write_pgm,
)


def _config(args) -> SimConfig:
    return load_config(args.config) if args.config else SimConfig()


def _assets(args, cfg: SimConfig) -> SceneAssets:
    scene = load_scene(args.scene)
    if args.grids:
        grids = Path(args.grids)
        nav_p, walk_p = grids / "nav.npz", grids / "walk.npz"
        if nav_p.exists() and walk_p.exists():
            return SceneAssets(
                name=scene.name,
                nav_grid=OccupancyGrid2D.load(nav_p),
                walk_grid=OccupancyGrid2D.load(walk_p),
                scene=scene,
            )
    return build_assets(scene, cfg)


def cmd_voxelize(args) -> int:
    cfg = _config(args)
    scene = load_scene(args.scene)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    grid = voxelize(scene, cfg.scene.resolution, cfg.scene.opacity_threshold)
    z0 = scene.ground_z + cfg.scene.ground_band
    nav = inflate(
        project_occupancy(grid, z0, scene.ground_z + cfg.scene.robot_height, ROBOT_NAVIGABLE),
        cfg.robot.radius,
    )
    walk = inflate(
        project_occupancy(grid, z0, scene.ground_z + cfg.scene.human_height, HUMAN_WALKABLE),
        cfg.human.radius,
    )
    grid.save(out / "voxels.npz")
    nav.save(out / "nav.npz")
    walk.save(out / "walk.npz")
    if args.pgm:
        write_pgm(nav.inflated, out / "nav_inflated.pgm")
        write_pgm(nav.occupied, out / "nav_occupied.pgm")
        write_pgm(walk.inflated, out / "walk_inflated.pgm")
        for k in range(grid.dims[2]):
            write_pgm(grid.occupied[:, :, k], out / f"voxels_z{k:03d}.pgm")
    print(
        f"voxelized {scene.name}: {grid.dims} voxels, "
        f"{int(grid.occupied.sum())} occupied; maps {nav.dims}"
    )
    return 0


def _parse_xy(text):
    parts = [float(v) for v in text.split(",")]
    if len(parts) != 2:
        raise BadConfigError(f"expected 'x,y', got {text!r}")
    return tuple(parts)


def cmd_plan(args) -> int:
    cfg = _config(args)
    assets = _assets(args, cfg)
    ep = EpisodeConfig(
        scene=assets.name,
        seed=args.seed,
        start=_parse_xy(args.start) if args.start else None,
        goal=_parse_xy(args.goal) if args.goal else None,
        human_count=args.humans,
        gait=args.gait,
        control_dt=cfg.robot.control_dt,
        time_limit=cfg.dataset.time_limit,
        goal_tolerance=cfg.dataset.goal_tolerance,
    )
    record = run_episode(assets, ep, cfg)
    print(
        f"outcome={record.outcome} reaching_time={record.reaching_time:.2f}s "
        f"replans={record.replan_count} min_human_dist="
        f"{record.min_human_distance if np.isfinite(record.min_human_distance) else 'n/a'}"
    )
    if args.trace:
        with open(args.trace, "w") as fh:
            for entry in record.plan_log:
                fh.write(json.dumps(entry, sort_keys=True) + "\n")
        print(f"wrote planner trace to {args.trace}")
    return 0 if record.outcome != "plan-failure" else 3


def cmd_gen_data(args) -> int:
    cfg = _config(args)
    assets = _assets(args, cfg)
    manifest = generate_dataset(
        assets,
        n_episodes=args.episodes,
        seed=args.seed,
        out_dir=args.out,
        cfg=cfg,
        human_count=args.humans,
        gait=args.gait,
        render=not args.no_render,
    )
    metrics = manifest["metrics"]
    sr = f"{metrics['sr']:.2%}" if metrics else "n/a"
    art = f"{metrics['art']:.2f}s" if metrics else "n/a"
    print(f"wrote {manifest['total_samples']} samples from {args.episodes} episodes "
          f"to {args.out} (SR {sr}, ART {art})")
    return 0


def cmd_metrics(args) -> int:
    manifest = load_manifest(args.dataset)
    rows = manifest["episodes"]
    if not rows:
        print("no episodes in dataset")
        return 0
    limit = 50.0
    successes = [r for r in rows if r["outcome"] == "success"]
    sr = len(successes) / len(rows)
    art = sum(
        r["reaching_time"] if r["outcome"] == "success" else limit for r in rows
    ) / len(rows)
    print(f"{'scene':<20} {'episodes':>8} {'SR':>8} {'ART (s)':>8}")
    print(f"{manifest['scene']:<20} {len(rows):>8} {sr:>8.2%} {art:>8.2f}")
    return 0


def cmd_render(args) -> int:
    cfg = _config(args)
    assets = _assets(args, cfg)
    pose = [float(v) for v in args.pose.split(",")]
    if len(pose) != 3:
        raise BadConfigError("--pose must be 'x,y,theta'")
    humans = []
    if args.humans:
        from .episode import build_scenario

        ep = EpisodeConfig(scene=assets.name, seed=args.seed, human_count=args.humans)
        humans = build_scenario(assets, ep, cfg).humans
    state = RobotState(pose[0], pose[1], pose[2])
    img = render_observation(assets.scene, humans, args.time, camera_at_state(cfg, state), BACKGROUND)
    img.save_png(args.out)
    print(f"wrote {args.out}")
    return 0


def cmd_serve(args) -> int:
    cfg = _config(args)
    assets = _assets(args, cfg)
    return StepService(assets, cfg, obs_dir=args.obs_dir).run()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gsnav", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, grids=True):
        p.add_argument("--scene", required=True, help="scene PLY path (with .meta.json sidecar)")
        p.add_argument("--config", default=None, help="JSON config file")
        if grids:
            p.add_argument("--grids", default=None, help="directory of cached nav/walk grids")

    p = sub.add_parser("voxelize", help="voxelize a scene and cache occupancy grids")
    add_common(p, grids=False)
    p.add_argument("--out", required=True)
    p.add_argument("--pgm", action="store_true", help="also dump PGM debug images")
    p.set_defaults(fn=cmd_voxelize)

    p = sub.add_parser("plan", help="run one expert episode without rendering")
    add_common(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--humans", type=int, default=0, choices=(0, 1, 2))
    p.add_argument("--gait", default="walk", choices=("walk", "run"))
    p.add_argument("--start", default=None, help="'x,y' (sampled when omitted)")
    p.add_argument("--goal", default=None, help="'x,y' (sampled when omitted)")
    p.add_argument("--trace", default=None, help="write planner trace JSON lines here")
    p.set_defaults(fn=cmd_plan)

    p = sub.add_parser("gen-data", help="generate an imitation dataset")
    add_common(p)
    p.add_argument("--episodes", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--humans", type=int, default=1, choices=(0, 1, 2))
    p.add_argument("--gait", default="walk", choices=("walk", "run"))
    p.add_argument("--no-render", action="store_true", help="skip observation rendering")
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("metrics", help="print SR/ART for a dataset")
    p.add_argument("--dataset", required=True)
    p.set_defaults(fn=cmd_metrics)

    p = sub.add_parser("render", help="render a debug observation")
    add_common(p)
    p.add_argument("--pose", required=True, help="'x,y,theta' robot pose")
    p.add_argument("--time", type=float, default=0.0)
    p.add_argument("--humans", type=int, default=0, choices=(0, 1, 2))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_render)

    p = sub.add_parser("serve", help="run the interactive step protocol on stdio")
    add_common(p)
    p.add_argument("--obs-dir", default=None, help="write observations as PNG files here")
    p.set_defaults(fn=cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except BadConfigError as exc:
        print(f"bad config: {exc}", file=sys.stderr)
        return 2
    except (NoPathError, SamplingExhaustedError) as exc:
        print(f"no path: {exc}", file=sys.stderr)
        return 3
    except (OSError, SceneFormatError, EmptySceneError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
