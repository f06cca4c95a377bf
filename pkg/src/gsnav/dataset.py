"""On-disk imitation datasets: per-episode frames, samples, and manifests.

Layout (all content deterministic for a fixed seed):

    <out>/<scene>/ep0000/frames/<k>.png
    <out>/<scene>/ep0000/samples.jsonl
    <out>/<scene>/ep0000/meta.json
    <out>/manifest.json
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .config import SimConfig
from .episode import (
    EpisodeConfig,
    EpisodeRecord,
    SceneAssets,
    camera_at_state,
    compute_metrics,
    run_episode,
)
from .errors import SamplingExhaustedError
from .render import render_observation

BACKGROUND = (0.75, 0.8, 0.85)


def episode_seed(dataset_seed: int, index: int) -> int:
    return dataset_seed * 100_003 + index


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def write_episode(record: EpisodeRecord, ep_dir: Path) -> dict:
    """Persist one episode's samples and metadata; returns its manifest row."""
    ep_dir.mkdir(parents=True, exist_ok=True)
    with open(ep_dir / "samples.jsonl", "w") as fh:
        for sample in record.samples:
            fh.write(json.dumps(sample.to_dict(), sort_keys=True) + "\n")
    meta = {
        "config": record.config.to_dict(),
        "outcome": record.outcome,
        "reaching_time": record.reaching_time,
        "replanned_at": record.replanned_at,
        "min_human_distance": (
            None if not np.isfinite(record.min_human_distance) else record.min_human_distance
        ),
        "humans": [
            {
                "speed": h.trajectory.speed if h.trajectory else None,
                "smoothing_fallback": bool(h.trajectory.smoothing_fallback) if h.trajectory else None,
                "samples": h.trajectory.samples.tolist() if h.trajectory else None,
            }
            for h in record.humans
        ],
        "n_frames": len(record.frame_files),
        "n_samples": len(record.samples),
    }
    _write_json(ep_dir / "meta.json", meta)
    return {
        "id": ep_dir.name,
        "seed": record.config.seed,
        "outcome": record.outcome,
        "reaching_time": record.reaching_time,
        "replans": record.replan_count,
        "n_samples": len(record.samples),
        "human_count": record.config.human_count,
    }


def generate_dataset(
    assets: SceneAssets,
    n_episodes: int,
    seed: int,
    out_dir,
    cfg: SimConfig,
    human_count: int = 1,
    gait: str = "walk",
    render: bool = True,
) -> dict:
    """Run `n_episodes` expert episodes and write the dataset tree.

    Individual plan failures are recorded, not fatal; scenario-construction
    failures (no valid human placement) skip the episode with a stub row.
    """
    if render and assets.scene is None:
        raise ValueError("rendering requires scene splats in the assets")
    out_dir = Path(out_dir)
    scene_dir = out_dir / assets.name
    scene_dir.mkdir(parents=True, exist_ok=True)

    rows = []
    records = []
    for i in range(n_episodes):
        ep = EpisodeConfig(
            scene=assets.name,
            seed=episode_seed(seed, i),
            human_count=human_count,
            gait=gait,
        )
        ep_dir = scene_dir / f"ep{i:04d}"
        frames_dir = ep_dir / "frames"

        frame_writer = None
        if render:
            frames_dir.mkdir(parents=True, exist_ok=True)

            def frame_writer(k, t, state, humans, _dir=frames_dir):
                img = render_observation(
                    assets.scene, humans, t, camera_at_state(cfg, state), BACKGROUND
                )
                rel = f"frames/{k}.png"
                img.save_png(_dir / f"{k}.png")
                return rel

        try:
            record = run_episode(assets, ep, cfg, frame_writer=frame_writer)
        except SamplingExhaustedError as exc:
            rows.append({"id": ep_dir.name, "seed": ep.seed, "outcome": "scenario-failure",
                         "error": str(exc), "reaching_time": ep.time_limit, "replans": 0,
                         "n_samples": 0, "human_count": human_count})
            continue
        records.append(record)
        rows.append(write_episode(record, ep_dir))

    run_params = {
        "scene": assets.name,
        "n_episodes": n_episodes,
        "seed": seed,
        "human_count": human_count,
        "gait": gait,
        "render": render,
    }
    config_hash = hashlib.sha256(
        (cfg.to_json() + json.dumps(run_params, sort_keys=True)).encode()
    ).hexdigest()
    manifest = {
        **run_params,
        "config_hash": config_hash,
        "episodes": rows,
        "total_samples": int(sum(r["n_samples"] for r in rows)),
    }
    if records:
        sr, art = compute_metrics(records)
        manifest["metrics"] = {"sr": sr, "art": art}
    else:
        manifest["metrics"] = None
    _write_json(out_dir / "manifest.json", manifest)
    return manifest


def load_manifest(dataset_dir) -> dict:
    return json.loads((Path(dataset_dir) / "manifest.json").read_text())


def iter_samples(dataset_dir):
    """Yield (episode_dir, sample_dict) over every stored sample."""
    dataset_dir = Path(dataset_dir)
    manifest = load_manifest(dataset_dir)
    scene_dir = dataset_dir / manifest["scene"]
    for row in manifest["episodes"]:
        ep_dir = scene_dir / row["id"]
        samples = ep_dir / "samples.jsonl"
        if not samples.exists():
            continue
        with open(samples) as fh:
            for line in fh:
                line = line.strip()
                if line:
                    yield ep_dir, json.loads(line)
