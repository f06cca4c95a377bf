import json
from pathlib import Path

import numpy as np
import pytest
from PIL import Image


def write_fake_dataset(out_dir, n_episodes=2, samples_per_episode=6, seed=0,
                       action_fn=None, size=(144, 256)):
    """Fabricate a dataset tree in the simulator's on-disk layout."""
    rng = np.random.default_rng(seed)
    out_dir = Path(out_dir)
    scene = "fake"
    rows = []
    for e in range(n_episodes):
        ep_dir = out_dir / scene / f"ep{e:04d}"
        frames_dir = ep_dir / "frames"
        frames_dir.mkdir(parents=True, exist_ok=True)
        n_frames = samples_per_episode
        for k in range(n_frames):
            img = (rng.random((size[0], size[1], 3)) * 255).astype(np.uint8)
            Image.fromarray(img).save(frames_dir / f"{k}.png")
        with open(ep_dir / "samples.jsonl", "w") as fh:
            for k in range(samples_per_episode):
                action = (
                    action_fn(e, k) if action_fn
                    else [float(rng.uniform(-1, 1)), float(rng.uniform(-1, 1))]
                )
                sample = {
                    "frames": [
                        f"frames/{max(0, k - 2)}.png",
                        f"frames/{max(0, k - 1)}.png",
                        f"frames/{k}.png",
                    ],
                    "prev_action": [0.0, 0.0] if k == 0 else [0.5, 0.0],
                    "rel_goal": [float(rng.uniform(-5, 5)), float(rng.uniform(-5, 5))],
                    "action": list(action),
                    "t": 0.5 * k,
                    "pose": [0.0, 0.0, 0.0],
                }
                fh.write(json.dumps(sample) + "\n")
        (ep_dir / "meta.json").write_text(json.dumps({"outcome": "success"}))
        rows.append({"id": f"ep{e:04d}", "seed": e, "outcome": "success",
                     "reaching_time": 10.0, "replans": 0,
                     "n_samples": samples_per_episode, "human_count": 0})
    manifest = {
        "scene": scene, "n_episodes": n_episodes, "seed": seed,
        "episodes": rows, "total_samples": n_episodes * samples_per_episode,
        "metrics": {"sr": 1.0, "art": 10.0}, "config_hash": "fake",
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return out_dir


@pytest.fixture
def fake_dataset(tmp_path):
    return write_fake_dataset(tmp_path / "ds")
