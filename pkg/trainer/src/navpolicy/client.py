"""Closed-loop evaluation over the simulator's line-delimited step protocol.

The simulator runs as a subprocess (`python -m gsnav.cli serve --scene ...`);
this client feeds actions and maintains the 3-frame observation history
(replicating the first frame at episode start).
"""

from __future__ import annotations

import base64
import io
import json
import subprocess
import sys
from collections import deque
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .model import FRAME_HISTORY
from .train import load_checkpoint


def decode_observation(obs: str) -> np.ndarray:
    """Observation payload (base64 PNG or a file path) to CHW float array."""
    if len(obs) < 4096 and Path(obs).exists():
        img = Image.open(obs)
    else:
        img = Image.open(io.BytesIO(base64.b64decode(obs)))
    arr = np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0
    return np.transpose(arr, (2, 0, 1))


class SimulatorClient:
    def __init__(self, scene_path, config_path=None, python=None):
        cmd = [python or sys.executable, "-m", "gsnav.cli", "serve", "--scene", str(scene_path)]
        if config_path:
            cmd += ["--config", str(config_path)]
        self.proc = subprocess.Popen(
            cmd, stdin=subprocess.PIPE, stdout=subprocess.PIPE, text=True, bufsize=1
        )

    def _request(self, msg: dict) -> dict:
        self.proc.stdin.write(json.dumps(msg) + "\n")
        self.proc.stdin.flush()
        line = self.proc.stdout.readline()
        if not line:
            raise RuntimeError("simulator terminated unexpectedly")
        response = json.loads(line)
        if "error" in response:
            raise RuntimeError(f"simulator error: {response['error']}")
        return response

    def reset(self, episode: dict) -> dict:
        return self._request({"cmd": "reset", "episode": episode})

    def step(self, action) -> dict:
        return self._request({"cmd": "step", "action": [float(action[0]), float(action[1])]})

    def close(self):
        try:
            self.proc.stdin.write(json.dumps({"cmd": "close"}) + "\n")
            self.proc.stdin.flush()
        except (BrokenPipeError, ValueError):
            pass
        self.proc.wait(timeout=30)
        return self.proc.returncode


class PolicyDriver:
    """Feeds the frame history through a policy checkpoint."""

    def __init__(self, checkpoint_path):
        self.policy = load_checkpoint(checkpoint_path)

    def start_episode(self, first_frame: np.ndarray):
        self.history = deque([first_frame] * FRAME_HISTORY, maxlen=FRAME_HISTORY)

    def act(self, frame: np.ndarray, prev_action, rel_goal):
        self.history.append(frame)
        frames = torch.from_numpy(np.stack(self.history)[None])
        pa = torch.tensor([prev_action], dtype=torch.float32)
        rg = torch.tensor([rel_goal], dtype=torch.float32)
        action = self.policy.act(frames, pa, rg)[0]
        return float(action[0]), float(action[1])


class ZeroPolicy:
    def start_episode(self, first_frame):
        pass

    def act(self, frame, prev_action, rel_goal):
        return 0.0, 0.0


def evaluate_closed_loop(
    driver,
    scene_path,
    n_episodes: int,
    seed: int,
    human_count: int = 0,
    time_limit: float = 50.0,
    config_path=None,
    report_path=None,
):
    """Drive episodes through the step protocol; SR/ART with 50 s failure rule."""
    client = SimulatorClient(scene_path, config_path)
    outcomes = []
    try:
        for k in range(n_episodes):
            episode = {
                "scene": Path(scene_path).stem,
                "seed": seed * 1000 + k,
                "human_count": human_count,
                "time_limit": time_limit,
            }
            response = client.reset(episode)
            frame = decode_observation(response["obs"])
            driver.start_episode(frame)
            prev_action = tuple(response["prev_action"])
            rel_goal = tuple(response["rel_goal"])
            outcome, reach_t = "timeout", time_limit
            for _ in range(int(np.ceil(time_limit / 0.5)) + 1):
                action = driver.act(frame, prev_action, rel_goal)
                response = client.step(action)
                frame = decode_observation(response["obs"])
                prev_action = action
                rel_goal = tuple(response["rel_goal"])
                if response["done"]:
                    outcome = response["outcome"]
                    reach_t = response["t"]
                    break
            outcomes.append({"episode": k, "outcome": outcome, "reaching_time": reach_t})
    finally:
        client.close()

    n = len(outcomes)
    sr = sum(1 for o in outcomes if o["outcome"] == "success") / n
    art = sum(
        o["reaching_time"] if o["outcome"] == "success" else time_limit for o in outcomes
    ) / n
    result = {"episodes": outcomes, "sr": sr, "art": art, "n": n}
    if report_path:
        Path(report_path).write_text(json.dumps(result, indent=2) + "\n")
    return result
