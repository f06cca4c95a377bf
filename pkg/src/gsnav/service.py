"""Line-delimited JSON step protocol for closed-loop policy evaluation.

One JSON object per line on stdin, one per line on stdout:

    {"cmd": "reset", "episode": {...EpisodeConfig...}}
        -> {"obs": ..., "rel_goal": [dx, dy], "prev_action": [v, w], ...}
    {"cmd": "step", "action": [v, w]}
        -> {"obs": ..., "rel_goal": ..., "done": bool, "outcome": str, "t": s, ...}
    {"cmd": "close"}   terminates the session (exit code 0)

The robot advances 0.5 s per step (substepped at control_dt); humans follow
their fixed trajectories. Responses carry the robot state for auditability.
"""

from __future__ import annotations

import base64
import io
import json
import sys
from pathlib import Path

import numpy as np

from .config import SimConfig
from .dataset import BACKGROUND
from .episode import (
    EpisodeConfig,
    SceneAssets,
    Scenario,
    advance_window,
    build_scenario,
    camera_at_state,
    compute_relative_goal,
)
from .expert import RobotState
from .render import render_observation


class StepService:
    def __init__(self, assets: SceneAssets, cfg: SimConfig, obs_dir=None):
        if assets.scene is None:
            raise ValueError("step service needs scene splats for observations")
        self.assets = assets
        self.cfg = cfg
        self.obs_dir = Path(obs_dir) if obs_dir else None
        if self.obs_dir:
            self.obs_dir.mkdir(parents=True, exist_ok=True)
        self.episode: EpisodeConfig | None = None
        self.scenario: Scenario | None = None
        self.state: RobotState | None = None
        self.t = 0.0
        self.step_index = 0
        self.prev_action = (0.0, 0.0)
        self.done = False
        self.outcome = ""

    def _observation(self) -> str:
        img = render_observation(
            self.assets.scene,
            self.scenario.humans,
            self.t,
            camera_at_state(self.cfg, self.state),
            BACKGROUND,
        )
        if self.obs_dir:
            path = self.obs_dir / f"step_{self.step_index:05d}.png"
            img.save_png(path)
            return str(path)
        buf = io.BytesIO()
        from PIL import Image as PILImage

        PILImage.fromarray(img.to_uint8(), mode="RGB").save(buf, format="PNG")
        return base64.b64encode(buf.getvalue()).decode("ascii")

    def _status(self) -> dict:
        return {
            "rel_goal": list(compute_relative_goal(self.state.pose(), self.scenario.goal)),
            "t": self.t,
            "state": [self.state.x, self.state.y, self.state.theta],
        }

    def handle(self, msg: dict) -> dict:
        cmd = msg.get("cmd")
        if cmd == "reset":
            self.episode = EpisodeConfig.from_dict(msg["episode"])
            self.scenario = build_scenario(self.assets, self.episode, self.cfg)
            self.state = self.scenario.start
            self.t = 0.0
            self.step_index = 0
            self.prev_action = (0.0, 0.0)
            self.done = False
            self.outcome = ""
            return {
                "obs": self._observation(),
                "prev_action": list(self.prev_action),
                **self._status(),
            }
        if cmd == "step":
            if self.episode is None:
                raise ValueError("step before reset")
            if self.done:
                raise ValueError("episode already finished; send reset")
            action = msg["action"]
            if not isinstance(action, (list, tuple)) or len(action) != 2:
                raise ValueError("action must be [v, w]")
            states, times, outcome, _ = advance_window(
                self.state,
                self.t,
                (float(action[0]), float(action[1])),
                self.scenario.humans,
                self.assets.nav_grid,
                self.cfg,
                self.episode,
                self.scenario.goal,
            )
            if states:
                last = states[-1]
                self.state = RobotState(last.x, last.y, last.theta)
                self.t = times[-1]
            self.step_index += 1
            self.prev_action = (float(action[0]), float(action[1]))
            if outcome is not None:
                self.done = True
                self.outcome = outcome
            return {
                "obs": self._observation(),
                "done": self.done,
                "outcome": self.outcome,
                **self._status(),
            }
        raise ValueError(f"unknown command {cmd!r}")

    def run(self, stdin=None, stdout=None) -> int:
        stdin = stdin or sys.stdin
        stdout = stdout or sys.stdout
        for line in stdin:
            line = line.strip()
            if not line:
                continue
            try:
                msg = json.loads(line)
            except json.JSONDecodeError as exc:
                self.episode = None
                self.done = True
                print(json.dumps({"error": f"malformed message: {exc}"}), file=stdout, flush=True)
                continue
            if msg.get("cmd") == "close":
                break
            try:
                response = self.handle(msg)
            except Exception as exc:  # abort the episode, keep the session alive
                self.episode = None
                self.done = True
                response = {"error": str(exc)}
            print(json.dumps(response), file=stdout, flush=True)
        return 0
