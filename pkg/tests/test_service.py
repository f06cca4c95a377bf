import io
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from gsnav.config import SimConfig
from gsnav.episode import EpisodeConfig, build_scenario, run_episode
from gsnav.service import StepService
from gsnav.splats import save_scene


def run_service_inproc(assets, cfg, messages):
    """Drive a StepService on in-memory streams; returns parsed responses."""
    stdin = io.StringIO("\n".join(json.dumps(m) if isinstance(m, dict) else m for m in messages) + "\n")
    stdout = io.StringIO()
    code = StepService(assets, cfg).run(stdin, stdout)
    lines = [json.loads(l) for l in stdout.getvalue().splitlines() if l.strip()]
    return code, lines


class TestProtocol:
    def test_reset_then_close(self, sim_config, small_assets):
        code, lines = run_service_inproc(
            small_assets, sim_config,
            [
                {"cmd": "reset", "episode": {"scene": small_assets.name, "seed": 2, "human_count": 0}},
                {"cmd": "close"},
            ],
        )
        assert code == 0
        assert len(lines) == 1
        first = lines[0]
        assert set(first) >= {"obs", "rel_goal", "prev_action", "t", "state"}
        assert first["prev_action"] == [0.0, 0.0]
        assert first["t"] == 0.0

    def test_step_towards_wall_collides(self, sim_config, small_assets):
        # drive straight long enough and the arena wall ends the episode
        msgs = [{"cmd": "reset", "episode": {"scene": small_assets.name, "seed": 2, "human_count": 0,
                                               "start": [0.0, 0.0], "start_heading": 0.0,
                                               "goal": [-3.0, 0.0]}}]
        msgs += [{"cmd": "step", "action": [1.0, 0.0]} for _ in range(30)]
        msgs.append({"cmd": "close"})
        code, lines = run_service_inproc(small_assets, sim_config, msgs)
        assert code == 0
        done = [l for l in lines if l.get("done")]
        assert done and done[0]["outcome"] == "collision"

    def test_malformed_line_reports_error(self, sim_config, small_assets):
        code, lines = run_service_inproc(
            small_assets, sim_config,
            [
                {"cmd": "reset", "episode": {"scene": small_assets.name, "seed": 2, "human_count": 0}},
                "this is { not json",
                {"cmd": "step", "action": [0.5, 0.0]},  # episode was aborted
                {"cmd": "close"},
            ],
        )
        assert code == 0
        assert "error" in lines[1]
        assert "error" in lines[2]

    def test_unknown_command(self, sim_config, small_assets):
        code, lines = run_service_inproc(small_assets, sim_config, [{"cmd": "warp"}, {"cmd": "close"}])
        assert "error" in lines[0]

    def test_zero_action_times_out(self, sim_config, small_assets):
        msgs = [{"cmd": "reset", "episode": {"scene": small_assets.name, "seed": 2, "human_count": 0,
                                               "time_limit": 3.0}}]
        msgs += [{"cmd": "step", "action": [0.0, 0.0]} for _ in range(8)]
        msgs.append({"cmd": "close"})
        code, lines = run_service_inproc(small_assets, sim_config, msgs)
        done = [l for l in lines if l.get("done")]
        assert done and done[0]["outcome"] == "timeout"
        assert done[0]["t"] == pytest.approx(3.0)


class TestExpertReplay:
    def test_open_loop_replay_matches_logged_states(self, sim_config, small_assets):
        # run an expert episode, then feed its window actions through the service
        ep = EpisodeConfig(scene=small_assets.name, seed=6, human_count=1)
        sc = build_scenario(small_assets, ep, sim_config)
        record = run_episode(small_assets, ep, sim_config, frame_writer=lambda k, t, s, h: f"{k}")
        assert record.samples, "expert produced no samples"
        ep_dict = ep.to_dict()
        ep_dict["start"] = [sc.start.x, sc.start.y]
        ep_dict["start_heading"] = sc.start.theta
        ep_dict["goal"] = [float(sc.goal[0]), float(sc.goal[1])]

        msgs = [{"cmd": "reset", "episode": ep_dict}]
        msgs += [{"cmd": "step", "action": list(s.action)} for s in record.samples]
        msgs.append({"cmd": "close"})
        code, lines = run_service_inproc(small_assets, sim_config, msgs)
        assert code == 0

        # logged poses at observation times must match the service states
        for sample, response in zip(record.samples[1:], lines[1:]):
            assert response.get("error") is None
            got = np.asarray(response["state"])
            expect = np.asarray(sample.pose)
            assert np.allclose(got[:2], expect[:2], atol=1e-6)
        if record.outcome in ("success", "collision", "timeout"):
            # physics outcomes replay exactly; a planner give-up does not
            final = lines[len(record.samples)]
            assert final["done"] is True
            assert final["outcome"] == record.outcome


class TestSubprocessService:
    def test_cli_serve_reset_close_exit_zero(self, sim_config, small_assets, tmp_path):
        scene_path = tmp_path / "scene.ply"
        save_scene(small_assets.scene, scene_path)
        msgs = (
            json.dumps({"cmd": "reset", "episode": {"scene": small_assets.name, "seed": 2, "human_count": 0}})
            + "\n"
            + json.dumps({"cmd": "close"})
            + "\n"
        )
        proc = subprocess.run(
            [sys.executable, "-m", "gsnav.cli", "serve", "--scene", str(scene_path)],
            input=msgs.encode(),
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            timeout=300,
        )
        assert proc.returncode == 0, proc.stderr.decode()
        out_lines = [l for l in proc.stdout.decode().splitlines() if l.strip()]
        assert len(out_lines) == 1
        assert "obs" in json.loads(out_lines[0])
