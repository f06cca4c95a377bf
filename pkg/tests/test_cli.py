import json
from pathlib import Path

import numpy as np
import pytest

from gsnav.cli import main
from gsnav.splats import save_scene


@pytest.fixture(scope="module")
def scene_on_disk(small_assets, tmp_path_factory):
    path = tmp_path_factory.mktemp("scene") / "arena.ply"
    save_scene(small_assets.scene, path)
    return path


class TestCli:
    def test_voxelize(self, scene_on_disk, tmp_path):
        out = tmp_path / "grids"
        code = main(["voxelize", "--scene", str(scene_on_disk), "--out", str(out), "--pgm"])
        assert code == 0
        assert (out / "voxels.npz").exists()
        assert (out / "nav.npz").exists()
        assert (out / "walk.npz").exists()
        assert list(out.glob("*.pgm"))

    def test_plan_uses_cached_grids(self, scene_on_disk, tmp_path):
        grids = tmp_path / "grids"
        assert main(["voxelize", "--scene", str(scene_on_disk), "--out", str(grids)]) == 0
        trace = tmp_path / "trace.jsonl"
        code = main([
            "plan", "--scene", str(scene_on_disk), "--grids", str(grids),
            "--seed", "2", "--trace", str(trace),
        ])
        assert code == 0
        entries = [json.loads(l) for l in trace.read_text().splitlines()]
        assert entries and {"t", "expansions", "cost"} <= set(entries[0])

    def test_gen_data_and_metrics(self, scene_on_disk, tmp_path, capsys):
        out = tmp_path / "ds"
        code = main([
            "gen-data", "--scene", str(scene_on_disk), "--episodes", "1", "--seed", "5",
            "--out", str(out), "--humans", "0", "--no-render",
        ])
        assert code == 0
        assert (out / "manifest.json").exists()
        assert main(["metrics", "--dataset", str(out)]) == 0
        printed = capsys.readouterr().out
        assert "SR" in printed

    def test_render_writes_png(self, scene_on_disk, tmp_path):
        out = tmp_path / "obs.png"
        code = main([
            "render", "--scene", str(scene_on_disk), "--pose", "0,0,0",
            "--time", "0.0", "--out", str(out),
        ])
        assert code == 0
        from PIL import Image as PILImage

        img = PILImage.open(out)
        assert img.size == (256, 144)

    def test_missing_scene_is_io_error(self, tmp_path):
        code = main(["voxelize", "--scene", str(tmp_path / "nope.ply"), "--out", str(tmp_path)])
        assert code == 4

    def test_bad_config_exit_code(self, scene_on_disk, tmp_path):
        cfg = tmp_path / "bad.json"
        cfg.write_text('{"planner": {"nonsense_key": 1}}')
        code = main([
            "plan", "--scene", str(scene_on_disk), "--seed", "1", "--config", str(cfg),
        ])
        assert code == 2

    def test_config_round_trip_keys(self, tmp_path):
        from gsnav.config import SimConfig, load_config

        path = tmp_path / "cfg.json"
        cfg = SimConfig()
        cfg.planner.safety_margin = 1.25
        path.write_text(cfg.to_json())
        back = load_config(path)
        assert back.planner.safety_margin == 1.25
        assert back.to_dict() == cfg.to_dict()
