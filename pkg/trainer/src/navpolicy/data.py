"""Load simulator datasets (per-episode frames + samples.jsonl + manifest)."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch
from PIL import Image
from torch.utils.data import Dataset


def load_image(path) -> np.ndarray:
    with Image.open(path) as img:
        arr = np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0
    return np.transpose(arr, (2, 0, 1))  # CHW


class SampleIndex:
    """Flat list of (episode_dir, sample_dict) rows from a dataset tree."""

    def __init__(self, dataset_dir):
        self.dataset_dir = Path(dataset_dir)
        manifest_path = self.dataset_dir / "manifest.json"
        self.manifest = json.loads(manifest_path.read_text())
        scene_dir = self.dataset_dir / self.manifest["scene"]
        self.rows = []
        self.episode_of_row = []
        for ep_idx, row in enumerate(self.manifest["episodes"]):
            samples = scene_dir / row["id"] / "samples.jsonl"
            if not samples.exists():
                continue
            ep_dir = scene_dir / row["id"]
            with open(samples) as fh:
                for line in fh:
                    line = line.strip()
                    if line:
                        self.rows.append((ep_dir, json.loads(line)))
                        self.episode_of_row.append(ep_idx)
        if not self.rows:
            raise ValueError(f"dataset at {dataset_dir} contains no samples")

    def split_by_episode(self, val_fraction: float, seed: int):
        """Deterministic train/val row indices, split at episode granularity."""
        episodes = sorted(set(self.episode_of_row))
        rng = np.random.default_rng(seed)
        perm = rng.permutation(len(episodes))
        n_val = max(1, int(round(val_fraction * len(episodes)))) if len(episodes) > 1 else 0
        val_eps = {episodes[i] for i in perm[:n_val]}
        train_idx = [i for i, e in enumerate(self.episode_of_row) if e not in val_eps]
        val_idx = [i for i, e in enumerate(self.episode_of_row) if e in val_eps]
        if not train_idx:  # degenerate single-episode datasets
            train_idx, val_idx = val_idx, train_idx
        return train_idx, val_idx


class NavigationSamples(Dataset):
    """Tensors for one dataset row: 3 frames, prev action, rel goal, action."""

    def __init__(self, index: SampleIndex, rows=None, cache_images: bool = True):
        self.index = index
        self.row_ids = list(rows) if rows is not None else list(range(len(index.rows)))
        self._cache = {} if cache_images else None

    def __len__(self):
        return len(self.row_ids)

    def _frame(self, ep_dir, ref):
        key = (str(ep_dir), ref)
        if self._cache is not None and key in self._cache:
            return self._cache[key]
        arr = load_image(ep_dir / ref)
        if self._cache is not None:
            self._cache[key] = arr
        return arr

    def __getitem__(self, i):
        ep_dir, sample = self.index.rows[self.row_ids[i]]
        frames = np.stack([self._frame(ep_dir, ref) for ref in sample["frames"]])
        return (
            torch.from_numpy(frames),
            torch.tensor(sample["prev_action"], dtype=torch.float32),
            torch.tensor(sample["rel_goal"], dtype=torch.float32),
            torch.tensor(sample["action"], dtype=torch.float32),
        )
