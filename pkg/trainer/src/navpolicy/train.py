"""Behavior-cloning trainer: MSE on expert actions, Adam, best-val checkpoint."""

from __future__ import annotations

import json
import time
from pathlib import Path

import torch
from torch.utils.data import DataLoader

from .data import NavigationSamples, SampleIndex
from .model import NavigationPolicy, parameter_count


def save_checkpoint(path, policy: NavigationPolicy, extra=None):
    payload = {
        "state_dict": policy.state_dict(),
        "normalization": {
            "rgb": "unit [0,1]",
            "rel_goal_scale": policy.rel_goal_scale,
            "action_limits": [policy.v_max, policy.w_max],
        },
        "v_max": policy.v_max,
        "w_max": policy.w_max,
    }
    if extra:
        payload["meta"] = extra
    torch.save(payload, path)


def load_checkpoint(path) -> NavigationPolicy:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    policy = NavigationPolicy(v_max=payload["v_max"], w_max=payload["w_max"])
    policy.load_state_dict(payload["state_dict"])
    policy.eval()
    return policy


def _epoch_loss(policy, loader, optimizer=None):
    total, count = 0.0, 0
    for frames, prev_action, rel_goal, action in loader:
        pred = policy(frames, prev_action, rel_goal)
        loss = torch.mean((pred - policy.normalize_targets(action)) ** 2)
        if optimizer is not None:
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
        total += float(loss.detach()) * len(frames)
        count += len(frames)
    return total / max(count, 1)


def train(
    dataset_dir,
    epochs: int,
    seed: int,
    out_dir,
    batch_size: int = 64,
    lr: float = 1e-4,
    val_fraction: float = 0.15,
    v_max: float = 1.0,
    w_max: float = 1.0,
):
    """Train on a generated dataset; returns (checkpoint path, log rows)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    torch.manual_seed(seed)

    index = SampleIndex(dataset_dir)
    train_idx, val_idx = index.split_by_episode(val_fraction, seed)
    train_set = NavigationSamples(index, train_idx)
    val_set = NavigationSamples(index, val_idx) if val_idx else None
    train_loader = DataLoader(train_set, batch_size=batch_size, shuffle=True,
                              generator=torch.Generator().manual_seed(seed))
    val_loader = DataLoader(val_set, batch_size=batch_size) if val_set else None

    policy = NavigationPolicy(v_max=v_max, w_max=w_max)
    optimizer = torch.optim.Adam(policy.parameters(), lr=lr)

    best_val = float("inf")
    best_path = out_dir / "policy.pt"
    log_path = out_dir / "training_log.jsonl"
    rows = []
    with open(log_path, "w") as log:
        for epoch in range(epochs):
            t0 = time.time()
            policy.train()
            train_loss = _epoch_loss(policy, train_loader, optimizer)
            policy.eval()
            with torch.no_grad():
                val_loss = _epoch_loss(policy, val_loader) if val_loader else train_loss
            row = {
                "epoch": epoch,
                "train_loss": train_loss,
                "val_loss": val_loss,
                "seconds": time.time() - t0,
            }
            rows.append(row)
            log.write(json.dumps(row) + "\n")
            log.flush()
            if val_loss <= best_val:
                best_val = val_loss
                save_checkpoint(
                    best_path, policy,
                    extra={"epoch": epoch, "val_loss": val_loss, "seed": seed,
                           "params": parameter_count(policy)},
                )
    return best_path, rows
