"""Navigation policy: shared per-frame CNN encoder plus an MLP action head.

The encoder maps one 144x256 RGB frame to a 20-d vector through ten
convolutional layers arranged as five residual pairs. Three consecutive
encodings are concatenated with the previous action and the relative goal
into a 64-d vector, and three fully connected layers regress (v, w).
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

ENCODING_DIM = 20
FRAME_HISTORY = 3
FEATURE_DIM = FRAME_HISTORY * ENCODING_DIM + 2 + 2  # encodings + prev action + rel goal


class ResidualPair(nn.Module):
    """Two convolutions with a projection shortcut; downsamples by `stride`."""

    def __init__(self, cin, cout, stride, kernel=3):
        super().__init__()
        pad = kernel // 2
        self.conv_a = nn.Conv2d(cin, cout, kernel, stride=stride, padding=pad)
        self.conv_b = nn.Conv2d(cout, cout, 3, padding=1)
        self.proj = nn.Conv2d(cin, cout, 1, stride=stride)

    def forward(self, x):
        h = F.relu(self.conv_a(x))
        h = self.conv_b(h)
        return F.relu(h + self.proj(x))


class FrameEncoder(nn.Module):
    def __init__(self):
        super().__init__()
        self.blocks = nn.Sequential(
            ResidualPair(3, 16, stride=4, kernel=5),
            ResidualPair(16, 32, stride=2),
            ResidualPair(32, 64, stride=2),
            ResidualPair(64, 256, stride=2),
            ResidualPair(256, 256, stride=2),
        )
        self.out = nn.Linear(256, ENCODING_DIM)

    def forward(self, frames):
        h = self.blocks(frames)
        h = h.mean(dim=(2, 3))  # global average pool
        return self.out(h)


class NavigationPolicy(nn.Module):
    """Maps (3 frames, prev action, relative goal) to a clamped action."""

    def __init__(self, v_max: float = 1.0, w_max: float = 1.0, rel_goal_scale: float = 10.0):
        super().__init__()
        self.encoder = FrameEncoder()
        self.head = nn.Sequential(
            nn.Linear(FEATURE_DIM, 128),
            nn.ReLU(),
            nn.Linear(128, 64),
            nn.ReLU(),
            nn.Linear(64, 2),
        )
        self.v_max = v_max
        self.w_max = w_max
        self.rel_goal_scale = rel_goal_scale

    def features(self, frames, prev_action, rel_goal):
        """64-d concatenated feature vector.

        frames: (B, 3, 3, H, W) oldest first; prev_action: (B, 2) raw (v, w);
        rel_goal: (B, 2) raw meters.
        """
        b = frames.shape[0]
        flat = frames.reshape(b * FRAME_HISTORY, *frames.shape[2:])
        enc = self.encoder(flat).reshape(b, FRAME_HISTORY * ENCODING_DIM)
        limits = frames.new_tensor([self.v_max, self.w_max])
        return torch.cat(
            [enc, prev_action / limits, rel_goal / self.rel_goal_scale], dim=1
        )

    def forward(self, frames, prev_action, rel_goal):
        """Normalized action prediction in [-1, 1] units of (v_max, w_max)."""
        return self.head(self.features(frames, prev_action, rel_goal))

    @torch.no_grad()
    def act(self, frames, prev_action, rel_goal):
        """Raw clamped action (v, w) for deployment."""
        out = self.forward(frames, prev_action, rel_goal)
        limits = out.new_tensor([self.v_max, self.w_max])
        return torch.clamp(out, -1.0, 1.0) * limits

    def normalize_targets(self, actions):
        limits = actions.new_tensor([self.v_max, self.w_max])
        return actions / limits


def parameter_count(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())
