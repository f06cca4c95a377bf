#!/usr/bin/env python3
"""Measure rasterizer throughput and agreement with the reference renderer."""

import argparse
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from gsnav.camera import intrinsics_from_hfov
from gsnav.render import render, render_reference
from gsnav.splats import GaussianSet


def random_cloud(rng, n):
    return GaussianSet(
        means=rng.uniform(-4, 4, (n, 3)) * [1, 1, 0.5] + [0, 0, 6],
        quats=np.tile([1.0, 0, 0, 0], (n, 1)),
        scales=rng.uniform(0.01, 0.05, (n, 3)),
        opacities=rng.uniform(0.2, 1.0, n),
        colors=rng.uniform(0, 1, (n, 3)),
    )


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--primitives", type=int, default=50_000)
    parser.add_argument("--frames", type=int, default=10)
    args = parser.parse_args()

    cam = intrinsics_from_hfov(256, 144, np.deg2rad(90.0))
    rng = np.random.default_rng(0)

    small = random_cloud(rng, 200)
    err = np.abs(render(small, cam).rgb - render_reference(small, cam).rgb).max()
    print(f"reference agreement (200 primitives): max channel error {err:.2e}")

    big = random_cloud(rng, args.primitives)
    render(big, cam)  # JIT warmup
    t0 = time.time()
    for _ in range(args.frames):
        render(big, cam)
    dt = (time.time() - t0) / args.frames
    print(f"{args.primitives} primitives at 144x256: {dt*1000:.1f} ms/frame = {1/dt:.1f} fps")


if __name__ == "__main__":
    main()
