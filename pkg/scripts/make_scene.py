#!/usr/bin/env python3
"""Generate a synthetic splat arena and write it as scene PLY + metadata."""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from gsnav.config import SimConfig
from gsnav.splats import save_scene
from gsnav.synthetic import make_connected_scene, make_synthetic_scene


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", required=True, help="output PLY path")
    parser.add_argument("--clusters", type=int, default=20)
    parser.add_argument("--extent", type=float, default=12.0)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--ground-noise", action="store_true",
                        help="add low-opacity floor splats (filtered by occupancy)")
    parser.add_argument("--no-connect-check", action="store_true",
                        help="skip the free-space connectivity check")
    args = parser.parse_args()

    if args.no_connect_check:
        scene = make_synthetic_scene(
            args.clusters, args.extent, seed=args.seed, with_ground_noise=args.ground_noise
        )
    else:
        assets = make_connected_scene(
            SimConfig(), n_clusters=args.clusters, extent=args.extent, seed=args.seed,
            with_ground_noise=args.ground_noise,
        )
        scene = assets.scene
    save_scene(scene, args.out)
    print(f"wrote {args.out} ({len(scene.gaussians)} splats) and sidecar metadata")


if __name__ == "__main__":
    main()
