"""CLI: train a policy on a dataset, evaluate a checkpoint closed-loop."""

from __future__ import annotations

import argparse
import json
import sys


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="navpolicy", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="behavior-clone a policy from a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--lr", type=float, default=1e-4)

    p = sub.add_parser("evaluate", help="closed-loop SR/ART through the step protocol")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--scene", required=True)
    p.add_argument("--episodes", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--humans", type=int, default=0)
    p.add_argument("--config", default=None)
    p.add_argument("--report", default=None)
    p.add_argument("--zero-baseline", action="store_true",
                   help="evaluate the zero-action baseline instead of the checkpoint")

    args = parser.parse_args(argv)
    if args.command == "train":
        from .train import train

        path, rows = train(args.dataset, args.epochs, args.seed, args.out,
                           batch_size=args.batch_size, lr=args.lr)
        print(f"checkpoint: {path} (final val loss {rows[-1]['val_loss']:.5f})")
        return 0

    from .client import PolicyDriver, ZeroPolicy, evaluate_closed_loop

    driver = ZeroPolicy() if args.zero_baseline else PolicyDriver(args.checkpoint)
    result = evaluate_closed_loop(
        driver, args.scene, args.episodes, args.seed,
        human_count=args.humans, config_path=args.config, report_path=args.report,
    )
    print(f"SR {result['sr']:.0%}  ART {result['art']:.2f}s over {result['n']} episodes")
    return 0


if __name__ == "__main__":
    sys.exit(main())
