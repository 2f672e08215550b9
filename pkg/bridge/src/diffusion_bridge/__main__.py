"""Entry point: `python -m diffusion_bridge (--echo | --checkpoint PATH)`."""
from __future__ import annotations

import argparse
import sys

from .server import CheckpointPredictor, EchoPredictor, serve


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="diffusion_bridge",
        description="Denoiser server for the specdiff stdio bridge protocol.")
    mode = parser.add_mutually_exclusive_group(required=True)
    mode.add_argument("--echo", action="store_true",
                      help="reply with the request payload, no model")
    mode.add_argument("--checkpoint", help="TorchScript epsilon-model path")
    parser.add_argument("--device", default="cpu",
                        help="torch device for --checkpoint (default cpu)")
    args = parser.parse_args(argv)

    if args.echo:
        predictor = EchoPredictor()
    else:
        try:
            predictor = CheckpointPredictor(args.checkpoint, args.device,
                                            stderr=sys.stderr)
        except Exception as exc:
            print(f"error={exc}", file=sys.stderr)
            return 1
    return serve(sys.stdin.buffer, sys.stdout.buffer, sys.stderr, predictor)


if __name__ == "__main__":
    sys.exit(main())
