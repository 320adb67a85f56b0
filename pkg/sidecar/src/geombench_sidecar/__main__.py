"""Serve the embedding provider: ``geombench-sidecar --models dinov2,clip``."""

from __future__ import annotations

import argparse


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="geombench-sidecar")
    parser.add_argument(
        "--models", default="dinov2,clip,resnet50",
        help="comma-separated registry tags to serve (pixel = test stub)",
    )
    parser.add_argument("--port", type=int, default=8008)
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--max-batch", type=int, default=32)
    parser.add_argument(
        "--deterministic", action=argparse.BooleanOptionalAction, default=True,
        help="pin all nondeterminism sources (one in-flight batch per model)",
    )
    args = parser.parse_args(argv)

    import uvicorn

    from .server import create_app

    app = create_app(
        models=tuple(m for m in args.models.split(",") if m),
        deterministic=args.deterministic,
        max_batch=args.max_batch,
    )
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
