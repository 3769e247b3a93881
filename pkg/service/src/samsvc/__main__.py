"""Run the service: `python -m samsvc` or the `samsvc` console script."""
from __future__ import annotations

import argparse

import uvicorn

from .app import create_app
from .config import ServiceConfig
from .model import stub_generator


def main(argv=None):
    parser = argparse.ArgumentParser(description="Everything-mode segmentation service")
    parser.add_argument("--checkpoint", default=None, help="model checkpoint path")
    parser.add_argument("--model-type", default=None, help="model registry key (e.g. vit_h)")
    parser.add_argument("--device", default=None)
    parser.add_argument("--host", default=None)
    parser.add_argument("--port", type=int, default=None)
    parser.add_argument("--points-per-side", type=int, default=None)
    parser.add_argument(
        "--stub",
        action="store_true",
        help="serve the deterministic stub generator instead of a real model",
    )
    args = parser.parse_args(argv)

    cfg = ServiceConfig.from_env()
    for field in ("checkpoint", "model_type", "device", "host", "port", "points_per_side"):
        value = getattr(args, field)
        if value is not None:
            setattr(cfg, field, value)
    cfg.validate()

    factory = (lambda: stub_generator(cfg)) if args.stub else None
    app = create_app(cfg, generator_factory=factory)
    uvicorn.run(app, host=cfg.host, port=cfg.port)


if __name__ == "__main__":
    main()
