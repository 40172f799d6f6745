"""Service entry points: serve a bundle, or fine-tune one from pairs files."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path


def cmd_serve(args) -> int:
    import uvicorn

    from .app import create_app
    from .bundle import ModelBundle

    bundle = ModelBundle.load(args.model)
    uvicorn.run(create_app(bundle), host=args.host, port=args.port,
                log_level="info")
    return 0


def cmd_finetune(args) -> int:
    from .finetune import fine_tune

    files = [f for f in args.pairs.split(",") if f]
    bundle, metrics = fine_tune(
        files, epochs=args.epochs, base=args.base, lr=args.lr,
        batch_size=args.batch_size, max_length=args.max_length, seed=args.seed)
    bundle.save(args.out)
    (Path(args.out) / "metrics.json").write_text(json.dumps(metrics),
                                                 encoding="utf-8")
    print(json.dumps(metrics))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scorer-service")
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve")
    serve.add_argument("--model", required=True)
    serve.add_argument("--port", type=int, default=8000)
    serve.add_argument("--host", default="127.0.0.1")
    serve.set_defaults(handler=cmd_serve)

    ft = sub.add_parser("finetune")
    ft.add_argument("--pairs", required=True,
                    help="comma-separated pairs files, one per epoch")
    ft.add_argument("--epochs", type=int, default=5)
    ft.add_argument("--base", default=None,
                    help="pretrained checkpoint; omitted = small scratch encoder")
    ft.add_argument("--lr", type=float, default=1e-3)
    ft.add_argument("--batch-size", dest="batch_size", type=int, default=4)
    ft.add_argument("--max-length", dest="max_length", type=int, default=128)
    ft.add_argument("--seed", type=int, default=0)
    ft.add_argument("--out", required=True)
    ft.set_defaults(handler=cmd_finetune)
    return parser


def main() -> None:
    logging.basicConfig(level=logging.INFO)
    args = build_parser().parse_args()
    sys.exit(args.handler(args))


if __name__ == "__main__":
    main()
