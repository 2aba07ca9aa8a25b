"""Command line entry points: train a domain model, serve it, inspect it."""
from __future__ import annotations

import argparse
import json
import sys

from .data import DOMAINS, DataError, HeadRenderDataset
from .training import TrainConfig, load_checkpoint, train
from .unet import UNetConfig


def cmd_train(args) -> dict:
    widths = tuple(int(w) for w in args.widths.split(","))
    config = TrainConfig(
        domain=args.domain,
        steps=args.steps,
        batch_size=args.batch_size,
        lr=args.lr,
        seed=args.seed,
        pretrain_steps=args.pretrain_steps,
        unet=UNetConfig(widths=widths, rank_self=args.rank_self,
                        rank_cross=args.rank_cross),
    )
    dataset = HeadRenderDataset(args.data, args.domain)
    report = train(dataset, config, out_path=args.out)
    finite = [x for x in report.losses if x == x]
    return {
        "command": "train",
        "checkpoint": args.out,
        "domain": args.domain,
        "samples": len(dataset),
        "steps": config.steps,
        "skipped": report.skipped,
        "first_loss": round(finite[0], 6),
        "last_loss": round(finite[-1], 6),
        "base_hash": report.base_hash,
        "parameters": report.parameter_report,
    }


def cmd_serve(args) -> dict:
    import socket

    import uvicorn

    from .serve import load_model, make_app

    model, meta = load_model(args.checkpoint)
    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.bind((args.host, args.port))
    except OSError as exc:
        raise DataError(f"cannot bind {args.host}:{args.port}: {exc}") from exc
    finally:
        probe.close()
    app = make_app(model, meta, model_name=f"toy-unet-{meta['domain']}")
    print(json.dumps({"command": "serve", "host": args.host,
                      "port": args.port, "domain": meta["domain"]},
                     sort_keys=True), flush=True)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return {}


def cmd_info(args) -> dict:
    model, meta = load_checkpoint(args.checkpoint)
    return {
        "command": "info",
        "checkpoint": args.checkpoint,
        "domain": meta["domain"],
        "space": meta["space"],
        "schedule": meta["schedule"],
        "unet": meta["unet"],
        "base_hash": meta["base_hash"],
        "parameters": model.parameter_report(),
    }


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="guidance-service",
        description="train and serve toy diffusion guidance models")
    sub = parser.add_subparsers(dest="command", required=True)

    tr = sub.add_parser("train", help="train adapters on a render dataset")
    tr.add_argument("--data", required=True,
                    help="directory with dataset.jsonl and images/")
    tr.add_argument("--domain", choices=DOMAINS, default="normal")
    tr.add_argument("--out", required=True, help="checkpoint path to write")
    tr.add_argument("--steps", type=int, default=500)
    tr.add_argument("--batch-size", type=int, default=4)
    tr.add_argument("--lr", type=float, default=2e-3)
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--pretrain-steps", type=int, default=0,
                    help="unconditional base warmup before freezing")
    tr.add_argument("--widths", default="32,64,128",
                    help="comma list of the three scale widths")
    tr.add_argument("--rank-self", type=int, default=16)
    tr.add_argument("--rank-cross", type=int, default=32)

    sv = sub.add_parser("serve", help="serve a checkpoint over HTTP")
    sv.add_argument("--checkpoint", required=True)
    sv.add_argument("--host", default="127.0.0.1")
    sv.add_argument("--port", type=int, default=8485)

    nf = sub.add_parser("info", help="print checkpoint metadata")
    nf.add_argument("--checkpoint", required=True)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {"train": cmd_train, "serve": cmd_serve, "info": cmd_info}
    try:
        status = handlers[args.command](args)
    except (DataError, FileNotFoundError, ValueError) as exc:
        print(json.dumps({"command": args.command, "error": str(exc)},
                         sort_keys=True))
        return 2
    if status:
        print(json.dumps(status, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
