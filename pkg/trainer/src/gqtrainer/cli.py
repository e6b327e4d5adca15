"""gq-trainer: train / predict / serve subcommands."""
from __future__ import annotations

import argparse
import logging
import sys

from .data import SchemaError, TASKS
from .predict import predict
from .training import TrainSpec, train


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gq-trainer")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit a model on TrainingExample JSONL")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="checkpoint directory")
    p.add_argument("--checkpoint", default="tiny", help="architecture preset")
    p.add_argument("--lr", type=float, default=5e-5)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--max-epochs", type=int, default=10)
    p.add_argument("--patience", type=int, default=3)
    p.add_argument("--beam-size", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-steps", type=int, default=None)
    p.add_argument("--tasks", nargs="*", choices=TASKS, default=None)

    p = sub.add_parser("predict", help="beam-decode an inputs JSONL")
    p.add_argument("--checkpoint-dir", required=True)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--max-len", type=int, default=160)

    p = sub.add_parser("serve", help="serve the chat-completion wire format")
    p.add_argument("--checkpoint-dir", required=True)
    p.add_argument("--port", type=int, required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--concurrency", type=int, default=4)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "train":
            spec = TrainSpec(
                checkpoint=args.checkpoint, learning_rate=args.lr,
                batch_size=args.batch_size, max_epochs=args.max_epochs,
                patience=args.patience, beam_size=args.beam_size, seed=args.seed,
                max_steps=args.max_steps, task_filter=tuple(args.tasks or ()),
            )
            result = train(spec, args.data, args.out)
            print(f"checkpoint: {result.checkpoint_dir}")
            print(f"epochs: {len(result.epoch_losses)} "
                  f"(early stop: {result.stopped_early})")
            return 0
        if args.command == "predict":
            n = predict(args.checkpoint_dir, args.infile, args.out, max_len=args.max_len)
            print(f"decoded {n} records -> {args.out}")
            return 0
        if args.command == "serve":
            from .serve import serve
            serve(args.checkpoint_dir, port=args.port, host=args.host,
                  max_concurrency=args.concurrency)
            return 0
    except SchemaError as exc:
        logging.getLogger("gq-trainer").error("%s", exc)
        return 1
    except OSError as exc:
        logging.getLogger("gq-trainer").error("%s", exc)
        return 2
    return 1


if __name__ == "__main__":
    sys.exit(main())
