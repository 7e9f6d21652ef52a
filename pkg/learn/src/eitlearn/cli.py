"""eitlearn command line: train | predict, both driven by a JSON config."""

from __future__ import annotations

import argparse
import json
import sys

from .train import TrainConfig, predict, train


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="eitlearn")
    sub = ap.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a variant from a JSON config")
    t.add_argument("--config", required=True)

    p = sub.add_parser("predict", help="write predictions for a sample range")
    p.add_argument("--config", default=None,
                   help="JSON with keys model, samples, out "
                        "(optional: data, dbar_dir)")
    p.add_argument("--model")
    p.add_argument("--samples", metavar="LO:HI")
    p.add_argument("--out")
    p.add_argument("--data", default=None)
    p.add_argument("--dbar-dir", default=None)

    args = ap.parse_args(argv)
    if args.command == "train":
        try:
            config = TrainConfig.load(args.config)
        except (ValueError, FileNotFoundError, json.JSONDecodeError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        history = train(config)
        print(f"trained {config.variant}: final val loss "
              f"{history['val_loss'][-1]:.6f} "
              f"({history['n_parameters']} parameters, "
              f"{history['wall_seconds']:.0f}s) -> {config.out}")
        return 0
    opts = {"model": args.model, "samples": args.samples, "out": args.out,
            "data": args.data, "dbar_dir": args.dbar_dir}
    if args.config:
        with open(args.config) as fh:
            loaded = json.load(fh)
        for key in ("model", "samples", "out", "data", "dbar_dir"):
            if opts.get(key) in (None,) and key in loaded:
                opts[key] = loaded[key]
    if not (opts["model"] and opts["samples"] and opts["out"]):
        print("error: predict needs model, samples and out "
              "(flags or --config)", file=sys.stderr)
        return 1
    predict(opts["model"], opts["samples"], opts["out"],
            dataset=opts["data"], dbar_dir=opts["dbar_dir"])
    print(f"wrote predictions to {opts['out']}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
