"""Command-line interface.

    posediff <subcommand> --config <path> [--seed N] [--override key=value]...

Subcommands: gen-data, fit-codebook, train, infer, segment, evaluate,
corrupt, plot.  Successful runs exit 0; failures print a machine-readable
JSON error record on stderr and exit 1.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import RunConfig, load_config
from .pipeline import (
    cmd_fit_codec,
    cmd_gen_data,
    cmd_train,
    corruption_preview,
    evaluate_split,
    load_split,
    require_codec,
    run_infer,
    timestamped_path,
    write_evaluation_report,
    write_inference_report,
)
from .segmenter import SequentialKNNSegmenter


def _common_args(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="YAML config file")
    sub.add_argument("--seed", type=int, default=None, help="override the config seed")
    sub.add_argument(
        "--override",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="dotted config override, repeatable (e.g. training.steps=200)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="posediff", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in [
        ("gen-data", "generate the synthetic corpus and write splits"),
        ("fit-codebook", "fit the pose codec on the training split"),
        ("train", "train the denoiser and length head"),
        ("evaluate", "compute metrics for a split"),
        ("corrupt", "preview the forward corruption of one sample"),
        ("infer", "generate poses for a gloss sequence"),
        ("segment", "segment dataset sequences with sequential-KNN"),
        ("plot", "write loss-curve and skeleton plots"),
    ]:
        p = sub.add_parser(name, help=help_text)
        _common_args(p)
        if name == "evaluate":
            p.add_argument("--split", default="test")
            p.add_argument("--gold-lengths", action="store_true")
        elif name == "corrupt":
            p.add_argument("--split", default="train")
            p.add_argument("--sample", type=int, default=0)
            p.add_argument("--timesteps", default="1,25,50,75,100",
                           help="comma-separated timesteps to preview")
        elif name == "infer":
            p.add_argument("glosses", nargs="+", help="gloss tokens to condition on")
            p.add_argument("--gold-lengths", default=None,
                           help="comma-separated per-gloss lengths (gold mode)")
        elif name == "segment":
            p.add_argument("--split", default="train")
        elif name == "plot":
            p.add_argument("--loss-csv", default=None, help="training log to plot")
            p.add_argument("--split", default="test")
            p.add_argument("--sample", type=int, default=0)
    return parser


def _cmd_segment(config: RunConfig, split: str) -> str:
    samples = load_split(config, split)
    codec = require_codec(config)
    seg = SequentialKNNSegmenter(k=config.segmentation.k, l=config.segmentation.l)
    records = []
    for i, sample in enumerate(samples):
        grid = codec.transform(sample.frames)
        detail = seg.segment(codec.latents(grid), len(sample.glosses))
        records.append(
            {
                "index": i,
                "glosses": sample.glosses,
                "gold_lengths": sample.lengths.tolist(),
                "peaks": detail["peaks"].tolist(),
                "starts": detail["starts"].tolist(),
                "lengths": detail["lengths"].lengths.tolist(),
            }
        )
    path = timestamped_path(Path(config.paths.report_dir), f"segment-{split}", ".json")
    with open(path, "w") as fh:
        json.dump({"split": split, "records": records}, fh, sort_keys=True, indent=1)
    return str(path)


def _cmd_plot(config: RunConfig, loss_csv: str | None, split: str, sample_index: int) -> dict:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out: dict[str, str] = {}
    report_dir = Path(config.paths.report_dir)
    if loss_csv:
        rows = np.genfromtxt(loss_csv, delimiter=",", names=True)
        fig, ax = plt.subplots(figsize=(7, 4))
        for column in ("l_vb", "l_aux", "l_len", "total"):
            ax.plot(rows["step"], rows[column], label=column)
        ax.set_xlabel("step")
        ax.set_ylabel("loss")
        ax.set_yscale("log")
        ax.legend()
        path = timestamped_path(report_dir, "loss-curves", ".png")
        fig.savefig(path, dpi=120, bbox_inches="tight")
        plt.close(fig)
        out["loss_curves"] = str(path)

    samples = load_split(config, split)
    sample = samples[sample_index]
    codec = require_codec(config)
    chains = codec.chains_
    n_show = min(6, sample.frames.shape[0])
    fig, axes = plt.subplots(1, n_show, figsize=(2.2 * n_show, 3))
    for k, ax in enumerate(np.atleast_1d(axes)):
        frame = sample.frames[k * (sample.frames.shape[0] // n_show)]
        for chain in chains:
            for j, parent in enumerate(chain.parents):
                if parent == -1:
                    continue
                a = frame[chain.joints[j]]
                b = frame[chain.joints[parent]]
                ax.plot([a[0], b[0]], [a[1], b[1]], "b-", linewidth=0.8)
        ax.scatter(frame[:, 0], frame[:, 1], s=4, c="k")
        ax.set_xticks([])
        ax.set_yticks([])
        ax.set_aspect("equal")
    path = timestamped_path(report_dir, "skeleton-frames", ".png")
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    out["skeleton_frames"] = str(path)
    return out


def run(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    config = load_config(args.config, overrides=args.override, seed=args.seed)

    if args.command == "gen-data":
        result = cmd_gen_data(config)
    elif args.command == "fit-codebook":
        result = {"codec": cmd_fit_codec(config)}
    elif args.command == "train":
        train = cmd_train(config)
        result = {
            "checkpoint": train.checkpoint,
            "log": train.log_file,
            "final_loss": train.losses[-1] if train.losses else None,
        }
    elif args.command == "evaluate":
        report = evaluate_split(config, args.split, use_gold_lengths=args.gold_lengths or None)
        paths = write_evaluation_report(config, report)
        result = {"report": report, "files": paths}
    elif args.command == "corrupt":
        steps = [int(v) for v in str(args.timesteps).split(",") if v]
        result = corruption_preview(config, args.split, args.sample, steps)
    elif args.command == "infer":
        gold = None
        if args.gold_lengths:
            gold = np.array([int(v) for v in args.gold_lengths.split(",")])
        outcome = run_infer(config, list(args.glosses), gold_lengths=gold)
        path = write_inference_report(config, outcome, list(args.glosses))
        result = {
            "file": path,
            "lengths": outcome.lengths.tolist(),
            "score": outcome.score,
        }
    elif args.command == "segment":
        result = {"file": _cmd_segment(config, args.split)}
    elif args.command == "plot":
        result = _cmd_plot(config, args.loss_csv, args.split, args.sample)
    else:  # pragma: no cover - argparse enforces the choices
        raise ValueError(f"unknown command {args.command!r}")

    json.dump(result, sys.stdout, sort_keys=True, indent=1, default=str)
    sys.stdout.write("\n")
    return 0


def main() -> None:
    try:
        sys.exit(run())
    except SystemExit:
        raise
    except Exception as err:  # noqa: BLE001 - single CLI error boundary
        json.dump(
            {"error": type(err).__name__, "message": str(err)},
            sys.stderr,
            sort_keys=True,
        )
        sys.stderr.write("\n")
        sys.exit(1)


if __name__ == "__main__":
    main()
