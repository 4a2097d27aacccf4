"""``mudec`` command line: one subcommand per pipeline stage."""

from __future__ import annotations

import argparse
import logging
import sys

from . import pipeline
from .config import PipelineConfig, load_config
from .errors import ConfigError, MudecError

log = logging.getLogger("mudec")


def _common(p: argparse.ArgumentParser, out_required: bool = True) -> None:
    p.add_argument("--config", help="JSON config file mirroring PipelineConfig field names")
    p.add_argument("--seed", type=int, help="master seed (overrides the config)")
    p.add_argument("--jobs", type=int, help="worker threads for per-trial stages")
    p.add_argument("--out", required=out_required, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mudec", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate synthetic trials (EMG, force, true spikes)")
    _common(p)
    p.add_argument("--scenario", choices=["easy", "medium", "hard"])

    p = sub.add_parser("decompose", help="fit the decomposition on training trials, write neural drives")
    p.add_argument("in_dir", help="directory written by `mudec synth` (or a manifest for real data)")
    p.add_argument("--train-trials", help="comma-separated trial names to fit on (default: seeded split)")
    _common(p)

    p = sub.add_parser("dataset", help="window and standardise drives")
    p.add_argument("drive_dir")
    _common(p)

    p = sub.add_parser("train", help="train a decoder and evaluate it on the test trials")
    p.add_argument("drive_dir")
    p.add_argument("--model", choices=["tcn", "snn"])
    _common(p)

    p = sub.add_parser("eval", help="metrics table for a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("drive_dir")
    p.add_argument("--trials", help="comma-separated trial names (default: test split)")
    _common(p, out_required=False)

    p = sub.add_parser("plot", help="SVG + CSV of predicted vs measured force, or loss curves")
    p.add_argument("--report", help="train_report.json to plot loss curves from")
    p.add_argument("--checkpoint")
    p.add_argument("--drives", help="drive directory holding the trial")
    p.add_argument("--trial")
    _common(p)
    return parser


def _config(args) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.jobs is not None:
        cfg.jobs = args.jobs
    if getattr(args, "scenario", None):
        cfg.scenario = args.scenario
    if getattr(args, "model", None):
        cfg.model.kind = args.model
    return cfg.validate()


def _split_arg(value: str | None) -> list[str] | None:
    return [v.strip() for v in value.split(",") if v.strip()] if value else None


def run(args) -> None:
    cfg = _config(args)
    cmd = args.command
    if cmd == "synth":
        m = pipeline.synth(cfg, args.out)
        print(f"wrote {len(m['trials'])} trials ({cfg.scenario}) to {args.out}")
    elif cmd == "decompose":
        try:
            res = pipeline.decompose(cfg, args.in_dir, args.out, _split_arg(args.train_trials))
        except MudecError as exc:
            print(f"decomposition failed: {exc}", file=sys.stderr)
            raise
        print(res.report_text, end="")
    elif cmd == "dataset":
        ds = pipeline.dataset(cfg, args.drive_dir, args.out)
        print(f"windows: train {len(ds.train)}, val {len(ds.val)}, test {len(ds.test)}")
    elif cmd == "train":
        res = pipeline.train_model(cfg, args.drive_dir, args.out)
        print(pipeline.report_key_values(res.report), end="")
        print(res.table)
    elif cmd == "eval":
        _, table = pipeline.eval_checkpoint(cfg, args.checkpoint, args.drive_dir, _split_arg(args.trials), args.out)
        print(table)
    elif cmd == "plot":
        if args.report:
            print(pipeline.plot_report(args.report, args.out))
        elif args.checkpoint and args.drives and args.trial:
            svg, csv_path = pipeline.plot_trial(cfg, args.checkpoint, args.drives, args.trial, args.out)
            print(svg)
            print(csv_path)
        else:
            raise ConfigError("plot needs --report, or --checkpoint, --drives and --trial")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        run(args)
    except MudecError as exc:
        print(f"mudec {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
