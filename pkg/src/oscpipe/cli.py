"""Command-line entry point: ``oscpipe <command> [options]``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .io import FormatError
from .masks import MaskError
from .model import ModelError
from .pipeline import DEFAULT_DELTAS, DEFAULT_TAUS, STAGES, PipelineError, RunConfig, run_pipeline
from .synth import SynthConfig, SynthError

OUT_ENV = "OSCPIPE_OUT"


def _common(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("global options")
    g.add_argument("--manifest", type=Path, help="dataset manifest (default: <out>/dataset/manifest.json)")
    g.add_argument("--out", type=Path, default=None, help=f"output directory (default: ${OUT_ENV} or ./oscpipe_out)")
    g.add_argument("--jobs", type=int, default=1, help="worker processes for per-clip work")
    g.add_argument("--seed", type=int, default=0, help="seed for every stochastic stage")
    g.add_argument("--thresholds", type=Path, help="per-verb threshold table (JSON)")
    g.add_argument("--verb", help="restrict to clips of one verb")
    g.add_argument("--labels", type=Path, help="label file to consume instead of the default artifact")
    g.add_argument("-v", "--verbose", action="store_true")


def _eval_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--split", choices=["full", "transition", "seen", "novel"], default="full")
    p.add_argument("--fuse-states", action="store_true", help="score the state-agnostic union of both classes")
    p.add_argument("--per-verb", action="store_true")
    p.add_argument("--oracle", action="store_true", help="label proposals from ground truth (upper bound)")
    p.add_argument("--theta", type=float, default=0.5, help="oracle overlap fraction")


def _synth_opts(p: argparse.ArgumentParser) -> None:
    d = SynthConfig()
    p.add_argument("--clips", type=int, default=d.clips)
    p.add_argument("--frames", type=int, default=d.frames_per_clip)
    p.add_argument("--masklets", type=int, default=d.masklets_per_clip)
    p.add_argument("--distractors", type=int, default=d.distractors_per_clip)
    p.add_argument("--grid", type=int, nargs=2, default=list(d.grid), metavar=("H", "W"))
    p.add_argument("--window", type=float, nargs=2, default=list(d.transition_window), metavar=("LO", "HI"))
    p.add_argument("--noise-flip", type=float, default=d.noise_flip_prob)
    p.add_argument("--ambiguous", type=float, default=d.ambiguous_prob)
    p.add_argument("--margin", type=float, default=d.score_margin)
    p.add_argument("--verbs", nargs="+", default=list(d.verbs))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="oscpipe", description="Object-state-change pseudo-label pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset and its truth labels")
    _common(p)
    _synth_opts(p)

    p = sub.add_parser("label", help="pseudo-label regions from similarity scores")
    _common(p)

    p = sub.add_parser("refine", help="apply causal ordering and ambiguity resolution")
    _common(p)
    p.add_argument("--report", action="store_true", help="write per-clip refinement counts as CSV")

    p = sub.add_parser("eval", help="segmentation mIoU against ground truth")
    _common(p)
    _eval_opts(p)

    p = sub.add_parser("progress", help="progress curves and tau / end-state metrics")
    _common(p)
    p.add_argument("--annotations", action="store_true", help="build curves from ground truth instead of labels")
    p.add_argument("--oracle", action="store_true")
    p.add_argument("--theta", type=float, default=0.5)

    p = sub.add_parser("analyze", help="phase durations, areas and progression profiles")
    _common(p)
    p.add_argument("--bins", type=int, default=10)

    p = sub.add_parser("gridsearch", help="per-verb threshold grid search on a labeled dev set")
    _common(p)
    p.add_argument("--taus", type=float, nargs="+", default=list(DEFAULT_TAUS))
    p.add_argument("--deltas", type=float, nargs="+", default=list(DEFAULT_DELTAS))

    p = sub.add_parser("run", help="run several stages in pipeline order")
    _common(p)
    p.add_argument("--stages", required=True, help=f"comma-separated subset of {','.join(STAGES)}")
    p.add_argument("--report", action="store_true")
    p.add_argument("--annotations", action="store_true")
    p.add_argument("--bins", type=int, default=10)
    p.add_argument("--taus", type=float, nargs="+", default=list(DEFAULT_TAUS))
    p.add_argument("--deltas", type=float, nargs="+", default=list(DEFAULT_DELTAS))
    _eval_opts(p)
    _synth_opts(p)
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    out = args.out or Path(os.environ.get(OUT_ENV, "oscpipe_out"))
    cfg = RunConfig(out=out, manifest=args.manifest, jobs=max(1, args.jobs), seed=args.seed,
                    thresholds=args.thresholds, verb=args.verb, labels=args.labels)
    for name in ("split", "fuse_states", "per_verb", "oracle", "theta", "report", "annotations", "bins"):
        if hasattr(args, name):
            setattr(cfg, name, getattr(args, name))
    if hasattr(args, "taus"):
        cfg.taus, cfg.deltas = tuple(args.taus), tuple(args.deltas)
    if hasattr(args, "clips"):
        cfg.synth = SynthConfig(
            seed=args.seed,
            clips=args.clips,
            frames_per_clip=args.frames,
            masklets_per_clip=args.masklets,
            distractors_per_clip=args.distractors,
            grid=tuple(args.grid),
            transition_window=tuple(args.window),
            noise_flip_prob=args.noise_flip,
            ambiguous_prob=args.ambiguous,
            score_margin=args.margin,
            verbs=tuple(args.verbs),
        )
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = config_from_args(args)
        stages = [s.strip() for s in args.stages.split(",") if s.strip()] if args.command == "run" else [args.command]
        produced = run_pipeline(stages, cfg)
    except (PipelineError, FormatError, ModelError, MaskError, SynthError, KeyError) as e:
        print(f"oscpipe: error: {e}", file=sys.stderr)
        return 2
    if "eval_summary" in produced:
        sys.stdout.write(produced["eval_summary"].read_text(encoding="utf-8"))
    for key, path in produced.items():
        print(f"{key}: {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
