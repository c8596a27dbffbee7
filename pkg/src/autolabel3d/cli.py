"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 bad input data or config,
3 a pipeline stage failed.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_STAGE = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser():
    p = _Parser(prog="autolabel3d", description="Offboard 3D auto-labeling from 2D mask tracks and LiDAR.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="run the labeling pipeline on a bundle")
    r.add_argument("--bundle", required=True, type=Path)
    r.add_argument("--config", required=True, type=Path, help="YAML or JSON pipeline config")
    r.add_argument("--stages", help="comma-separated subset of assoc,seg,complete,boxes,occ,eval")
    r.add_argument("--jobs", type=int, help="worker processes (overrides config)")
    r.add_argument("--seed", type=int, help="overrides config")
    r.add_argument("--out", required=True, type=Path)

    rp = sub.add_parser("report", help="summarize a finished run")
    rp.add_argument("--run", required=True, type=Path)

    s = sub.add_parser("synth", help="generate a synthetic bundle with ground truth")
    s.add_argument("--spec", required=True, type=Path, help="YAML or JSON scenario spec")
    s.add_argument("--out", required=True, type=Path)

    e = sub.add_parser("eval", help="evaluate run artifacts against ground truth")
    e.add_argument("--pred", required=True, type=Path, help="run directory")
    e.add_argument("--truth", required=True, type=Path, help="bundle directory holding truth/")
    e.add_argument("--spec", required=True, type=Path, help="YAML or JSON match spec")
    return p


def _load_doc(path):
    import yaml

    try:
        doc = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise ValueError(f"{path}: {exc}") from exc
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise ValueError(f"{path}: expected a mapping at top level")
    return doc


def cmd_run(args):
    from .pipeline import Run, load_config, normalize_stages

    cfg = load_config(args.config)
    if args.jobs is not None:
        if args.jobs < 1:
            raise ValueError("--jobs must be >= 1")
        cfg.jobs = args.jobs
    if args.seed is not None:
        cfg.seed = args.seed
    stages = normalize_stages(args.stages) if args.stages else cfg.stages
    run = Run(args.bundle, args.out, cfg)
    for stage, status in run.execute(stages):
        print(f"{stage:<9} {status}")
    return EXIT_OK


def cmd_report(args):
    from .pipeline import report

    print(report(args.run))
    return EXIT_OK


def cmd_synth(args):
    from .synth import scenario_from_dict, write_scenario

    spec = scenario_from_dict(_load_doc(args.spec))
    bundle, truth = write_scenario(spec, args.out)
    print(f"wrote {len(bundle.frames)} frames, {len(bundle.calibrations)} views, {len(bundle.mask_tracks)} masks, "
          f"{len(truth.boxes)} truth boxes to {args.out}")
    return EXIT_OK


def cmd_eval(args):
    from .pipeline import EvalConfig, _build, evaluate_run
    from .scene import load_bundle

    cfg = _build(EvalConfig, _load_doc(args.spec), "spec")
    truth = args.truth / "truth" if (args.truth / "truth").is_dir() else args.truth
    bundle_dir = truth.parent
    bundle = load_bundle(bundle_dir)
    metrics = evaluate_run(args.pred, truth, cfg.match_spec(), bundle)
    print(metrics.pop("report"))
    return EXIT_OK


COMMANDS = {"run": cmd_run, "report": cmd_report, "synth": cmd_synth, "eval": cmd_eval}


def main(argv=None):
    from .pipeline import ConfigError, StageError
    from .scene import BundleError

    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except BundleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        for d in exc.diagnostics[:20]:
            print(f"  {d}", file=sys.stderr)
        return EXIT_DATA
    except (ConfigError, ValueError, FileNotFoundError, json.JSONDecodeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
