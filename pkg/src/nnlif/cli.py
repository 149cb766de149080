"""Command line entry point: ``nnlif run|preset|sweep``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import parse_config, with_output_dir
from .errors import NNLIFError
from .experiments import EXIT_BLOWUP, EXIT_ERROR, EXIT_OK, emit_csv, run_experiment
from .presets import PRESETS, run_preset


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nnlif", description="E-I integrate-and-fire Fokker-Planck experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a configuration file")
    run.add_argument("config", type=Path)
    run.add_argument("--out", type=Path, help="output directory (overrides output_dir)")

    preset = sub.add_parser("preset", help="run a named experiment")
    # unknown names are reported by run_preset so they exit with the error code
    preset.add_argument("name", help="one of: " + ", ".join(PRESETS))
    preset.add_argument("--out", type=Path, help="output directory (default out/<name>)")

    sweep = sub.add_parser("sweep", help="run a bifurcation configuration file")
    sweep.add_argument("config", type=Path)
    sweep.add_argument("--out", type=Path)
    for p in (run, preset, sweep):
        p.add_argument("--workers", type=int, default=None,
                       help="sweep worker processes (default: $NNLIF_THREADS or 1)")
    return parser


def _load(path: Path, out, expect_sweep: bool):
    config = parse_config(path.read_text(encoding="utf-8"))
    if expect_sweep and config.mode != "bifurcation":
        raise NNLIFError(f"{path}: sweep expects mode = bifurcation, got {config.mode}")
    if out is not None:
        config = with_output_dir(config, str(out))
    return config


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "preset":
            out = args.out if args.out is not None else Path("out") / args.name
            art = run_preset(args.name, str(out), workers=args.workers)
        else:
            config = _load(args.config, args.out, args.command == "sweep")
            out = Path(config.output_dir)
            art = run_experiment(config, workers=args.workers)
            emit_csv(art, out)
    except (NNLIFError, OSError) as exc:
        print(f"nnlif: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    print(f"wrote {', '.join(sorted(art.tables))} to {out}")
    if art.blew_up:
        print("blow-up detected", file=sys.stderr)
        return EXIT_BLOWUP
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
