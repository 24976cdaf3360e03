"""Command-line entry point.

    varattitude run SCENARIO.yaml [--out DIR] [--no-plots] [--zero-noise] [--seed N]
    varattitude preset paper_fig123 [--out DIR] [--no-plots] [--zero-noise] [--seed N] [--dump]
    varattitude sweep SCENARIO.yaml --seeds 0 1 2 [--jobs J]
    varattitude selftest
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from .errors import VarAttitudeError
from .harness import PRESETS, ScenarioConfig, emit_csv, emit_plots, preset_text, run_scenario, sweep

log = logging.getLogger("varattitude")


def _add_run_flags(p):
    p.add_argument("--out", help="output directory (default: from the scenario file)")
    p.add_argument("--no-plots", action="store_true", help="skip the SVG figures")
    p.add_argument("--zero-noise", action="store_true", help="zero every noise amplitude")
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.add_argument("--backend", choices=("auto", "cython", "python"), default="auto")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="varattitude", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario file")
    p_run.add_argument("config")
    _add_run_flags(p_run)

    p_pre = sub.add_parser("preset", help="run a built-in scenario")
    p_pre.add_argument("name", choices=PRESETS)
    p_pre.add_argument("--dump", action="store_true", help="print the preset YAML and exit")
    _add_run_flags(p_pre)

    p_sw = sub.add_parser("sweep", help="run one scenario over several seeds concurrently")
    p_sw.add_argument("config")
    p_sw.add_argument("--seeds", type=int, nargs="+", required=True)
    p_sw.add_argument("--jobs", type=int)

    sub.add_parser("selftest", help="run the built-in invariant checks")
    return parser


def _execute(cfg: ScenarioConfig, args) -> int:
    cfg = cfg.with_overrides(zero_noise=args.zero_noise, seed=args.seed)
    out = Path(args.out or cfg.out_dir)
    t0 = time.perf_counter()
    result = run_scenario(cfg, backend=args.backend)
    elapsed = time.perf_counter() - t0
    csv_path = emit_csv(result.trace, out / "errors.csv")
    written = [csv_path]
    if cfg.plots and not args.no_plots:
        written += emit_plots(result.trace, out)
    summary = dict(result.summary, runtime_s=elapsed)
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
    for p in written:
        print(f"wrote {p}")
    print(json.dumps(summary, indent=2))
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "run":
            return _execute(ScenarioConfig.load(args.config), args)
        if args.command == "preset":
            if args.dump:
                sys.stdout.write(preset_text(args.name))
                return 0
            return _execute(ScenarioConfig.preset(args.name), args)
        if args.command == "sweep":
            cfg = ScenarioConfig.load(args.config)
            for seed, summary in sweep(cfg, args.seeds, args.jobs):
                print(json.dumps({"seed": seed, **summary}))
            return 0
        if args.command == "selftest":
            from .selftest import run_all

            return 0 if run_all() else 1
    except (VarAttitudeError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 1


if __name__ == "__main__":
    sys.exit(main())
