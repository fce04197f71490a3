"""Command-line entry point: ``atomarray run`` and ``atomarray reproduce``."""

import argparse
import os
import sys
import time
from pathlib import Path

import numba
from threadpoolctl import threadpool_limits

from . import __version__
from .config import RunConfig
from .experiments import FIGURES, RUNNERS, figure_configs
from .greens import ResonantWavevector
from .model import ConfigError, NumericalError, ResonantMeshError
from .serialize import write_csv, write_json

EXIT_CONFIG, EXIT_NUMERICAL, EXIT_RESONANT = 1, 2, 3


def execute(cfg, out_dir):
    """Run one experiment and write its artifacts plus provenance into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    artifacts = RUNNERS[cfg["experiment"]](cfg)
    wall = time.perf_counter() - start
    h = cfg.hash
    written = []
    for art in artifacts:
        path = out / art[1]
        if art[0] == "csv":
            write_csv(path, art[2], art[3], h)
        else:
            write_json(path, art[2], h)
        written.append(art[1])
    (out / "config.yaml").write_text(f"# config_sha256={h}\n" + cfg.dump(hashed_only=True))
    write_json(out / "provenance.json",
               {"seed": cfg["seed"], "version": __version__, "wall_time_s": wall,
                "experiment": cfg["experiment"], "files": sorted(written),
                "threads": cfg.data.get("threads")}, h)
    return written


def _configure_threads(n):
    n = max(1, min(n, numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(n)
    return n


def _with_overrides(raw, args):
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.threads is not None:
        raw["threads"] = args.threads
    return RunConfig.from_dict(raw)


def _run(args):
    cfg = RunConfig.load(args.config)
    cfg = _with_overrides(cfg.to_dict(), args)
    out = args.out or Path(cfg["output_dir"]) / cfg["name"]
    return [(cfg, out)]


def _reproduce(args):
    jobs = []
    for sub, raw in figure_configs(args.figure, args.scale):
        raw = {**raw, "name": f"{args.figure}-{sub}"}
        cfg = _with_overrides(raw, args)
        jobs.append((cfg, Path(args.out or "results") / args.scale / args.figure / sub))
    return jobs


class _Parser(argparse.ArgumentParser):
    """Usage errors are configuration errors (exit 1), not argparse's default 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser():
    p = _Parser(prog="atomarray", description=__doc__)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override the RNG seed")
    common.add_argument("--threads", type=int, default=None,
                        help="worker threads (default: available cores)")
    common.add_argument("--out", default=None, help="output directory")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", parents=[common], help="run one experiment from a YAML config")
    r.add_argument("config")
    r.set_defaults(func=_run)
    f = sub.add_parser("reproduce", parents=[common], help="run the canned configs of a figure")
    f.add_argument("figure", help=f"one of {', '.join(FIGURES)}")
    f.add_argument("--scale", choices=("paper", "ci"), default="ci")
    f.set_defaults(func=_reproduce)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        jobs = args.func(args)
        for cfg, out in jobs:
            threads = _configure_threads(cfg.data.get("threads") or os.cpu_count() or 1)
            with threadpool_limits(limits=threads):
                files = execute(cfg, out)
            print(f"{cfg['name']}: wrote {', '.join(files)} to {out}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ResonantMeshError, ResonantWavevector) as exc:
        print(f"resonant mesh: {exc}", file=sys.stderr)
        return EXIT_RESONANT
    except (NumericalError, ArithmeticError, ValueError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return 0


if __name__ == "__main__":
    sys.exit(main())
