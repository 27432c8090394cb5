"""Command line entry point.

    gmctorus <command> [--config FILE] [--key value ...] --out DIR

Writes ``<command>_samples.csv`` (one row per sample), ``<command>_results.csv``
and ``<command>_summary.json`` into DIR. Exit codes: 0 success, 2 invalid
configuration or argument, 3 numerical or I/O failure.
"""

import argparse
import csv
import json
import math
import os
import sys
import time

from .. import __version__
from ..errors import InvalidArgument, PreconditionViolation
from ..kernel_decomp import NotFound
from . import config as config_mod
from .config import ConfigError
from .jobs import fmt_cell, make_job
from .runner import run_samples
from .seeds import STREAM_LEN

SCHEMA_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def _parser():
    p = argparse.ArgumentParser(prog="gmctorus", description="Chaos and field experiments on the torus.")
    p.add_argument("command", choices=config_mod.COMMANDS)
    p.add_argument("--config", default=None, help="flat key = value file")
    p.add_argument("--out", required=True, help="output directory")
    return p


def _header(cfg):
    return [f"# gmctorus {__version__}", f"# command: {cfg.command}",
            f"# config: {json.dumps(cfg.echo(), sort_keys=True)}"]


def _jsonable(x):
    if isinstance(x, float) and not math.isfinite(x):
        return repr(x)
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return x


def write_outputs(out_dir, cfg, job, state, runtime):
    os.makedirs(out_dir, exist_ok=True)
    stem = os.path.join(out_dir, cfg.command)
    with open(f"{stem}_samples.csv", "w", newline="") as fh:
        fh.write("\n".join(_header(cfg)) + "\n")
        fh.write(",".join(job.sample_columns) + "\n")
        for row in state.rows:
            fh.write(row + "\n")
    rows, summary = job.results(state.totals())
    with open(f"{stem}_results.csv", "w", newline="") as fh:
        fh.write("\n".join(_header(cfg)) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(job.result_columns)
        for r in rows:
            w.writerow([fmt_cell(v) for v in r])
    doc = {
        "schema_version": SCHEMA_VERSION,
        "tool_version": __version__,
        "command": cfg.command,
        "config": cfg.echo(),
        "seeds": {"master_seed": cfg.master_seed, "stream_len": STREAM_LEN,
                  "n_samples": state.next_index,
                  "first_sample_seed": job.plan.sample_seed(0)},
        "runtime_seconds": runtime,
        "estimates": summary,
        "derived": job.extra,
    }
    with open(f"{stem}_summary.json", "w") as fh:
        json.dump(_jsonable(doc), fh, indent=2, sort_keys=True)
    return doc


def run(cfg, out_dir, stop_after=None):
    """Run a resolved config; returns the summary document."""
    t0 = time.perf_counter()
    job = make_job(cfg)
    state = run_samples(job, cfg.samples, cfg.workers, cfg.checkpoint_path, cfg.fingerprint(),
                        stop_after=stop_after)
    return write_outputs(out_dir, cfg, job, state, time.perf_counter() - t0)


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    args, rest = _parser().parse_known_args(argv)
    try:
        cfg = config_mod.load(args.command, args.config, rest)
        run(cfg, args.out)
    except ConfigError as exc:
        print(f"config error [{exc.key}]: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvalidArgument as exc:
        print(f"invalid argument: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ArithmeticError, PreconditionViolation, NotFound, OSError) as exc:
        detail = f" (mode {exc.mode})" if getattr(exc, "mode", None) is not None else ""
        print(f"numerical failure: {type(exc).__name__}: {exc}{detail}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
