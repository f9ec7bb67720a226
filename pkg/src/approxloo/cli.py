"""``fit-compare --config PATH [--seed N] [--out DIR]``

Exit status: 0 on success, 1 for configuration or input errors, 2 for
numerical failures. ``APPROXLOO_SEED`` and ``APPROXLOO_THREADS`` override the
config's seed and thread count; ``--seed`` wins over the environment.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

from .errors import ConfigError
from .io import emit_reports, load_config
from .pipeline import PipelineError, run_pipeline

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2


def _env_int(name: str):
    value = os.environ.get(name)
    if value is None or value.strip() == "":
        return None
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"{name} must be an integer, got {value!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fit-compare",
        description="Estimate and compare the ELPD of Bayesian logistic-regression models.",
    )
    parser.add_argument("--config", required=True, help="run configuration file")
    parser.add_argument("--seed", type=int, default=None, help="override the global seed")
    parser.add_argument("--out", default=None, help="output directory (overrides config)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
        overrides = {}
        seed = args.seed if args.seed is not None else _env_int("APPROXLOO_SEED")
        if seed is not None:
            overrides["seed"] = seed
        threads = _env_int("APPROXLOO_THREADS")
        if threads is not None:
            overrides["n_jobs"] = max(1, threads)
        if args.out is not None:
            overrides["output_dir"] = args.out
        config = dataclasses.replace(config, **overrides)
    except ConfigError as exc:
        print(f"fit-compare: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        bundle = run_pipeline(config)
    except ConfigError as exc:
        print(f"fit-compare: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PipelineError as exc:
        try:
            emit_reports(exc.bundle, config.output_dir)
        except OSError as io_exc:
            print(f"fit-compare: could not save partial results: {io_exc}", file=sys.stderr)
        print(f"fit-compare: {exc}", file=sys.stderr)
        return EXIT_CONFIG if isinstance(exc.cause, ConfigError) else EXIT_NUMERICAL

    try:
        paths = emit_reports(bundle, config.output_dir)
    except OSError as exc:
        print(f"fit-compare: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for path in paths:
        print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
