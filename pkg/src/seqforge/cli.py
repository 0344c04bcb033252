"""Command-line entry point.

Subcommands map one-to-one onto the pipeline stages, plus `dump` for
inspecting parsed records and `fetch` for the thin scraping layer. A single
JSON config file drives everything; the most common knobs have flag
overrides. `--mock-script` swaps both agent roles for the deterministic
scripted backend.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import SeqforgeError
from .oeis import entry_to_json, fetch_records, parse_records
from .pipeline import SUBCOMMANDS, PipelineConfig, run


def _add_override_flags(parser):
    parser.add_argument("--config", help="pipeline config JSON file")
    parser.add_argument("--mock-script", help="scripted mock backend (JSON), replaces both roles")
    parser.add_argument("--corpus", help="internal-format records file")
    parser.add_argument("--bfile-dir", help="directory of b-files (b<digits>.txt)")
    parser.add_argument("--checkpoint-dir", help="per-sequence checkpoint root")
    parser.add_argument("--out", help="dataset output path")
    parser.add_argument("--stats-out", help="stats output path")
    parser.add_argument("--seed", type=int, help="pipeline rng seed")
    parser.add_argument("--workers", type=int, help="worker pool size")
    parser.add_argument("--max-rounds", type=int, help="correction round budget")
    parser.add_argument("--resample", type=int, help="resample count per sequence")


def _config_from_args(args) -> PipelineConfig:
    if args.config:
        config = PipelineConfig.from_file(args.config)
    else:
        config = PipelineConfig()
    overrides = {
        "mock_script": args.mock_script,
        "corpus_path": args.corpus,
        "bfile_dir": args.bfile_dir,
        "checkpoint_dir": args.checkpoint_dir,
        "dataset_path": args.out,
        "stats_path": args.stats_out,
        "rng_seed": args.seed,
        "workers": args.workers,
        "max_rounds": args.max_rounds,
        "resample_count": args.resample,
    }
    for name, value in overrides.items():
        if value is not None:
            setattr(config, name, value)
    if getattr(args, "k", None) is not None:
        config.eval_k = args.k
    if getattr(args, "n", None) is not None:
        config.eval_n = args.n
    if getattr(args, "model", None):
        with open(args.model, encoding="utf-8") as fh:
            config.eval_backend = json.load(fh)
    return config


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="seqforge")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        _add_override_flags(p)
        if name == "eval":
            p.add_argument("--k", type=int, choices=(0, 5), default=None)
            p.add_argument("--n", type=int, default=None)
            p.add_argument("--model", help="JSON file with the eval backend config")

    p_dump = sub.add_parser("dump", help="parse records and print one JSON line per entry")
    p_dump.add_argument("paths", nargs="+")

    p_fetch = sub.add_parser("fetch", help="fetch raw records to disk (thin scraper)")
    p_fetch.add_argument("ids", nargs="+")
    p_fetch.add_argument("--out", required=True)
    p_fetch.add_argument("--delay", type=float, default=1.0)

    args = parser.parse_args(argv)

    try:
        if args.subcommand == "dump":
            for path in args.paths:
                for entry in parse_records(Path(path).read_text(encoding="utf-8")):
                    print(entry_to_json(entry))
            return 0
        if args.subcommand == "fetch":
            fetch_records(args.ids, args.out, delay_s=args.delay)
            return 0
        return run(_config_from_args(args), args.subcommand)
    except SeqforgeError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
