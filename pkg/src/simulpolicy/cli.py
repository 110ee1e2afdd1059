"""Command-line entry point: ``simulpolicy {decode,sweep,eval-matrix,select-ensemble,report}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .core import VocabularyError, format_trace, make_sentence
from .ensemble import ConfigurationError, EvalMatrix, select_bundles
from .harness import (
    ConfigError,
    Corpus,
    SweepConfig,
    build_grid,
    emit_report,
    load_corpus,
    load_model_specs,
    load_models,
    parse_int_list,
    published_records,
    read_report,
    read_sentences,
    run_eval_matrix,
    run_sweep,
    write_ensemble_file,
)

logger = logging.getLogger("simulpolicy")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _corpus(args, cfg: SweepConfig | None = None) -> Corpus:
    source = args.source or (cfg.source if cfg else None)
    refs = [Path(p) for p in args.refs.split(",")] if args.refs else (cfg.refs if cfg else [])
    if source is None or not refs:
        raise ConfigError("a corpus is needed: pass --source and --refs or set them under [corpus]")
    return load_corpus(source, refs)


def _config(args) -> SweepConfig:
    if not args.config:
        raise ConfigError("--config is required")
    cfg = SweepConfig.from_file(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def cmd_decode(args) -> int:
    cfg = _config(args)
    grid = build_grid(cfg)
    if not 0 <= args.point < len(grid):
        raise ConfigError(f"--point must be in [0, {len(grid)}), got {args.point}")
    params, decoder = grid[args.point]
    if args.sentence is not None:
        sources = [make_sentence(args.sentence)]
    elif args.source:
        sources = read_sentences(args.source)
    else:
        raise ConfigError("decode needs --sentence or --source")
    print(f"# {cfg.method} {params}")
    for i, src in enumerate(sources):
        out = decoder(src)
        if i:
            print()
        print("hyp:   " + " ".join(out.hypothesis))
        print("trace: " + format_trace(out.trace))
        print("conf:  " + " ".join(f"{p:.3f}" for p in out.confidences))
        if out.truncated:
            print("(truncated at length cap)")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _config(args)
    records = run_sweep(cfg, _corpus(args, cfg), jobs=args.jobs)
    if args.out:
        emit_report(records, args.out)
    else:
        for rec in records:
            print(",".join(rec.row()))
    return EXIT_OK


def cmd_eval_matrix(args) -> int:
    if not args.config:
        raise ConfigError("--config is required")
    specs = load_model_specs(args.config)
    policies = parse_int_list(args.policies) if args.policies else []
    if not args.out:
        raise ConfigError("--out is required")
    run_eval_matrix(load_models(specs), policies, _corpus(args), args.out, jobs=args.jobs)
    return EXIT_OK


def cmd_select_ensemble(args) -> int:
    if not args.config or not args.matrix or not args.out:
        raise ConfigError("select-ensemble needs --config, --matrix and --out")
    specs = load_model_specs(args.config)
    matrix = EvalMatrix.from_csv(args.matrix, {name: tk for name, (tk, _) in specs.items()})
    policies = parse_int_list(args.policies) if args.policies else matrix.policies
    try:
        bundles = select_bundles(matrix, policies, args.n)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    write_ensemble_file(bundles, args.out)
    return EXIT_OK


def cmd_report(args) -> int:
    records = []
    if args.published:
        records.extend(published_records(args.published))
    for path in args.inputs:
        records.extend(read_report(path))
    if not records:
        raise ConfigError("nothing to report: give CSV inputs or --published")
    if args.out:
        emit_report(records, args.out)
    else:
        for rec in records:
            print(",".join(rec.row()))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="INI config (see docs/config.md)")
    common.add_argument("--source", type=Path, help="source file, one sentence per line")
    common.add_argument("--refs", help="comma-separated reference files")
    common.add_argument("--out", type=Path, help="output path")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--jobs", type=int, default=1, help="worker processes for decoding")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = _Parser(prog="simulpolicy", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("decode", parents=[common], help="decode a sentence or file and print traces")
    p.add_argument("--sentence", help="space-separated source tokens")
    p.add_argument("--point", type=int, default=0, help="index of the grid point to use")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("sweep", parents=[common], help="run a parameter sweep and write a report CSV")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("eval-matrix", parents=[common], help="BLEU of every model under every wait-k policy")
    p.add_argument("--policies", default="1-10")
    p.set_defaults(func=cmd_eval_matrix)

    p = sub.add_parser("select-ensemble", parents=[common], help="pick the top-n models per policy")
    p.add_argument("--matrix", type=Path)
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--policies")
    p.set_defaults(func=cmd_select_ensemble)

    p = sub.add_parser("report", parents=[common], help="merge report CSVs")
    p.add_argument("inputs", nargs="*", type=Path)
    p.add_argument("--published", choices=["zh_en", "de_en"], help="include the bundled reference grid")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    if args.jobs < 1:
        print("simulpolicy: error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"simulpolicy: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, VocabularyError, OSError) as exc:
        print(f"simulpolicy: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
