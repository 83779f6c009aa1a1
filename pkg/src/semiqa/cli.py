"""Command-line pipeline around the library.

Subcommands cover the full experiment path: ``extract`` turns tagged raw
text into an unlabeled answer-span corpus, ``pretrain`` MLE-trains the
question generator, ``train`` runs the alternating reader/generator loop,
``generate`` decodes questions from a checkpoint, ``evaluate`` scores a
checkpoint's reader, and ``compare`` sweeps a (rate, |U|, method) grid.

Conventions: logs go to stderr, data artifacts to files or stdout; every
run writes run_manifest.json (resolved arguments, effective config,
library versions) to its output directory; GDAN_THREADS caps worker
threads. Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric
divergence.

Config files are flat ``key = value`` text, one pair per line, ``#``
comments allowed. Keys mirror TrainConfig fields (``rate`` is accepted
as an alias for ``labeling_rate``); unknown keys are rejected. Flag
overrides win over file values.
"""

import argparse
import json
import logging
import os
import platform
import struct
import sys
from dataclasses import fields

import numpy as np

from . import __version__
from .checkpoint import (
    CheckpointError, load_checkpoint, load_config, load_generator,
    load_reader, load_vocab, save_checkpoint,
)
from .corpus import CorpusError, DomainTag, load_labeled, load_unlabeled, split_by_article
from .evaluator import EvalError, compare_methods, evaluate, strip_labels
from .extractor import (
    DEFAULT_SAMPLE_COUNT, ExtractError, extract_corpus, load_grammar,
    read_tagged, write_unlabeled,
)
from .generator import GeneratorError, collapse_repeats
from .numerics import NumericsError
from .reader import ReaderError
from .trainer import METHODS, TrainConfig, Trainer, TrainerError
from .utils import stable_seed

log = logging.getLogger("semiqa")

CONFIG_ALIASES = {"rate": "labeling_rate"}

DATA_ERRORS = (CorpusError, ExtractError, CheckpointError, TrainerError,
               EvalError, GeneratorError, ReaderError, OSError,
               json.JSONDecodeError, struct.error)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that raises instead of exiting, so run() owns exit codes."""

    def error(self, message):
        raise UsageError(f"{message}\n\n{self.format_help()}")


# -- config handling --------------------------------------------------------

def _parse_value(text):
    low = text.lower()
    if low == "true":
        return True
    if low == "false":
        return False
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "'\"":
        return text[1:-1]
    return text


def parse_config_file(path):
    """Flat key = value lines -> dict with typed values."""
    try:
        with open(path, encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise UsageError(f"cannot read config file: {e}") from e
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        key, sep, value = body.partition("=")
        if not sep or not key.strip():
            raise UsageError(f"{path}:{lineno}: expected 'key = value', "
                             f"got {body!r}")
        out[key.strip()] = _parse_value(value.strip())
    return out


_FIELD_TYPES = {f.name: type(f.default) for f in fields(TrainConfig)}


def _coerce(key, value):
    want = _FIELD_TYPES[key]
    if want is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if not isinstance(value, want) or isinstance(value, bool) is not (want is bool):
        raise UsageError(f"config key {key!r} expects {want.__name__}, "
                         f"got {value!r}")
    return value


def validate_config(path=None, overrides=None):
    """Effective TrainConfig from an optional file plus overrides.

    Overrides win over file values; unknown keys and invariant violations
    are rejected naming the offending key. An empty file yields defaults.
    """
    merged = {}
    if path is not None:
        merged.update(parse_config_file(path))
    if overrides:
        merged.update(overrides)
    merged = {CONFIG_ALIASES.get(k, k): v for k, v in merged.items()}
    try:
        cfg = TrainConfig.from_json(
            {k: _coerce(k, v) if k in _FIELD_TYPES else v
             for k, v in merged.items()})
    except TrainerError as e:
        raise UsageError(str(e)) from e
    return cfg


def _collect_overrides(args):
    out = {}
    for item in getattr(args, "overrides", None) or []:
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        out[key.strip()] = _parse_value(value.strip())
    for flag in ("method", "seed", "rate", "unlabeled_size",
                 "max_outer_iters", "pretrain_epochs"):
        value = getattr(args, flag, None)
        if value is not None:
            out[flag] = value
    return out


# -- shared plumbing --------------------------------------------------------

def _write_manifest(out_dir, command, args, config=None, outputs=None):
    os.makedirs(out_dir, exist_ok=True)
    skip = {"handler", "log_level"}
    arguments = {k: v for k, v in sorted(vars(args).items()) if k not in skip}
    manifest = {
        "command": command,
        "arguments": arguments,
        "config": None if config is None else config.to_json(),
        "outputs": outputs or {},
        "environment": {"gdan_threads": os.environ.get("GDAN_THREADS")},
        "versions": {"semiqa": __version__,
                     "python": platform.python_version(),
                     "numpy": np.__version__},
    }
    path = os.path.join(out_dir, "run_manifest.json")
    with open(path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def _refuse_overwrite(out_path, *inputs):
    for p in inputs:
        if p and os.path.abspath(out_path) == os.path.abspath(p):
            raise UsageError(f"output {out_path!r} would overwrite input {p!r}")


def _load_training_data(cfg, args, vocab=None):
    """Labeled/unlabeled/dev pools under one vocabulary.

    The labeling rate selects an article-disjoint fraction of --labeled
    for supervision; when --unlabeled is not given, the leftover fraction
    (labels dropped) becomes the unlabeled pool.
    """
    bundle, stats = load_labeled(args.labeled, min_count=args.min_count,
                                 vocab=vocab)
    vocab = bundle.vocab
    log.info("labeled file: %d instances (%d skipped), vocab %d",
             len(bundle.labeled), stats.skipped, len(vocab))
    labeled, rest = split_by_article(
        bundle.labeled, cfg.labeling_rate,
        seed=stable_seed(cfg.seed, "split", cfg.labeling_rate))
    if getattr(args, "unlabeled", None):
        unlabeled = load_unlabeled(args.unlabeled, vocab)
    else:
        unlabeled = strip_labels(rest)
    dev_bundle, dev_stats = load_labeled(args.dev, vocab=vocab)
    log.info("rate %.2f -> %d supervised; unlabeled pool %d; dev %d "
             "(%d skipped)", cfg.labeling_rate, len(labeled), len(unlabeled),
             len(dev_bundle.labeled), dev_stats.skipped)
    return vocab, labeled, unlabeled, dev_bundle.labeled


def _train_summary(trainer, result, ckpt_path):
    return {
        "method": trainer.config.method,
        "best_dev_f1": result.best_dev_f1,
        "best_dev_em": result.best_dev_em,
        "best_step": result.best_step,
        "outer_iters": result.outer_iters,
        "steps": trainer.global_step,
        "skipped_samples": result.skipped,
        "checkpoint": ckpt_path,
    }


def _write_trace(trace, path):
    with open(path, "w", encoding="utf-8") as f:
        for row in trace:
            f.write(json.dumps(row) + "\n")


# -- subcommands ------------------------------------------------------------

def cmd_extract(args):
    _refuse_overwrite(args.out, args.infile, args.grammar)
    paragraphs = read_tagged(args.infile)
    grammar = load_grammar(args.grammar)
    distribution = None
    if args.distribution:
        with open(args.distribution, encoding="utf-8") as f:
            distribution = json.load(f)
    records, stats = extract_corpus(paragraphs, grammar=grammar,
                                    distribution=distribution,
                                    count=args.count, seed=args.seed,
                                    threads=args.threads)
    write_unlabeled(records, args.out)
    log.info("extract: %s", json.dumps(stats.to_json()))
    if args.stats:
        with open(args.stats, "w", encoding="utf-8") as f:
            json.dump(stats.to_json(), f, indent=2)
            f.write("\n")
    out_dir = args.out_dir or os.path.dirname(os.path.abspath(args.out))
    _write_manifest(out_dir, "extract", args,
                    outputs={"unlabeled": args.out, "stats": args.stats})


def cmd_pretrain(args):
    cfg = validate_config(args.config, _collect_overrides(args))
    if not cfg.uses_generator:
        raise UsageError(f"method {cfg.method!r} trains no generator; "
                         f"nothing to pretrain")
    vocab, labeled, unlabeled, dev = _load_training_data(cfg, args)
    trainer = Trainer(cfg, vocab, labeled, unlabeled, dev)
    losses = trainer.pretrain_generator()
    os.makedirs(args.out_dir, exist_ok=True)
    ckpt = os.path.join(args.out_dir, "checkpoint.gdan")
    save_checkpoint(ckpt, trainer)
    _write_manifest(args.out_dir, "pretrain", args, config=cfg,
                    outputs={"checkpoint": ckpt})
    print(json.dumps({"epochs": len(losses),
                      "final_mle_loss": losses[-1] if losses else None,
                      "checkpoint": ckpt}, indent=2))


def cmd_train(args):
    os.makedirs(args.out_dir, exist_ok=True)
    ckpt = os.path.join(args.out_dir, "checkpoint.gdan")
    if args.resume:
        if args.config or _collect_overrides(args):
            raise UsageError("--resume continues with the stored config; "
                             "drop --config/--set/--method/... overrides")
        _refuse_overwrite(ckpt, args.resume)
        cfg = load_config(args.resume)
        vocab, labeled, _, dev = _load_training_data(
            cfg, args, vocab=load_vocab(args.resume))
        trainer = load_checkpoint(args.resume, labeled, dev)
    else:
        cfg = validate_config(args.config, _collect_overrides(args))
        vocab, labeled, unlabeled, dev = _load_training_data(cfg, args)
        trainer = Trainer(cfg, vocab, labeled, unlabeled, dev)
    result = trainer.run()
    save_checkpoint(ckpt, trainer)
    trace_path = os.path.join(args.out_dir, "trace.jsonl")
    _write_trace(result.trace, trace_path)
    _write_manifest(args.out_dir, "train", args, config=trainer.config,
                    outputs={"checkpoint": ckpt, "trace": trace_path})
    print(json.dumps(_train_summary(trainer, result, ckpt), indent=2))


def cmd_generate(args):
    _refuse_overwrite(args.out, args.unlabeled, args.checkpoint)
    cfg, vocab, generator = load_generator(args.checkpoint)
    examples = load_unlabeled(args.unlabeled, vocab)
    written = skipped = 0
    with open(args.out, "w", encoding="utf-8") as f:
        for i, ex in enumerate(examples):
            if args.mode == "greedy":
                question = generator.greedy_question(
                    ex.paragraph, ex.paragraph_tokens, ex.span)
            else:
                sample = generator.sample_question(
                    ex.paragraph, ex.paragraph_tokens, ex.span,
                    seed=stable_seed(args.seed, i))
                question = collapse_repeats(sample.tokens)
            if not question:
                skipped += 1
                continue
            j, k = ex.span
            f.write(json.dumps({
                "article_id": ex.article_id,
                "tokens": ex.paragraph_tokens,
                "span": [j, k],
                "answer": ex.paragraph_tokens[j - 1:k],
                "question": question,
            }) + "\n")
            written += 1
    log.info("generate: %d questions written, %d empty decodes skipped",
             written, skipped)
    out_dir = args.out_dir or os.path.dirname(os.path.abspath(args.out))
    _write_manifest(out_dir, "generate", args, config=cfg,
                    outputs={"questions": args.out})
    print(json.dumps({"written": written, "skipped": skipped,
                      "out": args.out}))


def cmd_evaluate(args):
    cfg, vocab, reader = load_reader(args.checkpoint, best=not args.current)
    bundle, stats = load_labeled(args.data, vocab=vocab)
    if stats.skipped:
        log.info("evaluate: %d instances skipped while loading", stats.skipped)
    tag = DomainTag.D_TRUE if cfg.uses_tags else None
    f1, em = evaluate(reader, bundle.labeled, tag=tag)
    _write_manifest(args.out_dir, "evaluate", args, config=cfg)
    print(json.dumps({"f1": f1, "em": em, "n": len(bundle.labeled)}))


def cmd_compare(args):
    overrides = _collect_overrides(args)
    for banned in ("method", "rate", "labeling_rate"):
        if banned in overrides:
            raise UsageError(f"{banned!r} is chosen per cell in compare; "
                             f"use --methods/--rates")
    base_cfg = validate_config(args.config, overrides)
    for rate in args.rates:
        if not 0.0 < rate <= 0.9:
            raise UsageError(f"rate {rate} outside (0, 0.9]")
    for method in args.methods:
        if method not in METHODS:
            raise UsageError(f"unknown method {method!r}; expected one of "
                             f"{', '.join(METHODS)}")

    bundle, stats = load_labeled(args.labeled, min_count=args.min_count)
    vocab = bundle.vocab
    dev_bundle, _ = load_labeled(args.dev, vocab=vocab)
    test_bundle, _ = load_labeled(args.test, vocab=vocab)
    log.info("compare: %d train / %d dev / %d test, vocab %d",
             len(bundle.labeled), len(dev_bundle.labeled),
             len(test_bundle.labeled), len(vocab))

    grid = [(rate, args.u_size, method)
            for rate in args.rates for method in args.methods]
    report = compare_methods(
        bundle.labeled, dev_bundle.labeled, test_bundle.labeled, grid,
        base_cfg, vocab, seed=args.seed or 0,
        log=lambda row: log.info("cell done: %s", row))
    os.makedirs(args.out_dir, exist_ok=True)
    report_path = args.out or os.path.join(args.out_dir, "report.json")
    report.save(report_path)
    _write_manifest(args.out_dir, "compare", args, config=base_cfg,
                    outputs={"report": report_path})
    print(report.render())


# -- parser -----------------------------------------------------------------

def _add_common(p, out_dir="."):
    p.add_argument("--out-dir", default=out_dir,
                   help="directory for artifacts and the run manifest")
    p.add_argument("--log-level", default="info",
                   choices=("debug", "info", "warning", "error"))


def _add_config_flags(p):
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--seed", type=int)
    p.add_argument("--rate", type=float, help="labeling rate in (0, 0.9]")
    p.add_argument("--unlabeled-size", type=int,
                   help="cap on the unlabeled pool; 0 keeps everything")
    p.add_argument("--max-outer-iters", type=int)
    p.add_argument("--pretrain-epochs", type=int)
    p.add_argument("--set", dest="overrides", action="append",
                   metavar="KEY=VALUE", help="override any config key")


def _add_data_flags(p, unlabeled_help):
    p.add_argument("--labeled", required=True,
                   help="SQuAD-style JSON; the labeling rate picks the "
                        "supervised fraction by article")
    p.add_argument("--unlabeled", help=unlabeled_help)
    p.add_argument("--dev", required=True, help="SQuAD-style JSON")
    p.add_argument("--min-count", type=int, default=2,
                   help="vocabulary frequency cutoff")


def build_parser():
    parser = _Parser(prog="semiqa", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version",
                        version=f"semiqa {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True,
                                parser_class=_Parser)

    p = sub.add_parser("extract", help="tagged text -> unlabeled corpus")
    p.add_argument("--in", dest="infile", required=True,
                   help="token<TAB>POS<TAB>NER lines, blank line between "
                        "paragraphs, '# article:<id>' comments")
    p.add_argument("--out", required=True, help="JSON-lines output")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=DEFAULT_SAMPLE_COUNT,
                   help="answers kept per paragraph")
    p.add_argument("--grammar", help="chunking grammar JSON; default built-in")
    p.add_argument("--distribution", help="answer-type distribution JSON")
    p.add_argument("--stats", help="where to write extraction stats JSON")
    p.add_argument("--threads", type=int)
    _add_common(p, out_dir=None)
    p.set_defaults(handler=cmd_extract)

    p = sub.add_parser("pretrain", help="MLE-train the question generator")
    _add_data_flags(p, "JSON-lines unlabeled corpus (default: the "
                       "unsupervised remainder of --labeled)")
    _add_config_flags(p)
    _add_common(p)
    p.set_defaults(handler=cmd_pretrain)

    p = sub.add_parser("train", help="alternating reader/generator training")
    _add_data_flags(p, "JSON-lines unlabeled corpus (default: the "
                       "unsupervised remainder of --labeled)")
    _add_config_flags(p)
    p.add_argument("--resume", help="checkpoint to continue from "
                                    "(keeps its stored config)")
    _add_common(p)
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("generate", help="decode questions from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--unlabeled", required=True, help="JSON-lines corpus")
    p.add_argument("--out", required=True, help="JSON-lines questions")
    p.add_argument("--mode", choices=("greedy", "sample"), default="greedy")
    p.add_argument("--seed", type=int, default=0,
                   help="sampling seed (mode=sample)")
    _add_common(p, out_dir=None)
    p.set_defaults(handler=cmd_generate)

    p = sub.add_parser("evaluate", help="score a checkpoint's reader")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="SQuAD-style JSON")
    p.add_argument("--current", action="store_true",
                   help="use the last trained parameters, not the best-dev "
                        "snapshot")
    _add_common(p)
    p.set_defaults(handler=cmd_evaluate)

    p = sub.add_parser("compare", help="sweep a (rate, |U|, method) grid")
    p.add_argument("--labeled", required=True, help="SQuAD-style JSON")
    p.add_argument("--dev", required=True, help="SQuAD-style JSON")
    p.add_argument("--test", required=True, help="SQuAD-style JSON")
    p.add_argument("--rates", type=_float_list, default=[0.1],
                   help="comma-separated labeling rates")
    p.add_argument("--methods", type=_method_list, default=list(METHODS),
                   help="comma-separated method names")
    p.add_argument("--u-size", type=int, default=0,
                   help="cap on the unlabeled pool per cell; 0 keeps all")
    p.add_argument("--min-count", type=int, default=2)
    p.add_argument("--out", help="report JSON path "
                                 "(default <out-dir>/report.json)")
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--seed", type=int, help="grid seed; per-cell seeds "
                                            "are derived from it")
    p.add_argument("--set", dest="overrides", action="append",
                   metavar="KEY=VALUE")
    _add_common(p)
    p.set_defaults(handler=cmd_compare)
    return parser


def _float_list(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from e


def _method_list(text):
    return [x.strip() for x in text.split(",") if x.strip()]


def _setup_logging(level):
    logging.basicConfig(stream=sys.stderr, force=True,
                        level=getattr(logging, level.upper()),
                        format="%(levelname)s %(name)s: %(message)s")


def run(argv=None):
    """Parse argv, dispatch, and map failures to documented exit codes."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except SystemExit as e:  # --help / --version
        if e.code in (0, None):
            return 0
        return e.code if isinstance(e.code, int) else 1
    _setup_logging(args.log_level)
    try:
        args.handler(args)
        return 0
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except NumericsError as e:
        log.error("numeric divergence: %s", e)
        return 3
    except DATA_ERRORS as e:
        log.error("%s", e)
        return 2


def main(argv=None):
    raise SystemExit(run(argv))
