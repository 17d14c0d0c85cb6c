"""
Command line interface: ``locolm {ingest,stats,train,eval,predict}``.

Every command reads an optional TOML run configuration (``--config``) whose
values the flags override. Artifacts are written under ``--out`` and carry the
configuration hash and the seed in their header, so a rerun with the same
configuration and seed reproduces them byte for byte.

Exit codes: 0 success, 2 usage error, 3 unreadable or corrupt input,
4 invalid configuration or data, 5 numerical failure during training.
"""

import argparse
import logging
import sys
import tomllib
from collections import Counter
from pathlib import Path

from . import corpus, divergence, embeddings, evaluate, network, ngram, vocab
from .checkpoint import (CheckpointError, CheckpointMismatch, check_compatible,
                         load_checkpoint, save_checkpoint)
from .config import RunConfig, load_config
from .sampler import (TrainingExample, class_counts, compute_plan, resample,
                      split_dataset, window_examples, write_plan)
from .util import open_text, write_csv

logger = logging.getLogger(__name__)

EXIT_INPUT = 3
EXIT_INVALID = 4
EXIT_NUMERIC = 5

LOG_FORMAT = "%(asctime)s | %(levelname)s | %(name)s | %(message)s"

#: Vocabulary sizes reported by the coverage study
COVERAGE_KS = (250, 500, 1000, 2000, 4000, 8000)

#: Order of the drop counts in the ingestion report
DROP_RULES = ("malformed", "non_english", "no_place", "broad_place",
              "resolver_miss", "too_short")

def _parse_value(text):
    "TOML scalar if `text` parses as one, else the plain string"
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text

def resolve_config(args) -> RunConfig:
    """
    Configuration of a command: the ``--config`` file (or the defaults),
    overridden by the common flags and then by every ``--set KEY=VALUE``.
    """
    config = load_config(args.config) if args.config else RunConfig()
    flags = {key: getattr(args, key, None) for key in
             ("seed", "variant", "threads", "out", "corpus", "places",
              "posts", "embeddings", "pretrained", "epochs")}
    config = config._replace(**{k: v for k, v in flags.items()
                                if v is not None})
    for item in args.set or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise ValueError(f"--set expects KEY=VALUE, got {item!r}")
        config = config._replace(**{key.strip(): _parse_value(value.strip())})
    return config

def _out(config, name) -> Path:
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    return out / name

def _posts_path(config) -> Path:
    if config.posts:
        return Path(config.posts)
    return Path(config.out) / "posts.jsonl"

def _read_posts(config) -> list:
    posts = corpus.read_posts(_posts_path(config))
    logger.info("%d enriched posts read from %s", len(posts),
                _posts_path(config))
    return posts

def _load_table(config):
    if not config.embeddings:
        logger.warning("no embedding table configured")
        return None
    try:
        with open_text(config.embeddings) as fd:
            return embeddings.load_embeddings(fd, config.embed_dim)
    except OSError as e:
        logger.warning("embedding table unavailable: %s", e)
        return None

def build_examples(posts, v, catalog, frequent_only, window) -> list:
    "Windowed examples of every post, in corpus order"
    examples = []
    for post in posts:
        examples.extend(window_examples(post, v, catalog, frequent_only,
                                        window))
    return examples

def _model_config(config, v, catalog) -> network.ModelConfig:
    return network.ModelConfig.for_variant(
        config.variant, v.n_classes, catalog, place_dense=config.place_dense,
        embed_dim=config.embed_dim, lstm_cells=config.lstm_cells,
        lstm_layers=config.lstm_layers, dense_units=config.dense_units,
        window=config.window, embeddings_frozen=config.freeze_embeddings)

def cmd_ingest(config: RunConfig):
    """
    Parse, filter, tokenize and enrich the raw corpus. Writes ``posts.jsonl``
    and ``ingest_report.csv``, whose counts add up to the number of input
    lines.
    """
    if not config.corpus or not config.places:
        raise ValueError("ingest needs the corpus and places paths")
    resolver = corpus.FixturePlaceResolver.from_file(config.places)
    with open_text(config.corpus) as fd:
        parsed = corpus.parse_corpus(fd)
    tally = Counter({"malformed": parsed.skipped})
    kept = []
    for raw in parsed.posts:
        reason = corpus.drop_reason(raw)
        if reason:
            tally[reason] += 1
        else:
            kept.append(raw)
    posts = corpus.build_posts(kept, resolver, tally)
    meta = config.meta()
    corpus.write_posts(posts, _out(config, "posts.jsonl"), meta)
    total = len(posts) + sum(tally.values())
    rows = [(rule, tally[rule]) for rule in DROP_RULES]
    rows += [("kept", len(posts)), ("total", total)]
    write_csv(_out(config, "ingest_report.csv"), ("rule", "count"), rows, meta)
    for rule, count in rows:
        print(f"{rule:<14} {count}")

def cmd_stats(config: RunConfig):
    """
    Corpus statistics: chi-square scores, significant words, location
    rankings, shared significant words, vocabulary coverage and, when an
    embedding table is available, embedding dispersion.
    """
    posts = _read_posts(config)
    catalog = divergence.build_catalog(posts, config.frequent_threshold)
    meta = {**config.meta(), "min_support": config.min_support,
            "frequent_threshold": config.frequent_threshold}
    summary = divergence.chi_square_all(posts, catalog, config.min_support,
                                        config.threads)
    divergence.write_chi_square_csv(summary, _out(config, "chi_square.csv"),
                                    meta)
    divergence.write_significant_words_csv(
        summary, _out(config, "significant_words.csv"), meta)
    top, least = divergence.rank_locations(summary)
    write_csv(_out(config, "location_ranking.csv"),
              ("end", "rank", "location", "score"),
              [("top", i, tag, f"{s:.6f}") for i, (tag, s) in
               enumerate(top, 1)] +
              [("least", i, tag, f"{s:.6f}") for i, (tag, s) in
               enumerate(least, 1)], meta)
    shared = divergence.shared_significant_words(summary.reports)
    write_csv(_out(config, "shared_words.csv"), ("word", "locations"),
              [(w, " ".join(tags)) for w, tags in shared.items()], meta)
    ks = sorted(set(COVERAGE_KS) | {config.vocab_size})
    write_csv(_out(config, "coverage.csv"), ("K", "coverage"),
              [(k, f"{c:.6f}") for k, c in vocab.coverage_curve(posts, ks)],
              meta)
    print(f"locations scored: {len(summary.reports)}, "
          f"mean chi-square {summary.mean_score:.4f}, "
          f"above 1: {summary.above_one}")

    table = _load_table(config)
    if table is None:
        logger.warning("skipping dispersion statistics")
        return
    meta = {**meta, "sample_size": config.sample_size}
    try:
        baseline = embeddings.random_dispersion(posts, table,
                                                config.sample_size, config.seed)
    except ValueError as e:
        logger.warning("skipping dispersion statistics: %s", e)
        return
    reports = [embeddings.location_dispersion(
                   posts, tag, table, config.sample_size, config.seed,
                   baseline) for tag in catalog.frequent_subset]
    embeddings.write_dispersion_csv(reports, _out(config, "dispersion.csv"),
                                    meta)
    print(f"random baseline dispersion {baseline:.4f}")

def cmd_train(config: RunConfig):
    """
    Train one variant and write ``<variant>.json`` (checkpoint),
    ``<variant>_metrics.csv`` and ``<variant>_plan.json``.
    """
    posts = _read_posts(config)
    pretrained = None
    if config.pretrained:
        pretrained = load_checkpoint(config.pretrained)
        v = pretrained.vocab
        logger.info("vocabulary taken from %s", config.pretrained)
    else:
        v = vocab.build_vocabulary(posts, config.vocab_size)
    catalog = divergence.build_catalog(posts, config.frequent_threshold)
    model_config = _model_config(config, v, catalog)
    examples = build_examples(posts, v, catalog, model_config.frequent_only,
                              config.window)
    train_set, validation_set = split_dataset(examples, config.holdout,
                                              config.seed)
    plan = compute_plan(class_counts(train_set), config.oversample)
    meta = {**config.meta(), "holdout": config.holdout,
            "variant": config.variant}
    write_plan(plan, _out(config, f"{config.variant}_plan.json"), meta)
    train_set = resample(train_set, plan, config.seed)
    logger.info("%d training and %d validation examples", len(train_set),
                len(validation_set))

    table = _load_table(config)
    params = network.init_params(
        model_config, table, v, pretrained.params if pretrained else None,
        config.seed)
    train_cfg = network.TrainConfig(config.epochs, config.batch_size,
                                    config.learning_rate, config.beta1,
                                    config.beta2, config.adam_eps, config.seed)
    metrics = _out(config, f"{config.variant}_metrics.csv")
    checkpoint = _out(config, f"{config.variant}.json")
    try:
        params, log = network.train(params, model_config, train_cfg,
                                    train_set, validation_set)
    except network.DivergenceError as e:
        evaluate.write_metric_log(e.log, metrics, meta)
        save_checkpoint(checkpoint, e.params, model_config, v, catalog,
                        {**meta, "epoch": len(e.log), "diverged": True})
        logger.error("kept the parameters of epoch %d in %s", len(e.log),
                     checkpoint)
        raise
    evaluate.write_metric_log(log, metrics, meta)
    save_checkpoint(checkpoint, params, model_config, v, catalog,
                    {**meta, "epoch": config.epochs})
    last = log[-1]
    print(f"{config.variant}: top1 {last.val_top1:.4f} "
          f"top5 {last.val_top5:.4f} after {last.epoch} epochs")

def _validation_split(posts, ckpt, config):
    examples = build_examples(posts, ckpt.vocab, ckpt.catalog,
                              ckpt.config.frequent_only, ckpt.config.window)
    return split_dataset(examples, ckpt.meta.get("holdout", config.holdout),
                         ckpt.meta.get("seed", config.seed))

def cmd_eval(config: RunConfig, checkpoints, with_ngram=False):
    """
    Evaluate checkpoints on the validation split they were trained with.
    Writes ``results.csv`` (all targets), ``results_known.csv`` (``<unk>``
    targets left out), ``locations.csv`` and, when the metric logs are found
    next to the checkpoints, ``convergence.csv``.
    """
    loaded = {}
    for path in checkpoints:
        ckpt = load_checkpoint(path)
        if ckpt.config.variant in loaded:
            raise CheckpointMismatch("variant", f"two checkpoints of variant "
                                                f"{ckpt.config.variant}")
        loaded[ckpt.config.variant] = ckpt
    check_compatible(loaded)
    posts = _read_posts(config)
    results, known, logs = {}, {}, {}
    for (variant, ckpt), path in zip(loaded.items(), checkpoints):
        if ckpt.catalog is None:
            raise CheckpointMismatch("catalog", f"{path} has no catalog")
        _, validation = _validation_split(posts, ckpt, config)
        results[variant] = evaluate.evaluate_network(
            ckpt.params, ckpt.config, validation, ckpt.catalog)
        known[variant] = evaluate.evaluate_network(
            ckpt.params, ckpt.config, validation, exclude_unk=True)
        log_path = Path(path).with_name(f"{variant}_metrics.csv")
        if log_path.exists():
            logs[variant] = evaluate.read_metric_log(log_path)[1]
    if with_ngram:
        ckpt = next(iter(loaded.values()))
        train_set, validation = _validation_split(posts, ckpt, config)
        model = ngram.train_ngram(train_set, config.smoothing,
                                  pad_id=ckpt.vocab.pad_id)
        results["ngram"] = evaluate.evaluate_ngram(model, validation)
        known["ngram"] = evaluate.evaluate_ngram(model, validation,
                                                 exclude_unk=True)
    meta = {**config.meta(), "seed": next(iter(loaded.values())).meta.get(
        "seed", config.seed)}
    evaluate.write_results_csv(results, _out(config, "results.csv"), meta)
    evaluate.write_results_csv(known, _out(config, "results_known.csv"), meta)
    evaluate.write_location_csv(results, _out(config, "locations.csv"), meta)
    if logs:
        evaluate.write_long_csv(evaluate.convergence_log_merge(logs),
                                _out(config, "convergence.csv"), meta)
    if "baseline" in results:
        evaluate.write_comparison(results, sys.stdout)
    else:
        for name, r in sorted(results.items()):
            print(f"{name:<10} {100 * r.top1:7.2f} {100 * r.top5:7.2f}")

def cmd_predict(checkpoint, context: str, places, k: int = 5):
    """
    Print the `k` most probable next words after `context` for a post at a
    place of the given types, one ``word<TAB>probability`` line each.
    """
    ckpt = load_checkpoint(checkpoint)
    cfg, v = ckpt.config, ckpt.vocab
    if not 1 <= k <= cfg.n_classes - 1:
        raise ValueError(f"k must lie in 1..{cfg.n_classes - 1}")
    ids = [vocab.encode(v, tok) for tok in corpus.tokenize(context)]
    window = ([v.pad_id] * cfg.window + ids)[-cfg.window:]
    if cfg.variant == "baseline":
        place = ()
    else:
        known = (ckpt.catalog.frequent_subset if cfg.frequent_only
                 else ckpt.catalog.types)
        for tag in places:
            if tag not in known:
                logger.warning("place type %r unknown to %s, ignored", tag,
                               cfg.variant)
        place = ckpt.catalog.encode(places, cfg.frequent_only)
    example = TrainingExample(window, place, 0)
    probs = network.forward(ckpt.params, cfg, [example])[0]
    for cls_id in network.predict_topk(ckpt.params, cfg, example, k):
        print(f"{vocab.decode(v, cls_id)}\t{probs[cls_id]:.6f}")

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", help="TOML run configuration")
    common.add_argument("--seed", type=int, help="random seed")
    common.add_argument("--variant", choices=network.VARIANTS,
                        help="network setup")
    common.add_argument("--threads", type=int,
                        help="worker threads for per-location statistics")
    common.add_argument("-o", "--out", help="output directory")
    common.add_argument("--posts", help="enriched corpus (JSONL)")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override any configuration key")
    common.add_argument("-v", "--verbose", action="store_true",
                        help="debug logging")

    parser = argparse.ArgumentParser(
        prog="locolm",
        description="Location-type conditioned next-word prediction")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common],
                       help="filter, tokenize and enrich a raw corpus")
    p.add_argument("--corpus", help="raw corpus (JSONL, '-' for stdin)")
    p.add_argument("--places", help="place type fixture (JSON)")

    p = sub.add_parser("stats", parents=[common],
                       help="chi-square and embedding dispersion reports")
    p.add_argument("--embeddings", help="word vectors (GloVe text format)")

    p = sub.add_parser("train", parents=[common], help="train one variant")
    p.add_argument("--embeddings", help="word vectors (GloVe text format)")
    p.add_argument("--pretrained", help="checkpoint to initialize from")
    p.add_argument("--epochs", type=int, help="number of epochs")

    p = sub.add_parser("eval", parents=[common],
                       help="evaluate and compare checkpoints")
    p.add_argument("checkpoints", nargs="+", help="checkpoint manifests")
    p.add_argument("--ngram", action="store_true",
                   help="also evaluate an n-gram model")

    p = sub.add_parser("predict", parents=[common],
                       help="rank the next word of a context")
    p.add_argument("checkpoint", help="checkpoint manifest")
    p.add_argument("context", help="preceding text")
    p.add_argument("-p", "--place", action="append", default=[],
                   help="location type of the place (repeatable)")
    p.add_argument("-k", type=int, default=5, help="number of words")
    return parser

def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format=LOG_FORMAT, stream=sys.stderr)
    try:
        if args.command == "predict":
            cmd_predict(args.checkpoint, args.context, args.place, args.k)
            return 0
        config = resolve_config(args)
        if args.command == "ingest":
            cmd_ingest(config)
        elif args.command == "stats":
            cmd_stats(config)
        elif args.command == "train":
            cmd_train(config)
        elif args.command == "eval":
            cmd_eval(config, args.checkpoints, args.ngram)
    except CheckpointMismatch as e:
        logger.error("%s", e)
        return EXIT_INVALID
    except (CheckpointError, corpus.IngestError, OSError) as e:
        logger.error("%s", e)
        return EXIT_INPUT
    except ArithmeticError as e:
        logger.error("%s", e)
        return EXIT_NUMERIC
    except (ValueError, KeyError) as e:
        logger.error("%s", e)
        return EXIT_INVALID
    return 0

if __name__ == "__main__":
    sys.exit(main())
