"""Command-line entry point: mine, clean, train, predict, vote, funnel, eval, sample.

Every option can also come from ``--config FILE`` (flat ``key = value``
lines); command-line flags win over the file, the file wins over defaults.
Exit codes: 0 success, 1 validation error, 2 runtime error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from codemix import corpus_miner as cm
from codemix import ensemble, metrics, nbsvm, text_prep
from codemix.errors import CodemixError, ConfigurationError, ValidationError
from codemix.fileio import atomic_write, dump_jsonl_line, iter_jsonl, read_token_file, write_token_file
from codemix.labels import LABELS, argmax, label_to_index
from codemix.vectorizer import build_vocab, stack, tokenize, vectorize

log = logging.getLogger("codemix")

_NOT_CONFIG = {"config", "func", "command", "verbose"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigurationError(f"{self.prog}: {message}")


# ---------------------------------------------------------------- config


def read_config(path) -> dict[str, str]:
    values = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigurationError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            if not value:
                continue  # unset
            if len(value) >= 2 and value[0] == value[-1] == '"':
                value = json.loads(value)
            values[key.replace("-", "_")] = value
    return values


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigurationError(f"not a boolean: {text!r}")


def _config_defaults(sub: argparse.ArgumentParser, values: dict[str, str]) -> dict:
    actions = {a.dest: a for a in sub._actions if a.dest not in _NOT_CONFIG and a.dest != "help"}
    # echoed provenance files carry these; accept them so the files can be reused as configs
    values = {k: v for k, v in values.items() if k not in _NOT_CONFIG}
    unknown = sorted(set(values) - set(actions))
    if unknown:
        raise ConfigurationError(f"unknown config key(s) for {sub.prog}: {', '.join(unknown)}")
    out = {}
    for key, raw in values.items():
        action = actions[key]
        if isinstance(action, argparse._StoreConstAction):
            flag = _parse_bool(raw)
            out[key] = action.const if flag else action.default
            continue
        convert = action.type or str
        try:
            if action.nargs in ("+", "*") or isinstance(action, argparse._AppendAction):
                out[key] = [convert(v) for v in raw.replace(",", " ").split()]
            else:
                out[key] = convert(raw)
        except (TypeError, ValueError) as e:
            raise ConfigurationError(f"config key {key}: {e}") from None
        if action.choices is not None:
            vals = out[key] if isinstance(out[key], list) else [out[key]]
            bad = [v for v in vals if v not in action.choices]
            if bad:
                raise ConfigurationError(f"config key {key}: invalid choice {bad[0]!r}")
    return out


def effective_config(args: argparse.Namespace) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "verbose")}


def _config_text(args) -> str:
    lines = []
    for key, value in effective_config(args).items():
        if isinstance(value, (list, tuple)):
            value = ",".join(str(v) for v in value)
        elif isinstance(value, str) and (value == "" or value != value.strip() or value[:1] == '"'):
            value = json.dumps(value)
        lines.append(f"{key} = {'' if value is None else value}")
    return "\n".join(lines) + "\n"


def write_effective_config(args, path) -> None:
    with atomic_write(path) as f:
        f.write(_config_text(args))


# ---------------------------------------------------------------- helpers


def _require_files(*paths) -> None:
    missing = [str(p) for p in paths if p is not None and not Path(p).is_file()]
    if missing:
        raise ValidationError(f"input file(s) not found: {', '.join(missing)}")


def _split_named(arg: str) -> tuple[str | None, str]:
    if "=" in arg and not Path(arg).exists():
        name, path = arg.split("=", 1)
        return name, path
    return None, arg


def _load_tables(specs) -> list[ensemble.PredictionTable]:
    named = [_split_named(s) for s in specs]
    _require_files(*(p for _, p in named))
    tables = [ensemble.load_predictions(p, name) for name, p in named]
    names = [t.model_name for t in tables]
    if len(set(names)) != len(names):
        raise ValidationError(f"prediction files need distinct model names, got {names}; use NAME=PATH")
    return tables


def read_gold(path) -> dict[str, str]:
    """``id<TAB>label`` per line; an optional ``id<TAB>label`` header is skipped."""
    gold = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ValidationError(f"{path}:{lineno}: expected 'id<TAB>label'")
            ex_id, label = parts[0].strip(), parts[1].strip()
            if lineno == 1 and ex_id == "id" and label == "label":
                continue
            try:
                label_to_index(label)
            except ValidationError as e:
                raise ValidationError(f"{path}:{lineno}: {e}") from None
            if ex_id in gold:
                raise ValidationError(f"{path}:{lineno}: duplicate id {ex_id!r}")
            gold[ex_id] = label.lower()
    return gold


def _clean_config(args) -> text_prep.CleanConfig:
    return text_prep.CleanConfig(
        strip_urls=not args.keep_urls,
        mention_token=args.mention_token,
        hashtag_token=args.hashtag_token,
        emoji_delimiter=args.emoji_delimiter,
    )


def _add_clean_options(p) -> None:
    p.add_argument("--emoji-map", help="extra emoji TSV (emoji<TAB>name) layered over the shipped table")
    p.add_argument("--mention-token", default="mention")
    p.add_argument("--hashtag-token", default="hashtag")
    p.add_argument("--emoji-delimiter", default=" ")
    p.add_argument("--keep-urls", action="store_true", help="do not strip links")


def _read_labeled(path, need_label: bool):
    ids, texts, labels = [], [], []
    for lineno, rec in iter_jsonl(path):
        ex_id = rec.get("id")
        ids.append(str(ex_id) if ex_id not in (None, "") else str(lineno))
        texts.append(str(rec.get("text") or ""))
        if need_label:
            if "label" not in rec:
                raise ValidationError(f"{path}:{lineno}: record has no 'label'")
            try:
                labels.append(label_to_index(str(rec["label"])))
            except ValidationError as e:
                raise ValidationError(f"{path}:{lineno}: {e}") from None
    if len(set(ids)) != len(ids):
        raise ValidationError(f"{path}: duplicate example ids")
    return ids, texts, labels


# ---------------------------------------------------------------- commands


def cmd_mine(args) -> int:
    _require_files(args.corpus, args.dictionary, *(args.accept_list or []))
    config = cm.MinerConfig(args.threshold, args.mode, args.batch_size, args.max_batches)
    dictionary = cm.SeedDictionary.load(args.dictionary)
    if not dictionary.entries:
        raise ConfigurationError(f"dictionary {args.dictionary} has no entries")
    for path in args.accept_list or []:
        dictionary = cm.merge_reviewed(dictionary, read_token_file(path))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    all_scores = []
    batches = []
    n_accepted = n_rejected = 0
    with atomic_write(out / "accepted.jsonl") as acc_f, atomic_write(out / "rejected.jsonl") as rej_f:
        tweets = cm.read_corpus(args.corpus, args.format)
        for b, batch in enumerate(cm.iter_batches(tweets, config.batch_size, config.max_batches)):
            scores = cm.score_tweets(batch, dictionary, config.mode)
            accepted, rejected = cm.partition_by_score(batch, scores, config.threshold)
            for t in accepted:
                acc_f.write(dump_jsonl_line(cm.tweet_to_record(t)))
            for t in rejected:
                rej_f.write(dump_jsonl_line(cm.tweet_to_record(t)))
            cands = cm.extract_candidates(accepted, dictionary, b)
            write_token_file(out / "candidates" / f"batch_{b:05d}.txt", sorted(cands.tokens),
                             header=f"candidates from batch {b}, dictionary version {dictionary.version}")
            all_scores.extend(scores)
            n_accepted += len(accepted)
            n_rejected += len(rejected)
            batches.append({
                "batch": b,
                "tweets": len(batch),
                "accepted": len(accepted),
                "candidates": len(cands.tokens),
                "mean_length": float(np.mean([len(t.text) for t in batch])),
                "mean_accepted_length": float(np.mean([len(t.text) for t in accepted])) if accepted else None,
                "accepted_at_280": sum(len(t.text) >= 280 for t in accepted),
            })
            log.info("batch %d: %d/%d accepted, %d candidates", b, len(accepted), len(batch), len(cands.tokens))

    hist = cm.score_histogram(all_scores)
    report = {
        "tweets": n_accepted + n_rejected,
        "accepted": n_accepted,
        "rejected": n_rejected,
        "dictionary_size": len(dictionary),
        "dictionary_version": dictionary.version,
        "mode": config.mode.value,
        "threshold": config.threshold,
        "score_histogram": {f"{i * 0.05:.2f}-{(i + 1) * 0.05:.2f}": c for i, c in enumerate(hist)},
        "batches": batches,
    }
    with atomic_write(out / "report.json") as f:
        json.dump(report, f, indent=2)
        f.write("\n")
    if args.accept_list:
        write_token_file(out / "dictionary.txt", sorted(dictionary.entries),
                         header=f"dictionary version {dictionary.version}")
    write_effective_config(args, out / "effective_config.txt")
    print(f"{n_accepted} accepted, {n_rejected} rejected over {len(batches)} batch(es) -> {out}")
    return 0


def cmd_clean(args) -> int:
    _require_files(args.input, args.emoji_map)
    config = _clean_config(args)
    emoji_map = text_prep.load_emoji_map(args.emoji_map)
    records, tweets = [], []
    for lineno, rec in iter_jsonl(args.input):
        records.append(rec)
        tweets.append(cm.tweet_from_record(rec, str(lineno)))

    cache: dict[str, str] = {}

    def cleaned(text: str) -> str:
        if text not in cache:
            cache[text] = text_prep.clean(text, emoji_map, config)
        return cache[text]

    survivors = {id(t) for t in text_prep.dedup(tweets, key=cleaned)}
    n = 0
    with atomic_write(args.output) as f:
        for rec, tweet in zip(records, tweets):
            if id(tweet) not in survivors:
                continue
            out = dict(rec)
            out["text"] = cleaned(tweet.text)
            out.setdefault("raw_text", tweet.text)
            f.write(dump_jsonl_line(out))
            n += 1
    write_effective_config(args, str(args.output) + ".config")
    print(f"{n} of {len(records)} records kept -> {args.output}")
    return 0


def _featurize(texts, vocab, pipeline, emoji_map):
    if pipeline.get("clean", True):
        config = text_prep.CleanConfig(**pipeline.get("clean_config", {}))
        texts = [text_prep.clean(t, emoji_map, config) for t in texts]
    return [vectorize(tokenize(t, vocab.lowercase), vocab, vocab.binarize) for t in texts]


def cmd_train(args) -> int:
    _require_files(args.train, args.emoji_map)
    ids, texts, labels = _read_labeled(args.train, need_label=True)
    clean_config = _clean_config(args)
    pipeline = {"clean": not args.no_clean, "clean_config": clean_config.__dict__.copy()}
    emoji_map = text_prep.load_emoji_map(args.emoji_map)
    if pipeline["clean"]:
        texts = [text_prep.clean(t, emoji_map, clean_config) for t in texts]
    lowercase = not args.no_lowercase
    vocab = build_vocab([tokenize(t, lowercase) for t in texts], (args.ngram_min, args.ngram_max),
                        args.min_df, lowercase=lowercase, binarize=not args.counts, analyzer=args.analyzer)
    log.info("vocabulary: %d n-grams from %d examples", len(vocab), len(texts))
    examples = [nbsvm.LabeledExample(vectorize(tokenize(t, lowercase), vocab, vocab.binarize), y)
                for t, y in zip(texts, labels)]
    model = nbsvm.train(examples, alpha=args.alpha, C=args.C, beta=args.beta, vocab=vocab)
    model.pipeline = dict(pipeline, emoji_map=args.emoji_map)
    model.save(args.model)
    write_effective_config(args, str(args.model) + ".config")
    pred = model.predict_proba_matrix(stack([e.features for e in examples], len(vocab))).argmax(axis=1)
    print(f"trained on {len(examples)} examples, {len(vocab)} features, "
          f"training accuracy {np.mean(pred == np.array(labels)):.4f} -> {args.model}")
    return 0


def cmd_predict(args) -> int:
    _require_files(args.model, args.input, args.emoji_map)
    model = nbsvm.NbSvmModel.load(args.model)
    if model.vocab is None:
        raise ValidationError(f"{args.model} has no vocabulary")
    ids, texts, _ = _read_labeled(args.input, need_label=False)
    emoji_path = args.emoji_map or model.pipeline.get("emoji_map")
    if emoji_path and not Path(emoji_path).is_file():
        raise ValidationError(f"emoji map {emoji_path} recorded in the model is missing; pass --emoji-map")
    emoji_map = text_prep.load_emoji_map(emoji_path)
    vectors = _featurize(texts, model.vocab, model.pipeline, emoji_map)
    probs = model.predict_proba_matrix(stack(vectors, model.dim)) if vectors else np.zeros((0, 3))
    ensemble.write_predictions(args.output, zip(ids, probs))
    write_effective_config(args, str(args.output) + ".config")
    print(f"{len(ids)} predictions -> {args.output}")
    return 0


def cmd_vote(args) -> int:
    tables = _load_tables(args.predictions)
    ids = ensemble.common_ids(tables)
    rows = []
    for ex_id in ids:
        scores = ensemble.vote_scores(tables, ex_id)
        rows.append((ex_id, scores / scores.sum()))
    ensemble.write_predictions(args.output, rows)
    write_effective_config(args, str(args.output) + ".config")
    print(f"weighted vote of {len(tables)} model(s) over {len(ids)} ids -> {args.output}")
    return 0


def cmd_funnel_train(args) -> int:
    _require_files(args.gold)
    tables = _load_tables(args.predictions)
    gold = read_gold(args.gold)
    model = ensemble.funnel_train(tables, gold, C=args.C)
    model.save(args.model)
    write_effective_config(args, str(args.model) + ".config")
    X = np.vstack([ensemble.funnel_features(tables, i) for i in gold])
    acc = np.mean(model.proba(X).argmax(axis=1) == np.array([label_to_index(g) for g in gold.values()]))
    print(f"funnel over {model.model_names} trained on {len(gold)} ids, accuracy {acc:.4f} -> {args.model}")
    return 0


def cmd_funnel_predict(args) -> int:
    _require_files(args.model)
    model = ensemble.FunnelModel.load(args.model)
    tables = model.order(_load_tables(args.predictions))
    ids = ensemble.common_ids(tables)
    rows = [(i, ensemble.funnel_predict(model, tables, i)[1]) for i in ids]
    ensemble.write_predictions(args.output, rows)
    write_effective_config(args, str(args.output) + ".config")
    print(f"funnel predictions for {len(ids)} ids -> {args.output}")
    return 0


def cmd_eval(args) -> int:
    _require_files(args.gold, args.predictions)
    gold = read_gold(args.gold)
    table = ensemble.load_predictions(args.predictions)
    missing = sorted(set(gold) - set(table.records))
    extra = sorted(set(table.records) - set(gold))
    if missing or extra:
        raise ValidationError(
            f"id sets differ: {len(missing)} gold id(s) without prediction {missing[:20]}, "
            f"{len(extra)} predicted id(s) without gold {extra[:20]}"
        )
    ids = list(gold)
    result = metrics.evaluate([gold[i] for i in ids], [table.records[i].predicted for i in ids])
    print(result.format())
    if args.output_json:
        with atomic_write(args.output_json) as f:
            json.dump(result.to_dict(), f, indent=2)
            f.write("\n")
    return 0


def cmd_sample(args) -> int:
    _require_files(args.input)
    tweets = list(cm.read_corpus(args.input, args.format))
    picked = cm.sample_tweets(tweets, args.num, args.seed)
    with atomic_write(args.output) as f:
        for t in picked:
            f.write(dump_jsonl_line(cm.tweet_to_record(t)))
    write_effective_config(args, str(args.output) + ".config")
    print(f"sampled {len(picked)} of {len(tweets)} tweets -> {args.output}")
    return 0


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="codemix", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    subs = parser.add_subparsers(dest="command", required=True)

    def sub(name, func, help):
        p = subs.add_parser(name, help=help)
        p.add_argument("--config", help="flat key = value file; flags override it")
        p.set_defaults(func=func)
        return p

    p = sub("mine", cmd_mine, "filter a tweet dump by dictionary overlap")
    p.add_argument("--corpus", required=True)
    p.add_argument("--format", choices=["jsonl", "text"], default="jsonl")
    p.add_argument("--dictionary", required=True)
    p.add_argument("--accept-list", action="append", help="reviewed candidate file to merge first (repeatable)")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--threshold", type=float, default=0.6)
    p.add_argument("--mode", choices=[m.value for m in cm.ScoreMode], default="containment")
    p.add_argument("--batch-size", type=int, default=10_000)
    p.add_argument("--max-batches", type=int)

    p = sub("clean", cmd_clean, "de-duplicate and normalize tweets")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    _add_clean_options(p)

    p = sub("train", cmd_train, "train an NB-SVM model")
    p.add_argument("--train", required=True, help="JSON-lines with id, text, label")
    p.add_argument("--model", required=True)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--C", type=float, default=4.0)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--ngram-min", type=int, default=1)
    p.add_argument("--ngram-max", type=int, default=2)
    p.add_argument("--min-df", type=int, default=2)
    p.add_argument("--analyzer", choices=["word", "char"], default="word")
    p.add_argument("--no-lowercase", action="store_true")
    p.add_argument("--counts", action="store_true", help="raw n-gram counts instead of presence")
    p.add_argument("--no-clean", action="store_true", help="skip the cleaning pipeline")
    _add_clean_options(p)

    p = sub("predict", cmd_predict, "write class probabilities for a JSON-lines file")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--emoji-map")

    p = sub("vote", cmd_vote, "confidence-weighted majority vote")
    p.add_argument("--predictions", nargs="+", required=True, help="PATH or NAME=PATH")
    p.add_argument("--output", required=True)

    p = sub("funnel-train", cmd_funnel_train, "train the logistic funnel on held-out predictions")
    p.add_argument("--predictions", nargs="+", required=True, help="PATH or NAME=PATH, order is kept")
    p.add_argument("--gold", required=True, help="TSV id<TAB>label")
    p.add_argument("--model", required=True)
    p.add_argument("--C", type=float, default=1.0)

    p = sub("funnel-predict", cmd_funnel_predict, "apply a trained funnel")
    p.add_argument("--model", required=True)
    p.add_argument("--predictions", nargs="+", required=True)
    p.add_argument("--output", required=True)

    p = sub("eval", cmd_eval, "score a prediction file against gold labels")
    p.add_argument("--gold", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--output-json")

    p = sub("sample", cmd_sample, "random sample of tweets for manual purity checks")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=["jsonl", "text"], default="jsonl")
    p.add_argument("-n", "--num", type=int, default=1000)
    p.add_argument("--seed", type=int, default=13)
    p.add_argument("--output", required=True)
    return parser


def parse_args(argv=None) -> argparse.Namespace:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    subparsers = parser._subparsers._group_actions[0].choices
    command = next((a for a in argv if a in subparsers), None)
    if known.config and command is not None:
        if not Path(known.config).is_file():
            raise ValidationError(f"config file not found: {known.config}")
        sub = subparsers[command]
        defaults = _config_defaults(sub, read_config(known.config))
        sub.set_defaults(**defaults)
        for action in sub._actions:
            if action.dest in defaults:
                action.required = False
    return parser.parse_args(argv)


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        log.info("effective config: %s", json.dumps(effective_config(args), default=str))
        return args.func(args)
    except (ValidationError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except CodemixError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
