"""Command-line entry point: preprocess, train, parse, evaluate, synth.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numerical divergence.
"""

import argparse
import hashlib
import json
import logging
import os
import sys
from dataclasses import fields

import numpy as np

from . import evaluator as ev
from . import synth
from . import treebank as tb
from .checkpoint import atomic_write
from .model import decode
from .trainer import Checkpoint, TrainConfig, train

log = logging.getLogger("cpcfg")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _dump_json(obj):
    return json.dumps(obj, sort_keys=True, indent=1) + "\n"


def _load_config(path):
    if not path:
        return {}
    try:
        with open(path, encoding="utf-8") as f:
            return json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None


def _vocab_digest(vocab_json):
    return hashlib.sha256(json.dumps(vocab_json, sort_keys=True).encode("utf-8")).hexdigest()


def _out_dir(args):
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# preprocess


def cmd_preprocess(args):
    cfg = _load_config(args.config).get("preprocess", {})
    punct = args.punct_tags if args.punct_tags is not None else cfg.get("punct_tags")
    punct = frozenset(punct.split(",")) if isinstance(punct, str) else frozenset(punct or tb.DEFAULT_PUNCT_TAGS)
    vocab_size = args.vocab_size or cfg.get("vocab_size", 10000)
    max_len = args.max_train_len if args.max_train_len is not None else cfg.get("max_train_len", 40)
    max_len = None if max_len == 0 else max_len
    out = _out_dir(args)

    files = {"train": args.train, "valid": args.valid, "test": args.test}
    stripped, counts = {}, {}
    for split, path in files.items():
        if path is None:
            continue
        if not os.path.exists(path):
            raise DataError(f"missing {split} file: {path}")
        try:
            trees = tb.read_bracketed_file(path)
        except tb.BracketError as exc:
            raise DataError(str(exc)) from None
        kept = []
        for tree in trees:
            try:
                kept.append(tb.strip_punctuation(tree, punct | tb.EMPTY_TAGS))
            except tb.EmptySentence:
                pass
        stripped[split] = kept
        counts[split] = {"read": len(trees), "non_empty": len(kept)}
    if "train" not in stripped:
        raise UsageError("--train is required")
    if not any(len(t) for t in stripped["train"]):
        log.warning("training split has no sentences after punctuation removal")
        vocab = tb.Vocab([tb.UNK])
    else:
        vocab = tb.build_vocab(stripped["train"], vocab_size)
    corpora = tb.make_splits(stripped, vocab, max_len)
    for split, corpus in corpora.items():
        counts[split]["kept"] = len(corpus)
        tb.write_corpus(os.path.join(out, f"{split}.jsonl"), corpus)
        print(f"{split}: read {counts[split]['read']}, non-empty {counts[split]['non_empty']}, kept {len(corpus)}")
        if not len(corpus):
            log.warning("%s split is empty after filtering", split)
    vocab_json = vocab.to_json()
    atomic_write(os.path.join(out, "vocab.json"), _dump_json(vocab_json))
    meta = {
        "counts": counts,
        "vocab_size": len(vocab),
        "vocab_sha256": _vocab_digest(vocab_json),
        "max_train_len": max_len,
        "punct_tags": sorted(punct),
    }
    atomic_write(os.path.join(out, "preprocess.json"), _dump_json(meta))
    return EXIT_OK


# ---------------------------------------------------------------------------
# train

_TRAIN_FLAGS = {
    "epochs": "epochs",
    "batch_size": "batch_size",
    "lr": "lr",
    "preset": "preset",
    "nonterminals": "n_nonterminals",
    "preterminals": "n_preterminals",
    "z_dim": "z_dim",
    "max_train_len": "max_train_len",
}


def resolve_train_config(args):
    cfg = dict(_load_config(args.config).get("train", {}))
    for flag, key in _TRAIN_FLAGS.items():
        value = getattr(args, flag, None)
        if value is not None:
            cfg[key] = value
    for flag in ("share_start", "share_nonterminal", "share_preterminal"):
        if getattr(args, flag, False):
            cfg[flag] = True
    base = args.seed if args.seed is not None else 0
    if args.seeds is not None:
        cfg["seeds"] = list(range(base, base + args.seeds))
    elif args.seed is not None:
        cfg["seeds"] = [args.seed]
    try:
        return TrainConfig.from_dict(cfg)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid training config: {exc}") from None


def _read_split(path, split):
    if not os.path.exists(path):
        raise DataError(f"missing corpus file: {path}")
    return tb.read_corpus(path, split)


def cmd_train(args):
    config = resolve_train_config(args)
    data = args.data or _load_config(args.config).get("paths", {}).get("data")
    if not data:
        raise UsageError("--data (a preprocessed corpus directory) is required")
    train_c = _read_split(os.path.join(data, "train.jsonl"), "train")
    valid_c = _read_split(os.path.join(data, "valid.jsonl"), "valid")
    with open(os.path.join(data, "vocab.json"), encoding="utf-8") as f:
        vocab_json = json.load(f)
    vocab_size = len(vocab_json["itos"])
    out = _out_dir(args)
    stored = {"train": config.to_dict(), "paths": {"data": data}}
    atomic_write(os.path.join(out, "config.json"), _dump_json(stored))

    results = train(config, train_c, valid_c, vocab_size, workers=args.workers)
    log_lines, timing_lines, summary = [], [], {"seeds": []}
    for res in results:
        log_lines += [json.dumps(r, sort_keys=True) + "\n" for r in res.history]
        timing_lines += [json.dumps(r, sort_keys=True) + "\n" for r in res.timings]
        entry = {"seed": res.seed, "error": res.error}
        if res.checkpoint is not None:
            res.checkpoint.extra = {"vocab_sha256": _vocab_digest(vocab_json), "train_config": config.to_dict()}
            seed_dir = os.path.join(out, f"seed{res.seed}")
            os.makedirs(seed_dir, exist_ok=True)
            path = os.path.join(seed_dir, "best.ckpt")
            res.checkpoint.save(path)
            entry.update(checkpoint=os.path.relpath(path, out), epoch=res.checkpoint.epoch,
                         val_ppl=res.checkpoint.val_ppl)
        summary["seeds"].append(entry)
    atomic_write(os.path.join(out, "train_log.jsonl"), "".join(log_lines))
    atomic_write(os.path.join(out, "timing.jsonl"), "".join(timing_lines))
    atomic_write(os.path.join(out, "summary.json"), _dump_json(summary))
    failed = [e for e in summary["seeds"] if e["error"]]
    for e in summary["seeds"]:
        status = f"FAILED ({e['error']})" if e["error"] else f"best epoch {e['epoch']}, val ppl {e['val_ppl']:.3f}"
        print(f"seed {e['seed']}: {status}")
    return EXIT_DIVERGED if failed else EXIT_OK


# ---------------------------------------------------------------------------
# parse


def cmd_parse(args):
    if not args.checkpoint or not args.data:
        raise UsageError("--checkpoint and --data are required")
    if not os.path.exists(args.checkpoint):
        raise DataError(f"missing checkpoint: {args.checkpoint}")
    ck = Checkpoint.load(args.checkpoint)
    corpus = _read_split(args.data, "")
    vocab_path = args.vocab or os.path.join(os.path.dirname(args.data), "vocab.json")
    if os.path.exists(vocab_path):
        with open(vocab_path, encoding="utf-8") as f:
            digest = _vocab_digest(json.load(f))
        expected = ck.extra.get("vocab_sha256")
        if expected and digest != expected:
            raise UsageError(f"vocabulary {vocab_path} does not match the checkpoint's training vocabulary")
    vocab_size = ck.model_config["vocab_size"]
    for i, s in enumerate(corpus.sentences):
        if s.ids and max(s.ids) >= vocab_size:
            raise UsageError(f"sentence {i} has token ids outside the checkpoint vocabulary ({vocab_size})")
    model = ck.model()
    if not model.is_compound:
        log.info("all rule blocks shared: z unused, no encoder pass")
    sents = corpus.sentences
    records, brackets = [None] * len(sents), [None] * len(sents)
    for i, result in enumerate(decode(model, sents, args.batch_size)):
        if result is not None:
            tree, score = result
            toks = sents[i].tree.tokens
            records[i] = tree.to_json(toks, score)
            brackets[i] = tree.to_bracketed(toks)
    for i, s in enumerate(sents):
        if records[i] is None:  # single token: nothing to decode
            records[i] = {"tokens": s.tree.tokens, "spans": [], "symbols": [], "preterminals": [], "score": None}
            brackets[i] = f"(X {s.tree.tokens[0]})" if s.tree.tokens else "(X)"
    out = _out_dir(args)
    atomic_write(os.path.join(out, "predictions.jsonl"),
                 "".join(json.dumps(r, sort_keys=True) + "\n" for r in records))
    atomic_write(os.path.join(out, "predictions.txt"), "".join(b + "\n" for b in brackets))
    print(f"parsed {len(sents)} sentences")
    return EXIT_OK


# ---------------------------------------------------------------------------
# evaluate


def _read_prediction_records(path):
    if not os.path.exists(path):
        raise DataError(f"missing predictions: {path}")
    with open(path, encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]


def cmd_evaluate(args):
    cfg = _load_config(args.config)
    if not args.gold:
        raise UsageError("--gold is required")
    gold = [s.tree for s in _read_split(args.gold, "gold").sentences]
    labels = args.labels.split(",") if args.labels else cfg.get("labels", list(ev.DEFAULT_LABELS))
    out = _out_dir(args)
    if args.baseline:
        seed = args.seed if args.seed is not None else 0
        n_runs = args.baseline_runs if args.baseline == "random" else 1
        reports = [ev.evaluate(gold, ev.baseline_predictions(args.baseline, gold, seed + r), labels)
                   for r in range(n_runs)]
        report = reports[0]
        if n_runs > 1:
            c = [r.corpus_f1 for r in reports]
            s = [r.sentence_f1 for r in reports]
            report.corpus_f1, report.sentence_f1 = float(np.mean(c)), float(np.mean(s))
            report.extra = {"runs": n_runs, "corpus_f1_std": float(np.std(c, ddof=1)),
                            "sentence_f1_std": float(np.std(s, ddof=1))}
        report.extra["baseline"] = args.baseline
    else:
        if not args.pred:
            raise UsageError("either --pred or --baseline is required")
        recs = _read_prediction_records(args.pred)
        for i in range(min(len(recs), len(gold))):
            toks = recs[i].get("tokens")
            if toks is not None and toks != gold[i].tokens:
                raise DataError(f"predictions and gold disagree at sentence index {i}")
        if len(recs) != len(gold):
            raise DataError(f"predictions and gold disagree at sentence index {min(len(recs), len(gold))} "
                            f"({len(recs)} predictions, {len(gold)} gold trees)")
        preds = [{(s, e) for s, e, *_ in r["spans"]} for r in recs]
        report = ev.evaluate(gold, preds, labels)
    atomic_write(os.path.join(out, "report.json"), _dump_json(report.to_json()))
    atomic_write(os.path.join(out, "report.csv"), report.summary_csv())
    atomic_write(os.path.join(out, "label_length.csv"), report.label_length_csv())
    if args.by_length:
        atomic_write(os.path.join(out, "by_length.csv"), report.length_csv())
    print(f"C-F1 {report.corpus_f1:.2f}  S-F1 {report.sentence_f1:.2f}  sentences {report.sentences}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# synth


def cmd_synth(args):
    cfg = dict(_load_config(args.config).get("synth", {}))
    for flag, key in (("n_train", "n_train"), ("n_valid", "n_valid"), ("n_test", "n_test"), ("max_len", "max_len"),
                      ("nonterminals", "n_nonterminals"), ("preterminals", "n_preterminals"),
                      ("vocab", "vocab_size")):
        value = getattr(args, flag)
        if value is not None:
            cfg[key] = value
    if args.seed is not None:
        cfg["seed"] = args.seed
    names = {f.name for f in fields(synth.SynthConfig)}
    if set(cfg) - names:
        raise UsageError(f"unknown synth config keys: {sorted(set(cfg) - names)}")
    sconf = synth.SynthConfig(**cfg)
    try:
        grammar, splits = synth.sample_corpus(sconf)
    except synth.UnproductiveGrammar as exc:
        raise DataError(str(exc)) from None
    out = _out_dir(args)
    for split, lines in splits.items():
        atomic_write(os.path.join(out, f"{split}.txt"), "".join(line + "\n" for line in lines))
    atomic_write(os.path.join(out, "grammar.json"), synth.dump_grammar(grammar, sconf) + "\n")
    print(" ".join(f"{k}: {len(v)}" for k, v in splits.items()))
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment config")
    common.add_argument("--seed", type=int, help="random seed (base seed for multi-seed training)")
    common.add_argument("--out", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="cpcfg", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("preprocess", parents=[common], help="bracketed treebank -> JSON-lines corpus")
    p.add_argument("--train")
    p.add_argument("--valid")
    p.add_argument("--test")
    p.add_argument("--punct-tags", help="comma-separated POS tags to delete")
    p.add_argument("--vocab-size", type=int)
    p.add_argument("--max-train-len", type=int, help="drop longer training sentences (0: no cap)")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", parents=[common], help="optimise the ELBO for each seed")
    p.add_argument("--data", help="preprocessed corpus directory")
    p.add_argument("--seeds", type=int, help="number of seeds, counting up from --seed")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--preset", choices=["default", "small"])
    p.add_argument("--nonterminals", type=int)
    p.add_argument("--preterminals", type=int)
    p.add_argument("--z-dim", type=int)
    p.add_argument("--max-train-len", type=int)
    p.add_argument("--share-start", action="store_true")
    p.add_argument("--share-nonterminal", action="store_true")
    p.add_argument("--share-preterminal", action="store_true")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("parse", parents=[common], help="MAP trees at the posterior mean")
    p.add_argument("--checkpoint")
    p.add_argument("--data", help="corpus split (JSON lines)")
    p.add_argument("--vocab", help="vocab.json to check against the checkpoint")
    p.add_argument("--batch-size", type=int, default=16)
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("evaluate", parents=[common], help="F1, label recall and length breakdowns")
    p.add_argument("--gold", help="gold corpus split (JSON lines)")
    p.add_argument("--pred", help="predictions.jsonl from parse")
    p.add_argument("--baseline", choices=["left", "right", "random"])
    p.add_argument("--baseline-runs", type=int, default=4, help="random-baseline repetitions")
    p.add_argument("--labels", help="comma-separated labels for recall")
    p.add_argument("--by-length", action="store_true", help="also write by_length.csv")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("synth", parents=[common], help="sample a treebank from a random PCFG")
    p.add_argument("--n-train", type=int)
    p.add_argument("--n-valid", type=int)
    p.add_argument("--n-test", type=int)
    p.add_argument("--max-len", type=int)
    p.add_argument("--nonterminals", type=int)
    p.add_argument("--preterminals", type=int)
    p.add_argument("--vocab", type=int)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"cpcfg {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"cpcfg {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
