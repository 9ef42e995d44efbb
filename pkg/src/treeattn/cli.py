"""Command-line entry point: ``treeattn <subcommand> ...``.

Every subcommand accepts ``--config FILE`` (INI, ``[train]`` section) and a
flag per TrainConfig key; flags win over the file. Results go to stdout as
JSON lines. Exit codes: 0 ok, 2 config error, 3 data error, 4 numeric failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys

import numpy as np

from . import data as D
from . import metrics as M
from .autodiff import finite_difference_check
from .model import VARIANTS, SentencePairModel, load_checkpoint, save_checkpoint
from .train import ConfigError, NumericError, TrainConfig, coerce, fit, load_config
from .trees import DataError

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

log = logging.getLogger("treeattn")


def _emit(rec, out=None):
    (out or sys.stdout).write(json.dumps(rec) + "\n")


def _add_config_flags(p):
    p.add_argument("--config", help="INI file with a [train] section")
    for f in dataclasses.fields(TrainConfig):
        p.add_argument("--" + f.name.replace("_", "-"), dest="cfg_" + f.name, default=None,
                       help=f"override {f.name} (default {f.default})")


def resolve_config(args) -> TrainConfig:
    cfg = load_config(args.config) if args.config else TrainConfig()
    types = {f.name: f.type for f in dataclasses.fields(TrainConfig)}
    overrides = {}
    for name, typ in types.items():
        raw = getattr(args, "cfg_" + name, None)
        if raw is not None:
            overrides[name] = coerce(name, raw, typ)
    return cfg.updated(**overrides) if overrides else cfg.validate()


def _data_for_checkpoint(args, vocab, model, split_name, task):
    examples = D.read_split(args.data, split_name, task)
    before = len(vocab)
    for ex in examples:
        for t in ex.tokens_a + ex.tokens_b:
            vocab.add(t)
    if len(vocab) > before:
        if args.embeddings:
            table = D.load_embeddings(args.embeddings, vocab, seed=model.seed, dim=model.embed_dim)
        else:
            table = D.extend_embeddings(D.EmbeddingTable(model.embeddings, np.ones(before, bool)), vocab, model.seed)
        model.embeddings = np.ascontiguousarray(table.vectors)
    return examples


def _task_of(meta, cfg):
    return meta.get("extra", {}).get("task", cfg.task)


# -- subcommands -----------------------------------------------------------------

def cmd_prepare(args, cfg):
    task = cfg.task
    if args.format == "parents":
        exs = D.prepare_parents_dir(args.src, args.out, args.split, task)
        _emit({"split": args.split, "n": len(exs), "out": args.out})
    elif args.format == "sick":
        out = D.prepare_sick(args.src, args.trees_a, args.trees_b, args.out)
        for name, exs in out.items():
            _emit({"split": name, "n": len(exs), "out": args.out})
    elif args.format == "msrp":
        exs = D.prepare_msrp(args.src, args.trees_a, args.trees_b, args.out, args.split)
        _emit({"split": args.split, "n": len(exs), "out": args.out})
    else:
        exs = D.prepare_tsv(args.src, args.trees_a, args.trees_b, args.out, args.split, task)
        _emit({"split": args.split, "n": len(exs), "out": args.out})
    return EXIT_OK


def cmd_train(args, cfg):
    splits = D.load_dataset(cfg.task, args.data)
    vocab = D.Vocabulary.build(splits.train, splits.dev, splits.test)
    if args.embeddings:
        table = D.load_embeddings(args.embeddings, vocab, seed=cfg.seed, dim=cfg.embedding_dim)
    else:
        log.warning("no --embeddings given: every word vector is a random OOV row")
        table = D.random_embeddings(vocab, cfg.embedding_dim, cfg.seed)
    _emit({"event": "data", "train": len(splits.train), "dev": len(splits.dev), "test": len(splits.test),
           "vocab": len(vocab), "oov": table.oov_count, "warnings": splits.warnings})
    model = SentencePairModel(cfg.variant, table.vectors, cfg.hidden_dim, D.num_classes(cfg.task),
                              cfg.mlp_hidden, cfg.seed)
    res = fit(model, splits.train, splits.dev, vocab, cfg, history_path=args.history)
    for rec in res.history:
        _emit({"event": "epoch", **rec})
    _emit({"event": "best", "epoch": res.best_epoch, "dev_metric": res.best_metric})
    save_checkpoint(args.out, res.model, vocab,
                    extra={"task": cfg.task, "config": dataclasses.asdict(cfg), "best_epoch": res.best_epoch})
    if splits.test:
        kind = D.task_kind(cfg.task)
        report = _report(res.model, splits.test, vocab, cfg.task, kind)
        for rec in report.records():
            _emit({"event": "test", **rec})
    return EXIT_OK


def _report(model, examples, vocab, task, kind):
    preds = [model.predict(ex, vocab) for ex in examples]
    if kind == "similarity":
        return M.evaluate_predictions(task, kind, [p.score for p in preds], [ex.label for ex in examples])
    return M.evaluate_predictions(task, kind, [p.label for p in preds], [int(ex.label) for ex in examples])


def cmd_evaluate(args, cfg):
    model, vocab, meta = load_checkpoint(args.checkpoint)
    task = _task_of(meta, cfg)
    examples = _data_for_checkpoint(args, vocab, model, args.split, task)
    for rec in _report(model, examples, vocab, task, D.task_kind(task)).records():
        _emit(rec)
    return EXIT_OK


def cmd_predict(args, cfg):
    model, vocab, meta = load_checkpoint(args.checkpoint)
    task = _task_of(meta, cfg)
    examples = _data_for_checkpoint(args, vocab, model, args.split, task)
    for ex in examples:
        p = model.predict(ex, vocab)
        rec = {"id": ex.id}
        if p.score is not None:
            rec["score"] = p.score
        else:
            rec["label"] = p.label
        rec["distribution"] = p.distribution.tolist()
        _emit(rec)
    return EXIT_OK


def cmd_attn_export(args, cfg):
    model, vocab, meta = load_checkpoint(args.checkpoint)
    if model.encoder != "attentive":
        log.error("attn-export needs an attentive checkpoint (variant attentive-lstm or attentive-gru); got %s",
                  model.variant)
        return EXIT_CONFIG
    task = _task_of(meta, cfg)
    examples = _data_for_checkpoint(args, vocab, model, args.split, task)
    n = M.export_attention(model, examples, vocab, args.out)
    _emit({"records": n, "out": args.out})
    return EXIT_OK


def cmd_buckets(args, cfg):
    model, vocab, meta = load_checkpoint(args.checkpoint)
    task = _task_of(meta, cfg)
    kind = D.task_kind(task)
    examples = _data_for_checkpoint(args, vocab, model, args.split, task)
    results = []
    for ex in examples:
        p = model.predict(ex, vocab)
        pred = p.score if kind == "similarity" else p.label
        results.append(M.PairResult(ex.tokens_a, ex.tokens_b, pred, ex.label))
    edges = [float(e) for e in args.edges.split(",")]
    for row in M.bucket_report(results, args.key, edges, kind):
        _emit({"task": task, **row})
    return EXIT_OK


def gradcheck_variant(variant, hidden=5, embed=4, num_classes=5, seed=0, step=1e-5, tolerance=1e-4):
    """Finite-difference check of the full pair loss on a small synthetic example."""
    from .trees import DependencyTree

    rng = np.random.default_rng(seed)
    vocab = D.Vocabulary(["the", "dog", "runs", "a", "cat", "sleeps"])
    ex = D.DatasetExample(
        ["the", "dog", "runs"], ["a", "cat", "sleeps"],
        DependencyTree([1, -1, 1]), DependencyTree([2, 2, -1]),
        3.6 if num_classes == 5 else 1.0, "gradcheck",
    )
    emb = rng.uniform(-1.0, 1.0, (len(vocab), embed))
    model = SentencePairModel(variant, emb, hidden, num_classes, mlp_hidden=4, seed=seed)
    # Much larger than the init scale: with small weights the guidance path's
    # gradients are ~1e-8 and central differences drown in round-off.
    for p in model.parameters():
        p.value[...] = rng.uniform(-1.5, 1.5, p.value.shape)

    def build():
        return model.loss(ex, vocab, dropout=0.5, rng=np.random.default_rng(7))

    return finite_difference_check(build, model.parameters(), step, tolerance)


def cmd_gradcheck(args, cfg):
    variants = VARIANTS if args.variants == "all" else args.variants.split(",")
    for v in variants:
        if v not in VARIANTS:
            raise ConfigError(f"unknown variant {v!r}; expected one of {VARIANTS}")
    ok = True
    for v in variants:
        rep = gradcheck_variant(v, hidden=args.hidden, embed=args.embed,
                                num_classes=D.num_classes(cfg.task), seed=cfg.seed)
        ok &= rep.passed
        _emit({"variant": v, "passed": rep.passed, "max_rel_error": rep.max_rel_error,
               "significant_rel_error": rep.significant_rel_error, "max_abs_error": max(c.max_abs_error for c in rep.checks),
               "params": {c.name: c.max_rel_error for c in rep.checks}})
    return EXIT_OK if ok else EXIT_NUMERIC


def build_parser():
    ap = argparse.ArgumentParser(prog="treeattn", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="convert a raw corpus to the canonical TSV + CoNLL layout")
    p.add_argument("--format", choices=["parents", "sick", "msrp", "tsv"], required=True)
    p.add_argument("--src", required=True, help="raw file, or directory for --format parents")
    p.add_argument("--trees-a", help="CoNLL parses of the first sentences")
    p.add_argument("--trees-b", help="CoNLL parses of the second sentences")
    p.add_argument("--split", default="train")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_prepare)

    p = sub.add_parser("train", help="train and select on dev; writes a checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--embeddings")
    p.add_argument("--out", required=True, help="checkpoint path (.npz)")
    p.add_argument("--history", help="write per-epoch JSON lines here")
    p.set_defaults(fn=cmd_train)

    for name, fn, helptext in (
        ("evaluate", cmd_evaluate, "task metrics on one split"),
        ("predict", cmd_predict, "one prediction record per example"),
        ("attn-export", cmd_attn_export, "attention weights per internal tree node"),
        ("buckets", cmd_buckets, "metrics bucketed by mean length or n-gram overlap"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--checkpoint", required=True)
        p.add_argument("--data", required=True)
        p.add_argument("--split", default="test")
        p.add_argument("--embeddings", help="vectors for tokens unseen at training time")
        if name == "attn-export":
            p.add_argument("--out", required=True)
        if name == "buckets":
            p.add_argument("--key", choices=sorted(M.BUCKET_KEYS), default="mean-length")
            p.add_argument("--edges", default="0,5,10,15,20,25,100")
        p.set_defaults(fn=fn)

    p = sub.add_parser("gradcheck", help="finite-difference gradient check of the full loss")
    p.add_argument("--variants", default="all", help="comma-separated variants, or 'all'")
    p.add_argument("--hidden", type=int, default=5)
    p.add_argument("--embed", type=int, default=4)
    p.set_defaults(fn=cmd_gradcheck)

    for p in sub.choices.values():
        _add_config_flags(p)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = resolve_config(args)
        return args.fn(args, cfg)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except (DataError, FileNotFoundError) as exc:
        log.error("data error: %s", exc)
        return EXIT_DATA
    except (NumericError, FloatingPointError) as exc:
        log.error("numeric error: %s", exc)
        return EXIT_NUMERIC
    except ValueError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
