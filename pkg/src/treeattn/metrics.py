"""Task metrics, sentence-pair statistics, bucketed breakdowns and attention export."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import rankdata

NGRAM_SCALE = 50.0


class ZeroVarianceError(ValueError):
    pass


def _pair(preds, golds, min_len):
    x = np.asarray(preds, dtype=np.float64)
    y = np.asarray(golds, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"predictions and golds must be equal-length vectors, got {x.shape} and {y.shape}")
    if x.size < min_len:
        raise ValueError(f"need at least {min_len} pairs, got {x.size}")
    return x, y


def pearson(preds, golds) -> float:
    x, y = _pair(preds, golds, 2)
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = np.dot(dx, dx)
    syy = np.dot(dy, dy)
    if sxx == 0 or syy == 0:
        raise ZeroVarianceError("correlation undefined: zero variance")
    r = np.dot(dx, dy) / math.sqrt(sxx * syy)
    return float(min(1.0, max(-1.0, r)))


def spearman(preds, golds) -> float:
    """Pearson correlation of average ranks."""
    x, y = _pair(preds, golds, 2)
    return pearson(rankdata(x), rankdata(y))


def mse(preds, golds) -> float:
    x, y = _pair(preds, golds, 1)
    d = x - y
    return float(np.dot(d, d) / d.size)


def accuracy_f1(pred_labels, gold_labels):
    """Accuracy and positive-class F1 (0 when precision + recall is 0)."""
    p = np.asarray(pred_labels)
    g = np.asarray(gold_labels)
    if p.shape != g.shape or p.size == 0:
        raise ValueError("label lists must be non-empty and of equal length")
    if not (np.isin(p, (0, 1)).all() and np.isin(g, (0, 1)).all()):
        raise ValueError("labels must be 0 or 1")
    acc = float(np.mean(p == g))
    tp = int(np.sum((p == 1) & (g == 1)))
    fp = int(np.sum((p == 1) & (g == 0)))
    fn = int(np.sum((p == 0) & (g == 1)))
    prec = tp / (tp + fp) if tp + fp else 0.0
    rec = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
    return acc, f1


@dataclass
class MetricsReport:
    task: str
    n: int
    pearson: float | None = None
    spearman: float | None = None
    mse: float | None = None
    accuracy: float | None = None
    f1: float | None = None
    buckets: list = field(default_factory=list)

    def records(self):
        """Flat ``{task, metric, value, bucket}`` records, one per metric."""
        out = []
        for name in ("pearson", "spearman", "mse", "accuracy", "f1"):
            v = getattr(self, name)
            if v is not None:
                out.append({"task": self.task, "metric": name, "value": v, "bucket": None})
        for b in self.buckets:
            for name, v in b["metrics"].items():
                out.append({"task": self.task, "metric": name, "value": v, "bucket": b["range"], "n": b["n"]})
        return out


def _safe(fn, *args):
    try:
        return fn(*args)
    except (ZeroVarianceError, ValueError):
        return None


def similarity_metrics(scores, golds):
    return {
        "pearson": _safe(pearson, scores, golds),
        "spearman": _safe(spearman, scores, golds),
        "mse": _safe(mse, scores, golds),
    }


def binary_metrics(labels, golds):
    acc, f1 = accuracy_f1(labels, golds)
    return {"accuracy": acc, "f1": f1}


def evaluate_predictions(task, kind, preds, golds) -> MetricsReport:
    if kind == "similarity":
        m = similarity_metrics(preds, golds)
    else:
        m = binary_metrics(preds, golds)
    return MetricsReport(task, len(golds), **m)


# -- pair statistics -----------------------------------------------------------

def _ngrams(tokens, n):
    return {tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1)}


def ngram_overlap_score(tokens_a, tokens_b, c=NGRAM_SCALE) -> float:
    """c * (uni + bi + tri overlap) / mean sentence length.

    Each n-gram term is the number of n-gram types the sentences share,
    divided by the number of n-gram types in the shorter sentence (so it
    lies in [0, 1]); it is 0 when either sentence is shorter than n.
    """
    if not tokens_a or not tokens_b:
        raise ValueError("ngram_overlap_score: empty sentence")
    short, other = (tokens_a, tokens_b) if len(tokens_a) <= len(tokens_b) else (tokens_b, tokens_a)
    total = 0.0
    for n in (1, 2, 3):
        gs = _ngrams(short, n)
        go = _ngrams(other, n)
        if gs and go:
            total += len(gs & go) / len(gs)
    mean_len = (len(tokens_a) + len(tokens_b)) / 2.0
    return c * total / mean_len


def mean_length(tokens_a, tokens_b) -> float:
    return (len(tokens_a) + len(tokens_b)) / 2.0


BUCKET_KEYS = {
    "mean-length": mean_length,
    "ngram-overlap": ngram_overlap_score,
}


@dataclass
class PairResult:
    tokens_a: list
    tokens_b: list
    pred: float
    gold: float


def bucket_report(results, key, edges, kind):
    """Per-bucket metrics over half-open ``[edges[i], edges[i+1])``; the last bucket is closed.

    Empty buckets are reported with ``n = 0`` and no metrics.
    """
    if not results:
        raise ValueError("bucket_report: no results")
    if key not in BUCKET_KEYS:
        raise ValueError(f"unknown bucket key {key!r}; expected one of {sorted(BUCKET_KEYS)}")
    edges = [float(e) for e in edges]
    if len(edges) < 2 or any(b <= a for a, b in zip(edges, edges[1:])):
        raise ValueError("bucket edges must be at least two strictly increasing values")
    fn = BUCKET_KEYS[key]
    values = [fn(r.tokens_a, r.tokens_b) for r in results]
    table = []
    last = len(edges) - 2
    for i in range(len(edges) - 1):
        lo, hi = edges[i], edges[i + 1]
        idx = [k for k, v in enumerate(values) if lo <= v < hi or (i == last and v == hi)]
        preds = [results[k].pred for k in idx]
        golds = [results[k].gold for k in idx]
        metrics = {}
        if idx:
            if kind == "similarity":
                metrics = similarity_metrics(preds, golds)
            else:
                metrics = binary_metrics([int(p) for p in preds], [int(g) for g in golds])
        table.append({"key": key, "range": [lo, hi], "n": len(idx), "metrics": metrics})
    return table


# -- attention export ----------------------------------------------------------

def attention_records(ex, traces):
    """One dict per attended node: ``{id, side, head, children, alphas}``."""
    out = []
    for side, tokens, trace in (("a", ex.tokens_a, traces[0]), ("b", ex.tokens_b, traces[1])):
        for rec in trace:
            out.append({
                "id": ex.id,
                "side": side,
                "head": tokens[rec.node],
                "head_index": rec.node,
                "children": [tokens[c] for c in rec.children],
                "child_indices": list(rec.children),
                "alphas": list(rec.alphas),
            })
    return out


def export_attention(model, examples, vocab, out_path):
    """Write one JSON line per internal node of every attentive encoding."""
    if model.encoder != "attentive":
        raise ValueError(
            f"attention export needs an attentive variant (attentive-lstm / attentive-gru), got {model.variant!r}"
        )
    n = 0
    with open(out_path, "w", encoding="utf-8") as fh:
        for ex in examples:
            _, traces = model.forward(ex, vocab)
            for rec in attention_records(ex, traces):
                fh.write(json.dumps(rec) + "\n")
                n += 1
    return n
