"""Straight-line numpy versions of every cell, head, loss and metric.

Nothing here touches the autodiff engine; tests compare against these.
"""
import itertools
import math

import numpy as np


def sig(x):
    return 1.0 / (1.0 + np.exp(-x))


def arrays(cw):
    """CellWeights -> (W, U, b) dicts of plain arrays; missing biases are zeros."""
    W = {g: p.value for g, p in cw.W.items()}
    U = {g: p.value for g, p in cw.U.items()}
    H = next(iter(U.values())).shape[0]
    b = {g: (cw.b[g].value if g in cw.b else np.zeros(H)) for g in W}
    return W, U, b


def att_arrays(att):
    return {k: getattr(att, k).value for k in ("W_m", "U_m", "w", "W_a", "b_a")}


def rnn(x, h, W, U, b):
    return np.tanh(W["h"] @ x + U["h"] @ h + b["h"])


def lstm(x, h, c, W, U, b):
    i = sig(W["i"] @ x + U["i"] @ h + b["i"])
    f = sig(W["f"] @ x + U["f"] @ h + b["f"])
    o = sig(W["o"] @ x + U["o"] @ h + b["o"])
    u = np.tanh(W["u"] @ x + U["u"] @ h + b["u"])
    c_new = i * u + f * c
    return o * np.tanh(c_new), c_new


def gru(x, h, W, U, b):
    r = sig(W["r"] @ x + U["r"] @ h + b["r"])
    z = sig(W["z"] @ x + U["z"] @ h + b["z"])
    hh = np.tanh(W["h"] @ x + U["h"] @ (r * h))
    return z * h + (1 - z) * hh


def tree_lstm(x, kids, W, U, b, htilde=None):
    H = U["i"].shape[0]
    if htilde is None:
        htilde = sum((h for h, _ in kids), np.zeros(H))
    i = sig(W["i"] @ x + U["i"] @ htilde + b["i"])
    o = sig(W["o"] @ x + U["o"] @ htilde + b["o"])
    u = np.tanh(W["u"] @ x + U["u"] @ htilde + b["u"])
    c = i * u
    for h, ck in kids:
        f = sig(W["f"] @ x + U["f"] @ h + b["f"])
        c = c + f * ck
    return o * np.tanh(c), c


def tree_gru(x, kids, W, U, b, htilde=None):
    H = U["z"].shape[0]
    if htilde is None:
        htilde = sum(kids, np.zeros(H))
    reset = np.zeros(H)
    for h in kids:
        reset = reset + sig(W["r"] @ x + U["r"] @ h + b["r"]) * h
    z = sig(W["z"] @ x + U["z"] @ htilde + b["z"])
    hh = np.tanh(W["h"] @ x + U["h"] @ reset)
    return z * htilde + (1 - z) * hh


def attention(kids, s, A):
    scores = np.array([A["w"] @ np.tanh(A["W_m"] @ h + A["U_m"] @ s) for h in kids])
    e = np.exp(scores - scores.max())
    alpha = e / e.sum()
    g = sum(a * h for a, h in zip(alpha, kids))
    return alpha, g


def attentive_tree_lstm(x, kids, s, W, U, b, A):
    if not kids:
        return tree_lstm(x, kids, W, U, b)
    _, g = attention([h for h, _ in kids], s, A)
    return tree_lstm(x, kids, W, U, b, htilde=np.tanh(A["W_a"] @ g + A["b_a"]))


def attentive_tree_gru(x, kids, s, W, U, b, A):
    if not kids:
        return tree_gru(x, kids, W, U, b)
    _, g = attention(kids, s, A)
    return tree_gru(x, kids, W, U, b, htilde=np.tanh(A["W_a"] @ g + A["b_a"]))


# -- whole model ---------------------------------------------------------------

def encode_seq(model, ids):
    W, U, b = arrays(model.seq)
    H = model.hidden_dim
    h, c = np.zeros(H), np.zeros(H)
    for t in ids:
        x = model.embeddings[t]
        if model.cell == "lstm":
            h, c = lstm(x, h, c, W, U, b)
        elif model.cell == "gru":
            h = gru(x, h, W, U, b)
        else:
            h = rnn(x, h, W, U, b)
    return h


def encode_tree(model, tree, ids, s=None):
    W, U, b = arrays(model.tree)
    A = att_arrays(model.att) if model.att is not None else None

    def rec(n):
        kids = [rec(k) for k in tree.children[n]]
        x = model.embeddings[ids[n]]
        if model.cell == "lstm":
            if A is not None:
                return attentive_tree_lstm(x, kids, s, W, U, b, A)
            return tree_lstm(x, kids, W, U, b)
        hk = [k for k in kids]
        if A is not None:
            return attentive_tree_gru(x, hk, s, W, U, b, A)
        return tree_gru(x, hk, W, U, b)

    out = rec(tree.root)
    return out[0] if model.cell == "lstm" else out


def encode_pair(model, ids_a, tree_a, ids_b, tree_b):
    if model.encoder == "seq":
        return encode_seq(model, ids_a), encode_seq(model, ids_b)
    if model.encoder == "tree":
        return encode_tree(model, tree_a, ids_a), encode_tree(model, tree_b, ids_b)
    sa, sb = encode_seq(model, ids_a), encode_seq(model, ids_b)
    return encode_tree(model, tree_a, ids_a, sb), encode_tree(model, tree_b, ids_b, sa)


def mlp(model, hl, hr, mask=None):
    m = {k: p.value for k, p in model.mlp.items()}
    hs = sig(m["W_x"] @ (hl * hr) + m["W_d"] @ np.abs(hl - hr) + m["b_h"])
    if mask is not None:
        hs = hs * mask
    z = m["W_p"] @ hs + m["b_p"]
    e = np.exp(z - z.max())
    return e / e.sum()


def kl(p, q):
    total = 0.0
    for pi, qi in zip(p, q):
        if pi > 0:
            total += pi * math.log(pi / max(qi, 1e-12))
    return total


def bce(y, q):
    q = min(max(q, 1e-12), 1 - 1e-12)
    return -(y * math.log(q) + (1 - y) * math.log(1 - q))


# -- metrics -------------------------------------------------------------------

def pearson(x, y):
    n = len(x)
    mx = sum(x) / n
    my = sum(y) / n
    sxy = sum((a - mx) * (b - my) for a, b in zip(x, y))
    sxx = sum((a - mx) ** 2 for a in x)
    syy = sum((b - my) ** 2 for b in y)
    return sxy / math.sqrt(sxx * syy)


def avg_ranks(x):
    """Average 1-based rank by counting, O(n^2)."""
    out = []
    for v in x:
        below = sum(1 for u in x if u < v)
        same = sum(1 for u in x if u == v)
        out.append(below + (same + 1) / 2.0)
    return out


def spearman(x, y):
    return pearson(avg_ranks(x), avg_ranks(y))


def mse(x, y):
    return sum((a - b) ** 2 for a, b in zip(x, y)) / len(x)


def f1(pred, gold):
    tp = sum(1 for p, g in zip(pred, gold) if p == 1 and g == 1)
    fp = sum(1 for p, g in zip(pred, gold) if p == 1 and g == 0)
    fn = sum(1 for p, g in zip(pred, gold) if p == 0 and g == 1)
    if 2 * tp + fp + fn == 0:
        return 0.0
    return 2 * tp / (2 * tp + fp + fn)


def ngram_types(tokens, n):
    return set(itertools.chain.from_iterable([tuple(tokens[i:i + n])] for i in range(len(tokens) - n + 1)))
