"""Sentence-pair model: siamese encoders, MLP head, decoding and losses."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import composers as cp
from .autodiff import Node

ENCODERS = ("seq", "tree", "attentive")
CELLS = ("rnn", "lstm", "gru")
CHECKPOINT_VERSION = 1
PROB_CLAMP = 1e-12


def parse_variant(tag: str):
    """'attentive-lstm' -> ('attentive', 'lstm')."""
    try:
        encoder, cell = tag.lower().split("-")
    except ValueError:
        raise ValueError(f"variant {tag!r} is not of the form <encoder>-<cell>") from None
    if encoder not in ENCODERS or cell not in CELLS:
        raise ValueError(f"unknown variant {tag!r}; encoders {ENCODERS}, cells {CELLS}")
    if cell == "rnn" and encoder != "seq":
        raise ValueError("the plain RNN cell is only available as 'seq-rnn'")
    return encoder, cell


VARIANTS = ["seq-rnn", "seq-lstm", "seq-gru", "tree-lstm", "tree-gru", "attentive-lstm", "attentive-gru"]


@dataclass
class AttentionRecord:
    node: int
    children: list[int]
    alphas: list[float]


@dataclass
class PairPrediction:
    distribution: np.ndarray
    score: float | None = None
    label: int | None = None
    traces: tuple[list[AttentionRecord], list[AttentionRecord]] | None = None


class SentencePairModel:
    """Encoder weights shared by both sentences, plus the MLP classifier.

    ``embeddings`` is a frozen (vocab x dim) array; it is never a parameter.
    """

    def __init__(self, variant, embeddings, hidden_dim=150, num_classes=5, mlp_hidden=50, seed=0):
        self.variant = variant
        self.encoder, self.cell = parse_variant(variant)
        self.embeddings = np.ascontiguousarray(embeddings, dtype=np.float64)
        self.hidden_dim = hidden_dim
        self.num_classes = num_classes
        self.mlp_hidden = mlp_hidden
        self.seed = seed
        dim = self.embeddings.shape[1]
        rng = np.random.default_rng(seed)
        self.seq = self.tree = self.att = None
        if self.encoder in ("seq", "attentive"):
            self.seq = cp.CellWeights.init(self.cell, dim, hidden_dim, rng, "seq.")
        if self.encoder in ("tree", "attentive"):
            self.tree = cp.CellWeights.init(self.cell, dim, hidden_dim, rng, "tree.")
        if self.encoder == "attentive":
            self.att = cp.AttentionWeights.init(hidden_dim, rng, "att.")
        bh = 1.0 / math.sqrt(hidden_dim)
        bp = 1.0 / math.sqrt(mlp_hidden)
        self.mlp = {
            "W_x": ad.Parameter("mlp.W_x", rng.uniform(-bh, bh, (mlp_hidden, hidden_dim))),
            "W_d": ad.Parameter("mlp.W_d", rng.uniform(-bh, bh, (mlp_hidden, hidden_dim))),
            "b_h": ad.Parameter("mlp.b_h", np.zeros(mlp_hidden)),
            "W_p": ad.Parameter("mlp.W_p", rng.uniform(-bp, bp, (num_classes, mlp_hidden))),
            "b_p": ad.Parameter("mlp.b_p", np.zeros(num_classes)),
        }

    @property
    def embed_dim(self):
        return self.embeddings.shape[1]

    def parameters(self) -> list[ad.Parameter]:
        out = []
        for part in (self.seq, self.tree, self.att):
            if part is not None:
                out.extend(part.parameters())
        out.extend(self.mlp.values())
        return out

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    # -- state ---------------------------------------------------------------

    def state_dict(self):
        return {p.name: p.value.copy() for p in self.parameters()}

    def load_state_dict(self, state):
        params = {p.name: p for p in self.parameters()}
        if set(state) != set(params):
            missing = sorted(set(params) - set(state))
            extra = sorted(set(state) - set(params))
            raise ValueError(f"state mismatch: missing {missing}, unexpected {extra}")
        for name, value in state.items():
            p = params[name]
            if value.shape != p.value.shape:
                raise ValueError(f"{name}: shape {value.shape} != {p.value.shape}")
            p.value[...] = value

    def copy(self):
        m = SentencePairModel(
            self.variant, self.embeddings, self.hidden_dim, self.num_classes, self.mlp_hidden, self.seed
        )
        m.load_state_dict(self.state_dict())
        return m

    # -- encoders ------------------------------------------------------------

    def _inputs(self, token_ids, weights):
        X = ad.const(self.embeddings[token_ids].T)
        return cp.project_sentence(X, weights)

    def encode_sequence(self, token_ids) -> Node:
        """Final hidden state after folding the sequential cell left to right."""
        if len(token_ids) == 0:
            raise ValueError("encode_sequence: empty sentence")
        w = self.seq
        xs = self._inputs(token_ids, w)
        h = c = None
        for x in xs:
            if self.cell == "lstm":
                h, c = cp.lstm_step(x, h, c, w)
            elif self.cell == "gru":
                h = cp.gru_step(x, h, w)
            else:
                h = cp.rnn_step(x, h, w)
        return h

    def encode_tree(self, tree, token_ids, guidance: Node | None = None):
        """Root hidden state of the (attentive) tree encoder, plus attention records."""
        if len(tree) != len(token_ids):
            raise ValueError(f"encode_tree: {len(token_ids)} tokens but {len(tree)} tree nodes")
        w = self.tree
        xs = self._inputs(token_ids, w)
        attentive = self.encoder == "attentive"
        if attentive:
            if guidance is None:
                raise ValueError("attentive encoder needs a guidance vector")
            us = cp.guidance_projection(guidance, self.att)
        hs, cs = {}, {}
        trace = []
        for n in tree.postorder():
            kids = tree.children[n]
            if self.cell == "lstm":
                pairs = [(hs[k], cs[k]) for k in kids]
                if attentive:
                    h, c, alphas = cp.attentive_tree_lstm_compose(xs[n], pairs, guidance, w, self.att, us)
                else:
                    h, c = cp.tree_lstm_compose(xs[n], pairs, w)
                    alphas = None
                cs[n] = c
            else:
                hk = [hs[k] for k in kids]
                if attentive:
                    h, alphas = cp.attentive_tree_gru_compose(xs[n], hk, guidance, w, self.att, us)
                else:
                    h = cp.tree_gru_compose(xs[n], hk, w)
                    alphas = None
            hs[n] = h
            if alphas is not None:
                trace.append(AttentionRecord(n, list(kids), alphas.value.tolist()))
        return hs[tree.root], trace

    def encode_pair(self, ids_a, tree_a, ids_b, tree_b):
        """(h_L, h_R, (trace_a, trace_b)); attentive encoders use cross guidance."""
        if self.encoder == "seq":
            return self.encode_sequence(ids_a), self.encode_sequence(ids_b), None
        if self.encoder == "tree":
            ha, _ = self.encode_tree(tree_a, ids_a)
            hb, _ = self.encode_tree(tree_b, ids_b)
            return ha, hb, None
        s_a = self.encode_sequence(ids_a)
        s_b = self.encode_sequence(ids_b)
        ha, ta = self.encode_tree(tree_a, ids_a, guidance=s_b)
        hb, tb = self.encode_tree(tree_b, ids_b, guidance=s_a)
        return ha, hb, (ta, tb)

    # -- head ----------------------------------------------------------------

    def mlp_head(self, h_l: Node, h_r: Node, dropout=0.0, rng=None) -> Node:
        """Class distribution from the product and absolute-difference features.

        With ``dropout > 0`` an inverted-dropout mask drawn from ``rng`` is
        applied to the hidden layer.
        """
        if h_l.value.shape != h_r.value.shape:
            raise ad.ShapeError(f"mlp_head: incompatible shapes {h_l.value.shape} and {h_r.value.shape}")
        m = self.mlp
        h_prod = ad.mul(h_l, h_r)
        h_diff = ad.absolute(ad.sub(h_l, h_r))
        h_s = ad.sigmoid(ad.add(ad.matvec(m["W_x"], h_prod), ad.matvec(m["W_d"], h_diff), m["b_h"]))
        if dropout > 0.0:
            h_s = ad.mul(h_s, ad.const(dropout_mask(h_s.value.shape, dropout, rng)))
        return ad.softmax(ad.add(ad.matvec(m["W_p"], h_s), m["b_p"]))

    def forward(self, ex, vocab, dropout=0.0, rng=None):
        """(distribution node, traces) for a DatasetExample."""
        ids_a = vocab.lookup(ex.tokens_a)
        ids_b = vocab.lookup(ex.tokens_b)
        h_l, h_r, traces = self.encode_pair(ids_a, ex.tree_a, ids_b, ex.tree_b)
        return self.mlp_head(h_l, h_r, dropout, rng), traces

    def loss(self, ex, vocab, dropout=0.0, rng=None) -> Node:
        probs, _ = self.forward(ex, vocab, dropout, rng)
        if self.num_classes == 2:
            return bce_loss(ex.label, probs)
        return kl_loss(target_distribution(ex.label, self.num_classes), probs)

    def predict(self, ex, vocab) -> PairPrediction:
        probs, traces = self.forward(ex, vocab)
        p = probs.value.copy()
        if self.num_classes == 2:
            return PairPrediction(p, label=decode_label(p), traces=traces)
        return PairPrediction(p, score=decode_similarity(p), traces=traces)


def dropout_mask(shape, rate, rng):
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
    keep = rng.random(shape) >= rate
    return keep / (1.0 - rate)


# -- targets, decoding, losses -------------------------------------------------

def target_distribution(y: float, num_classes: int = 5) -> np.ndarray:
    """Two-point distribution over scores 1..K whose expectation is ``y``."""
    if not 1.0 <= y <= num_classes:
        raise ValueError(f"score {y} outside [1, {num_classes}]")
    p = np.zeros(num_classes)
    fl = math.floor(y)
    p[fl - 1] = fl - y + 1.0
    if fl + 1 <= num_classes:
        p[fl] = y - fl
    return p


def decode_similarity(p) -> float:
    p = np.asarray(p, dtype=np.float64)
    return float(np.dot(np.arange(1, p.size + 1), p))


def decode_label(p) -> int:
    # argmax takes the first maximum, so ties go to the lower class
    return int(np.argmax(p))


def kl_loss(p, probs: Node) -> Node:
    """KL(p || probs) with 0 log 0 = 0 and predictions clamped at 1e-12."""
    p = np.asarray(p, dtype=np.float64)
    if p.shape != probs.value.shape:
        raise ad.ShapeError(f"kl_loss: incompatible shapes {p.shape} and {probs.value.shape}")
    nz = p > 0
    entropy_term = float(np.sum(p[nz] * np.log(p[nz])))
    cross = ad.dot(ad.const(p), ad.log(probs))
    return ad.add(ad.const(entropy_term), ad.scale(cross, -1.0))


def bce_loss(y: float, probs: Node) -> Node:
    """Binary cross-entropy on the positive-class probability ``probs[1]``."""
    if y not in (0, 1):
        raise ValueError(f"binary label must be 0 or 1, got {y}")
    q = ad.clip(ad.index(probs, 1), PROB_CLAMP, 1.0 - PROB_CLAMP)
    if y == 1:
        return ad.scale(ad.log(q), -1.0)
    return ad.scale(ad.log(ad.one_minus(q)), -1.0)


def l2_penalty(params, lam) -> Node:
    """(lam / 2) * sum of squared entries over ``params``."""
    return ad.scale(ad.add(*[ad.sumsq(p) for p in params]), 0.5 * lam)


# -- checkpoints ---------------------------------------------------------------

def save_checkpoint(path, model: SentencePairModel, vocab, extra=None):
    """Write an ``.npz`` archive: ``__meta__`` JSON header plus one array per tensor.

    Header keys: format, version, variant, hidden_dim, embed_dim, num_classes,
    mlp_hidden, seed, vocab_size, vocab_sha256, extra. The archive also keeps
    the frozen embedding table and the vocabulary so it is self-contained.
    """
    meta = {
        "format": "treeattn-checkpoint",
        "version": CHECKPOINT_VERSION,
        "variant": model.variant,
        "hidden_dim": model.hidden_dim,
        "embed_dim": model.embed_dim,
        "num_classes": model.num_classes,
        "mlp_hidden": model.mlp_hidden,
        "seed": model.seed,
        "vocab_size": len(vocab),
        "vocab_sha256": vocab.digest(),
        "extra": extra or {},
    }
    arrays = {f"param/{k}": v for k, v in model.state_dict().items()}
    arrays["embeddings"] = model.embeddings
    arrays["vocab"] = np.array(vocab.itos, dtype=object) if vocab.itos else np.array([], dtype=object)
    with open(path, "wb") as fh:
        np.savez(fh, __meta__=np.array(json.dumps(meta)), **arrays)


def load_checkpoint(path):
    """Returns ``(model, vocab, meta)``."""
    from .data import Vocabulary

    with np.load(path, allow_pickle=True) as z:
        meta = json.loads(str(z["__meta__"]))
        if meta.get("format") != "treeattn-checkpoint":
            raise ValueError(f"{path}: not a checkpoint")
        if meta["version"] > CHECKPOINT_VERSION:
            raise ValueError(f"{path}: checkpoint version {meta['version']} is newer than supported")
        vocab = Vocabulary(z["vocab"].tolist())
        if vocab.digest() != meta["vocab_sha256"]:
            raise ValueError(f"{path}: vocabulary hash mismatch")
        model = SentencePairModel(
            meta["variant"], z["embeddings"], meta["hidden_dim"], meta["num_classes"],
            meta["mlp_hidden"], meta["seed"],
        )
        model.load_state_dict({k[len("param/"):]: z[k] for k in z.files if k.startswith("param/")})
    return model, vocab, meta
