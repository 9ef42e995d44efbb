"""Recurrent and recursive composition cells.

Sequential cells (RNN, LSTM, GRU), Child-Sum Tree-LSTM / Tree-GRU, the soft
attention layer, and the attentive tree cells that replace the summed child
state with a transformed attention readout.

Every cell takes its input either as a vector node ``x`` or as a
:class:`ProjectedInput` carrying precomputed ``W x`` products (encoders
project a whole sentence with one matmul per gate). Both paths give the
same values.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Node, Parameter

GATES = {
    "rnn": ("h",),
    "lstm": ("i", "f", "o", "u"),
    "gru": ("r", "z", "h"),
}
# the GRU candidate has no bias term
NO_BIAS = {"gru": ("h",)}


@dataclass
class CellWeights:
    """Per-gate W (hidden x input), U (hidden x hidden) and b (hidden).

    Used for both sequential and tree cells of the same family: a Tree-LSTM
    shares the LSTM gate set, with one forget-gate set applied to every child.
    """

    cell: str
    W: dict
    U: dict
    b: dict

    @property
    def hidden_dim(self):
        return next(iter(self.U.values())).value.shape[0]

    @property
    def input_dim(self):
        return next(iter(self.W.values())).value.shape[1]

    def parameters(self):
        out = []
        for g in GATES[self.cell]:
            out.append(self.W[g])
            out.append(self.U[g])
            if g in self.b:
                out.append(self.b[g])
        return out

    @classmethod
    def init(cls, cell, input_dim, hidden_dim, rng, prefix=""):
        if cell not in GATES:
            raise ValueError(f"unknown cell {cell!r}; expected one of {sorted(GATES)}")
        bound = 1.0 / np.sqrt(hidden_dim)
        W, U, b = {}, {}, {}
        for g in GATES[cell]:
            W[g] = Parameter(f"{prefix}W_{g}", rng.uniform(-bound, bound, (hidden_dim, input_dim)))
            U[g] = Parameter(f"{prefix}U_{g}", rng.uniform(-bound, bound, (hidden_dim, hidden_dim)))
            if g not in NO_BIAS.get(cell, ()):
                b[g] = Parameter(f"{prefix}b_{g}", np.zeros(hidden_dim))
        return cls(cell, W, U, b)


@dataclass
class AttentionWeights:
    W_m: Parameter
    U_m: Parameter
    w: Parameter
    W_a: Parameter
    b_a: Parameter

    def parameters(self):
        return [self.W_m, self.U_m, self.w, self.W_a, self.b_a]

    @classmethod
    def init(cls, hidden_dim, rng, prefix="att."):
        bound = 1.0 / np.sqrt(hidden_dim)

        def mat(name):
            return Parameter(prefix + name, rng.uniform(-bound, bound, (hidden_dim, hidden_dim)))

        return cls(
            W_m=mat("W_m"),
            U_m=mat("U_m"),
            w=Parameter(prefix + "w", rng.uniform(-bound, bound, hidden_dim)),
            W_a=mat("W_a"),
            b_a=Parameter(prefix + "b_a", np.zeros(hidden_dim)),
        )


class ProjectedInput:
    """Input products ``W[g] @ x`` for one token, keyed by gate."""

    __slots__ = ("cols",)

    def __init__(self, cols):
        self.cols = cols


def project_sentence(X: Node, weights: CellWeights) -> list[ProjectedInput]:
    """Project every column of ``X`` (input_dim x n) through each gate's W at once."""
    if X.value.ndim != 2 or X.value.shape[0] != weights.input_dim:
        raise ad.ShapeError(
            f"project_sentence: incompatible shapes {X.value.shape} and "
            f"{(weights.hidden_dim, weights.input_dim)}"
        )
    mats = {g: ad.matmul(weights.W[g], X) for g in GATES[weights.cell]}
    n = X.value.shape[1]
    return [ProjectedInput({g: ad.column(m, t) for g, m in mats.items()}) for t in range(n)]


def _wx(x, weights, gate):
    if isinstance(x, ProjectedInput):
        return x.cols[gate]
    return ad.matvec(weights.W[gate], x)


def _pre(x, weights, gate, h=None):
    """W x + U h + b, summed in that order; terms that are absent are dropped."""
    terms = [_wx(x, weights, gate)]
    if h is not None:
        terms.append(ad.matvec(weights.U[gate], h))
    if gate in weights.b:
        terms.append(weights.b[gate])
    return ad.add(*terms)


def _check_state(name, h, weights):
    if h is not None and h.value.shape != (weights.hidden_dim,):
        raise ad.ShapeError(f"{name}: incompatible shapes {h.value.shape} and ({weights.hidden_dim},)")


def _check_cell(name, weights, cell):
    if weights.cell != cell:
        raise ValueError(f"{name}: expected {cell} weights, got {weights.cell}")


# -- sequential cells ----------------------------------------------------------

def rnn_step(x, h_prev: Node | None, weights: CellWeights) -> Node:
    """h = tanh(W x + U h_prev + b); ``h_prev=None`` means the zero state."""
    _check_cell("rnn_step", weights, "rnn")
    _check_state("rnn_step", h_prev, weights)
    return ad.tanh(_pre(x, weights, "h", h_prev))


def lstm_step(x, h_prev: Node | None, c_prev: Node | None, weights: CellWeights):
    _check_cell("lstm_step", weights, "lstm")
    _check_state("lstm_step", h_prev, weights)
    _check_state("lstm_step", c_prev, weights)
    i = ad.sigmoid(_pre(x, weights, "i", h_prev))
    o = ad.sigmoid(_pre(x, weights, "o", h_prev))
    u = ad.tanh(_pre(x, weights, "u", h_prev))
    terms = [ad.mul(i, u)]
    if c_prev is not None:
        f = ad.sigmoid(_pre(x, weights, "f", h_prev))
        terms.append(ad.mul(f, c_prev))
    c = ad.add(*terms)
    h = ad.mul(o, ad.tanh(c))
    return h, c


def gru_step(x, h_prev: Node | None, weights: CellWeights) -> Node:
    """h = z*h_prev + (1 - z)*tanh(W_h x + U_h (r*h_prev))."""
    _check_cell("gru_step", weights, "gru")
    _check_state("gru_step", h_prev, weights)
    z = ad.sigmoid(_pre(x, weights, "z", h_prev))
    if h_prev is None:
        return ad.mul(ad.one_minus(z), ad.tanh(_pre(x, weights, "h")))
    r = ad.sigmoid(_pre(x, weights, "r", h_prev))
    hhat = ad.tanh(_pre(x, weights, "h", ad.mul(r, h_prev)))
    return ad.add(ad.mul(z, h_prev), ad.mul(ad.one_minus(z), hhat))


# -- Child-Sum tree cells ------------------------------------------------------

def _lstm_node(x, htilde, children, weights):
    i = ad.sigmoid(_pre(x, weights, "i", htilde))
    o = ad.sigmoid(_pre(x, weights, "o", htilde))
    u = ad.tanh(_pre(x, weights, "u", htilde))
    terms = [ad.mul(i, u)]
    if children:
        # shared forget weights, one gate per child on the raw child state
        wxf = _wx(x, weights, "f")
        bf = weights.b["f"]
        for hk, ck in children:
            fk = ad.sigmoid(ad.add(wxf, ad.matvec(weights.U["f"], hk), bf))
            terms.append(ad.mul(fk, ck))
    c = ad.add(*terms)
    return ad.mul(o, ad.tanh(c)), c


def _gru_node(x, htilde, children, weights):
    z = ad.sigmoid(_pre(x, weights, "z", htilde))
    if not children:
        return ad.mul(ad.one_minus(z), ad.tanh(_pre(x, weights, "h")))
    wxr = _wx(x, weights, "r")
    br = weights.b["r"]
    reset = []
    for hk in children:
        rk = ad.sigmoid(ad.add(wxr, ad.matvec(weights.U["r"], hk), br))
        reset.append(ad.mul(rk, hk))
    hhat = ad.tanh(_pre(x, weights, "h", ad.add_n(reset)))
    return ad.add(ad.mul(z, htilde), ad.mul(ad.one_minus(z), hhat))


def tree_lstm_compose(x, children: Sequence[tuple[Node, Node]], weights: CellWeights):
    """Child-Sum Tree-LSTM node; ``children`` is a list of (h_k, c_k). Returns (h, c)."""
    _check_cell("tree_lstm_compose", weights, "lstm")
    for hk, ck in children:
        _check_state("tree_lstm_compose", hk, weights)
        _check_state("tree_lstm_compose", ck, weights)
    htilde = ad.add_n([hk for hk, _ in children]) if children else None
    return _lstm_node(x, htilde, children, weights)


def tree_gru_compose(x, children: Sequence[Node], weights: CellWeights) -> Node:
    _check_cell("tree_gru_compose", weights, "gru")
    for hk in children:
        _check_state("tree_gru_compose", hk, weights)
    htilde = ad.add_n(children) if children else None
    return _gru_node(x, htilde, children, weights)


# -- attention -----------------------------------------------------------------

def guidance_projection(s: Node, att: AttentionWeights) -> Node:
    """U_m s, which depends only on the guidance vector; computed once per sentence."""
    return ad.matvec(att.U_m, s)


def soft_attention(children: Sequence[Node], s: Node, att: AttentionWeights, us: Node | None = None):
    """Attention weights over child states and their weighted sum.

    Returns ``(alphas, g)``: ``alphas`` is a node of n probabilities and
    ``g = sum_k alphas[k] * children[k]``.
    """
    n = len(children)
    if n == 0:
        raise ValueError("soft_attention: needs at least one child state")
    if s.value.shape != att.b_a.value.shape:
        raise ad.ShapeError(f"soft_attention: incompatible shapes {s.value.shape} and {att.b_a.value.shape}")
    if n == 1:
        return ad.const([1.0]), children[0]
    if us is None:
        us = guidance_projection(s, att)
    H = ad.stack(children)
    M = ad.tanh(ad.add(ad.matmul_t(H, att.W_m), us))
    alphas = ad.softmax(ad.matvec(M, att.w))
    return alphas, ad.rmatvec(H, alphas)


def _attended_state(hs, s, att, us):
    alphas, g = soft_attention(hs, s, att, us)
    htilde = ad.tanh(ad.add(ad.matvec(att.W_a, g), att.b_a))
    return alphas, htilde


def attentive_tree_lstm_compose(x, children, s, weights: CellWeights, att: AttentionWeights, us=None):
    """Tree-LSTM node whose summed child state is replaced by tanh(W_a g + b_a).

    Returns ``(h, c, alphas)``; ``alphas`` is None at leaves, which skip attention.
    """
    _check_cell("attentive_tree_lstm_compose", weights, "lstm")
    for hk, ck in children:
        _check_state("attentive_tree_lstm_compose", hk, weights)
        _check_state("attentive_tree_lstm_compose", ck, weights)
    if not children:
        h, c = _lstm_node(x, None, (), weights)
        return h, c, None
    alphas, htilde = _attended_state([hk for hk, _ in children], s, att, us)
    h, c = _lstm_node(x, htilde, children, weights)
    return h, c, alphas


def attentive_tree_gru_compose(x, children, s, weights: CellWeights, att: AttentionWeights, us=None):
    """Tree-GRU node with the attended state in the update gate and interpolation.

    Returns ``(h, alphas)``.
    """
    _check_cell("attentive_tree_gru_compose", weights, "gru")
    for hk in children:
        _check_state("attentive_tree_gru_compose", hk, weights)
    if not children:
        return _gru_node(x, None, (), weights), None
    alphas, htilde = _attended_state(list(children), s, att, us)
    return _gru_node(x, htilde, children, weights), alphas
