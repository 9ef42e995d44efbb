"""Reverse-mode automatic differentiation over dynamically built graphs.

Every primitive returns a :class:`Node` whose ``parents`` are its inputs.
Graphs are rebuilt per example; :func:`backward` walks the nodes reachable
from a scalar root in reverse construction order. :class:`Parameter` leaves
keep their ``grad`` buffer across calls, so repeated ``backward`` calls
accumulate, which is how minibatch gradients are formed.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import kernels as K

LOG_CLAMP = 1e-12

_ids = itertools.count()


class ShapeError(ValueError):
    pass


class Node:
    __slots__ = ("value", "grad", "parents", "kind", "requires_grad", "id", "_backward")

    def __init__(self, value, parents=(), kind="const", backward=None):
        self.value = value
        self.grad = None
        self.parents = parents
        self.kind = kind
        self.requires_grad = False
        for p in parents:
            if p.requires_grad:
                self.requires_grad = True
                break
        self._backward = backward if self.requires_grad else None
        self.id = next(_ids)

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Node({self.kind}, shape={self.value.shape})"


class Parameter(Node):
    """Trainable leaf; ``grad`` is a persistent accumulator."""

    __slots__ = ("name",)

    def __init__(self, name: str, value):
        super().__init__(np.array(value, dtype=np.float64, order="C"), (), "param")
        self.name = name
        self.requires_grad = True
        self.grad = np.zeros_like(self.value)

    def zero_grad(self):
        self.grad.fill(0.0)

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.value.shape})"


def const(value) -> Node:
    return Node(np.array(value, dtype=np.float64, order="C"))


def _buf(node):
    if node.grad is None:
        node.grad = np.zeros(node.value.shape)
    return node.grad


def _flat(a):
    return a.reshape(-1)


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _same_shape(kind, a, b):
    if a.value.shape != b.value.shape:
        raise ShapeError(f"{kind}: incompatible shapes {a.value.shape} and {b.value.shape}")


# -- elementwise ---------------------------------------------------------------

def add(*xs: Node) -> Node:
    """Sum of nodes, left to right; numpy broadcasting allowed."""
    if len(xs) == 1:
        return xs[0]
    if not xs:
        raise ShapeError("add: no inputs")
    shape = xs[0].value.shape
    same = all(x.value.shape == shape for x in xs)
    if not same:
        try:
            np.broadcast_shapes(*(x.value.shape for x in xs))
        except ValueError:
            raise ShapeError(
                "add: incompatible shapes " + " and ".join(str(x.value.shape) for x in xs)
            ) from None
    v = xs[0].value + xs[1].value
    for x in xs[2:]:
        v = v + x.value

    def bw(out):
        g = out.grad
        for x in xs:
            if x.requires_grad:
                _buf(x)
                x.grad += g if same else _unbroadcast(g, x.value.shape)

    return Node(v, xs, "add", bw)


def add_n(xs: Sequence[Node]) -> Node:
    """Sum over a set of same-shape nodes (Child-Sum)."""
    xs = tuple(xs)
    for x in xs[1:]:
        _same_shape("add_n", xs[0], x)
    return add(*xs)


def sub(a: Node, b: Node) -> Node:
    _same_shape("sub", a, b)

    def bw(out):
        if a.requires_grad:
            _buf(a)
            a.grad += out.grad
        if b.requires_grad:
            _buf(b)
            b.grad -= out.grad

    return Node(a.value - b.value, (a, b), "sub", bw)


def mul(a: Node, b: Node) -> Node:
    """Elementwise product of equal-shape nodes."""
    _same_shape("mul", a, b)

    def bw(out):
        g = _flat(out.grad)
        if a.requires_grad:
            K.mul_acc(_flat(_buf(a)), g, _flat(b.value))
        if b.requires_grad:
            K.mul_acc(_flat(_buf(b)), g, _flat(a.value))

    return Node(a.value * b.value, (a, b), "mul", bw)


def scale(a: Node, c: float) -> Node:
    def bw(out):
        _buf(a)
        a.grad += c * out.grad

    return Node(c * a.value, (a,), "scale", bw)


def one_minus(a: Node) -> Node:
    def bw(out):
        _buf(a)
        a.grad -= out.grad

    return Node(1.0 - a.value, (a,), "one_minus", bw)


def tanh(a: Node) -> Node:
    y = K.tanh(_flat(a.value)).reshape(a.value.shape)

    def bw(out):
        K.tanh_grad_acc(_flat(_buf(a)), _flat(y), _flat(out.grad))

    return Node(y, (a,), "tanh", bw)


def sigmoid(a: Node) -> Node:
    y = K.sigmoid(_flat(a.value)).reshape(a.value.shape)

    def bw(out):
        K.sigmoid_grad_acc(_flat(_buf(a)), _flat(y), _flat(out.grad))

    return Node(y, (a,), "sigmoid", bw)


def absolute(a: Node) -> Node:
    # subgradient 0 at 0
    sign = np.sign(a.value)

    def bw(out):
        _buf(a)
        a.grad += sign * out.grad

    return Node(np.abs(a.value), (a,), "abs", bw)


def log(a: Node) -> Node:
    """Natural log with inputs clamped to >= LOG_CLAMP (zero gradient where clamped)."""
    x = np.maximum(a.value, LOG_CLAMP)
    live = a.value >= LOG_CLAMP

    def bw(out):
        _buf(a)
        a.grad += np.where(live, out.grad / x, 0.0)

    return Node(np.log(x), (a,), "log", bw)


def clip(a: Node, lo: float, hi: float) -> Node:
    live = (a.value >= lo) & (a.value <= hi)

    def bw(out):
        _buf(a)
        a.grad += np.where(live, out.grad, 0.0)

    return Node(np.clip(a.value, lo, hi), (a,), "clip", bw)


def softmax(a: Node) -> Node:
    if a.value.ndim != 1:
        raise ShapeError(f"softmax: expected a vector, got shape {a.value.shape}")
    y = K.softmax(a.value)

    def bw(out):
        K.softmax_grad_acc(_buf(a), y, out.grad)

    return Node(y, (a,), "softmax", bw)


# -- reductions / indexing -----------------------------------------------------

def total(a: Node) -> Node:
    def bw(out):
        _buf(a)
        a.grad += out.grad

    return Node(np.asarray(a.value.sum()), (a,), "sum", bw)


def dot(a: Node, b: Node) -> Node:
    if a.value.ndim != 1:
        raise ShapeError(f"dot: expected vectors, got shapes {a.value.shape} and {b.value.shape}")
    _same_shape("dot", a, b)

    def bw(out):
        g = float(out.grad)
        if a.requires_grad:
            _buf(a)
            a.grad += g * b.value
        if b.requires_grad:
            _buf(b)
            b.grad += g * a.value

    return Node(np.asarray(np.dot(a.value, b.value)), (a, b), "dot", bw)


def sumsq(a: Node) -> Node:
    v = _flat(a.value)

    def bw(out):
        _buf(a)
        a.grad += (2.0 * float(out.grad)) * a.value

    return Node(np.asarray(np.dot(v, v)), (a,), "sumsq", bw)


def index(a: Node, i: int) -> Node:
    def bw(out):
        _buf(a)[i] += out.grad

    return Node(np.asarray(a.value[i]), (a,), "index", bw)


def column(a: Node, j: int) -> Node:
    if a.value.ndim != 2:
        raise ShapeError(f"column: expected a matrix, got shape {a.value.shape}")

    def bw(out):
        _buf(a)[:, j] += out.grad

    return Node(np.ascontiguousarray(a.value[:, j]), (a,), "column", bw)


def stack(xs: Sequence[Node]) -> Node:
    """Stack n vectors of length d into an (n, d) matrix."""
    xs = tuple(xs)
    for x in xs[1:]:
        _same_shape("stack", xs[0], x)

    def bw(out):
        for k, x in enumerate(xs):
            if x.requires_grad:
                _buf(x)
                x.grad += out.grad[k]

    return Node(np.stack([x.value for x in xs]), xs, "stack", bw)


# -- linear algebra ------------------------------------------------------------

def matvec(A: Node, x: Node) -> Node:
    """A @ x for A of shape (m, n) and x of shape (n,)."""
    if A.value.ndim != 2 or x.value.ndim != 1 or A.value.shape[1] != x.value.shape[0]:
        raise ShapeError(f"matvec: incompatible shapes {A.value.shape} and {x.value.shape}")

    def bw(out):
        g = out.grad
        if A.requires_grad:
            K.ger_acc(_buf(A), g, x.value)
        if x.requires_grad:
            K.gemv_t_acc(_buf(x), A.value, g)

    return Node(A.value @ x.value, (A, x), "matvec", bw)


def rmatvec(A: Node, v: Node) -> Node:
    """A.T @ v for A of shape (n, d) and v of shape (n,)."""
    if A.value.ndim != 2 or v.value.ndim != 1 or A.value.shape[0] != v.value.shape[0]:
        raise ShapeError(f"rmatvec: incompatible shapes {A.value.shape} and {v.value.shape}")

    def bw(out):
        g = out.grad
        if A.requires_grad:
            K.ger_acc(_buf(A), v.value, g)
        if v.requires_grad:
            _buf(v)
            v.grad += A.value @ g

    return Node(A.value.T @ v.value, (A, v), "rmatvec", bw)


def matmul(A: Node, B: Node) -> Node:
    if A.value.ndim != 2 or B.value.ndim != 2 or A.value.shape[1] != B.value.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {A.value.shape} and {B.value.shape}")

    def bw(out):
        g = out.grad
        if A.requires_grad:
            _buf(A)
            A.grad += g @ B.value.T
        if B.requires_grad:
            _buf(B)
            B.grad += A.value.T @ g

    return Node(A.value @ B.value, (A, B), "matmul", bw)


def matmul_t(A: Node, B: Node) -> Node:
    """A @ B.T for A of shape (n, k) and B of shape (m, k)."""
    if A.value.ndim != 2 or B.value.ndim != 2 or A.value.shape[1] != B.value.shape[1]:
        raise ShapeError(f"matmul_t: incompatible shapes {A.value.shape} and {B.value.shape}")

    def bw(out):
        g = out.grad
        if A.requires_grad:
            _buf(A)
            A.grad += g @ B.value
        if B.requires_grad:
            _buf(B)
            B.grad += g.T @ A.value

    return Node(A.value @ B.value.T, (A, B), "matmul_t", bw)


# -- backward ------------------------------------------------------------------

def _reachable(root):
    seen = {root.id}
    order = [root]
    stack_ = [root]
    while stack_:
        n = stack_.pop()
        for p in n.parents:
            if p.requires_grad and p.id not in seen:
                seen.add(p.id)
                order.append(p)
                stack_.append(p)
    order.sort(key=lambda n: n.id, reverse=True)
    return order


def backward(root: Node, seed: float = 1.0) -> None:
    """Propagate d(root)/d(node) to every reachable node.

    Parameters accumulate into their persistent ``grad``; intermediate nodes
    get fresh adjoints.
    """
    if root.value.size != 1:
        raise ShapeError(f"backward: root must be scalar, got shape {root.value.shape}")
    if not root.requires_grad:
        return
    order = _reachable(root)
    for n in order:
        if not isinstance(n, Parameter):
            n.grad = None
    if isinstance(root, Parameter):
        root.grad += seed
        return
    root.grad = np.full_like(root.value, seed)
    for n in order:
        if n._backward is not None and n.grad is not None:
            n._backward(n)


# -- gradient checking ---------------------------------------------------------

@dataclass
class ParamCheck:
    name: str
    max_rel_error: float  # over entries whose absolute error exceeds the floor
    max_abs_error: float
    significant_rel_error: float  # over entries with |gradient| >= SIGNIFICANT
    passed: bool


SIGNIFICANT = 1e-5


@dataclass
class GradCheckReport:
    checks: list[ParamCheck] = field(default_factory=list)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    @property
    def max_rel_error(self):
        return max((c.max_rel_error for c in self.checks), default=0.0)

    @property
    def significant_rel_error(self):
        return max((c.significant_rel_error for c in self.checks), default=0.0)

    def __str__(self):
        return "\n".join(
            f"{'ok ' if c.passed else 'BAD'} {c.name:16s} rel={c.max_rel_error:.2e} "
            f"abs={c.max_abs_error:.2e} sig={c.significant_rel_error:.2e}"
            for c in self.checks
        )


class NonDeterministicLoss(RuntimeError):
    pass


def finite_difference_check(
    loss_builder: Callable[[], Node],
    params: Sequence[Parameter],
    step: float = 1e-5,
    tolerance: float = 1e-4,
    abs_floor: float = 1e-7,
) -> GradCheckReport:
    """Compare analytic gradients against central differences for every entry.

    An entry passes when ``|a - n| <= abs_floor`` or
    ``|a - n| / max(|a|, |n|) < tolerance``. Near-zero gradients are thus
    judged absolutely; central differences at ``step=1e-5`` carry round-off
    around 1e-11, which makes relative error meaningless below ~1e-7.
    """
    if not 1e-6 <= step <= 1e-4:
        raise ValueError(f"step must lie in [1e-6, 1e-4], got {step}")

    def value():
        return float(loss_builder().value)

    v0, v1 = value(), value()
    if v0 != v1:
        raise NonDeterministicLoss(f"loss builder is not deterministic: {v0!r} != {v1!r}")

    for p in params:
        p.zero_grad()
    backward(loss_builder())
    analytic = [p.grad.copy() for p in params]

    report = GradCheckReport()
    for p, ga in zip(params, analytic):
        flat = p.value.reshape(-1)
        gflat = ga.reshape(-1)
        max_rel = max_abs = sig_rel = 0.0
        ok = True
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + step
            lp = value()
            flat[k] = orig - step
            lm = value()
            flat[k] = orig
            num = (lp - lm) / (2.0 * step)
            a = gflat[k]
            err = abs(a - num)
            mag = max(abs(a), abs(num))
            max_abs = max(max_abs, err)
            rel = err / mag if mag > 0 else 0.0
            if mag >= SIGNIFICANT:
                sig_rel = max(sig_rel, rel)
            if err <= abs_floor:
                continue
            max_rel = max(max_rel, rel)
            if rel >= tolerance:
                ok = False
        report.checks.append(ParamCheck(p.name, max_rel, max_abs, sig_rel, ok))
    for p in params:
        p.zero_grad()
    return report
