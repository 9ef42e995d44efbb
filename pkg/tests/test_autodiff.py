import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from treeattn import autodiff as ad
from treeattn import kernels
from treeattn.autodiff import Parameter, backward, const, finite_difference_check


def test_primitive_examples():
    assert np.array_equal(ad.tanh(const([0.0, 0.0])).value, [0.0, 0.0])
    np.testing.assert_allclose(ad.softmax(const([2.5, 2.5, 2.5])).value, [1 / 3] * 3, rtol=0, atol=1e-15)
    assert np.array_equal(ad.matvec(const(np.eye(2)), const([3.0, 5.0])).value, [3.0, 5.0])


def test_fanout_accumulates():
    x = Parameter("x", np.array([1.0]))
    backward(ad.total(ad.add(x, x)))
    assert x.grad[0] == 2.0


def test_tanh_grad_at_zero():
    x = Parameter("x", np.array([0.0]))
    backward(ad.total(ad.tanh(x)))
    assert x.grad[0] == 1.0


def test_sigmoid_matvec_fd():
    rng = np.random.default_rng(3)
    W = Parameter("W", rng.normal(size=(4, 4)))
    x = Parameter("x", rng.normal(size=4))
    r = rng.normal(size=4)
    rep = finite_difference_check(lambda: ad.dot(const(r), ad.sigmoid(ad.matvec(W, x))), [W, x])
    assert rep.passed
    assert rep.significant_rel_error < 1e-6


def test_quadratic_fd_exact():
    th = Parameter("theta", np.array([1.0, 2.0]))
    rep = finite_difference_check(lambda: ad.scale(ad.sumsq(th), 0.5), [th])
    assert rep.passed
    assert rep.checks[0].significant_rel_error < 1e-9
    backward(ad.scale(ad.sumsq(th), 0.5))
    np.testing.assert_allclose(th.grad, [1.0, 2.0], rtol=1e-15)


def test_constant_loss_zero_gradients():
    th = Parameter("theta", np.array([1.0, -3.0]))
    rep = finite_difference_check(lambda: const(4.0), [th])
    assert rep.passed
    assert rep.checks[0].max_abs_error == 0.0
    backward(const(4.0))
    assert not th.grad.any()


def test_nonscalar_root_rejected():
    x = Parameter("x", np.ones(3))
    with pytest.raises(ad.ShapeError, match="scalar"):
        backward(ad.tanh(x))


def test_shape_errors_name_primitive_and_shapes():
    with pytest.raises(ad.ShapeError, match=r"matvec.*\(2, 3\).*\(2,\)"):
        ad.matvec(const(np.ones((2, 3))), const(np.ones(2)))
    with pytest.raises(ad.ShapeError, match=r"mul.*\(3,\).*\(2,\)"):
        ad.mul(const(np.ones(3)), const(np.ones(2)))
    with pytest.raises(ad.ShapeError, match="dot"):
        ad.dot(const(np.ones(3)), const(np.ones(4)))


def test_nondeterministic_builder_rejected():
    th = Parameter("t", np.ones(2))
    rng = np.random.default_rng(0)
    with pytest.raises(ad.NonDeterministicLoss):
        finite_difference_check(lambda: ad.scale(ad.total(th), rng.random()), [th])


def test_step_range_enforced():
    th = Parameter("t", np.ones(2))
    with pytest.raises(ValueError, match="step"):
        finite_difference_check(lambda: ad.total(th), [th], step=1e-2)


def test_injected_bug_is_caught():
    # a wrong backward for tanh must fail the check
    th = Parameter("t", np.array([0.3, -0.7, 1.1]))

    def bad_tanh(a):
        y = np.tanh(a.value)
        n = ad.Node(y, (a,), "tanh")

        def bw(out):
            a.grad = (a.grad if a.grad is not None else 0) + out.grad * (1 - y)  # should be 1 - y**2

        n._backward = bw
        return n

    rep = finite_difference_check(lambda: ad.total(bad_tanh(th)), [th])
    assert not rep.passed


def test_log_clamps():
    x = Parameter("x", np.array([0.0, 1.0]))
    y = ad.log(x)
    assert y.value[0] == np.log(1e-12)
    backward(ad.total(y))
    assert x.grad[0] == 0.0 and x.grad[1] == 1.0


def test_parameter_grad_accumulates_across_backwards():
    x = Parameter("x", np.array([2.0]))
    backward(ad.total(ad.mul(x, x)))
    backward(ad.total(ad.mul(x, x)))
    assert x.grad[0] == 8.0
    x.zero_grad()
    assert x.grad[0] == 0.0


def test_broadcast_add_gradient():
    A = Parameter("A", np.ones((2, 3)))
    v = Parameter("v", np.ones(3))
    backward(ad.total(ad.add(A, v)))
    np.testing.assert_array_equal(v.grad, [2.0, 2.0, 2.0])


def test_each_primitive_fd():
    rng = np.random.default_rng(11)
    A = Parameter("A", rng.normal(size=(3, 4)))
    B = Parameter("B", rng.normal(size=(4, 2)))
    C = Parameter("C", rng.normal(size=(5, 4)))
    v = Parameter("v", rng.normal(size=4) + 0.1)
    u = Parameter("u", rng.normal(size=3))
    pos = Parameter("p", rng.uniform(0.5, 2.0, 4))

    def loss():
        terms = [
            ad.total(ad.tanh(ad.matmul(A, B))),
            ad.total(ad.matmul_t(C, A)),
            ad.dot(u, ad.matvec(A, ad.absolute(v))),
            ad.total(ad.rmatvec(A, u)),
            ad.dot(ad.softmax(v), const([1.0, -2.0, 0.5, 3.0])),
            ad.total(ad.log(pos)),
            ad.total(ad.one_minus(ad.sigmoid(ad.sub(v, pos)))),
            ad.total(ad.stack([v, pos, ad.scale(v, 2.0)])),
            ad.index(ad.column(B, 1), 2),
            ad.total(ad.clip(v, -0.5, 0.5)),
            ad.sumsq(ad.add_n([v, pos, v])),
        ]
        return ad.add(*terms)

    rep = finite_difference_check(loss, [A, B, C, v, u, pos])
    assert rep.passed, str(rep)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.integers(1, 8), elements=st.floats(-50, 50)), st.floats(-100, 100))
def test_softmax_properties(x, c):
    p = ad.softmax(const(x)).value
    assert abs(p.sum() - 1.0) <= 1e-12
    assert np.all(p > 0) and np.all(p <= 1)
    q = ad.softmax(const(x + c)).value
    np.testing.assert_allclose(p, q, rtol=0, atol=1e-12)


def _graph(rng_seed):
    rng = np.random.default_rng(rng_seed)
    W = Parameter("W", rng.normal(size=(6, 6)))
    x = const(rng.normal(size=6))
    h = x
    for _ in range(4):
        h = ad.tanh(ad.matvec(W, h))
    out = ad.dot(h, ad.softmax(h))
    backward(out)
    return out.value.copy(), W.grad.copy()


def test_bit_identical_rebuild():
    a, ga = _graph(5)
    b, gb = _graph(5)
    assert a.tobytes() == b.tobytes()
    assert ga.tobytes() == gb.tobytes()


@pytest.mark.skipif("cython" not in kernels.available(), reason="compiled kernels not built")
def test_backends_agree():
    try:
        kernels.use("python")
        a, ga = _graph(9)
        kernels.use("cython")
        b, gb = _graph(9)
    finally:
        kernels.use("auto")
    np.testing.assert_allclose(a, b, rtol=1e-13)
    np.testing.assert_allclose(ga, gb, rtol=1e-12, atol=1e-14)


@pytest.mark.parametrize("backend", ["python", "cython"])
def test_kernel_primitives(backend):
    if backend not in kernels.available():
        pytest.skip("compiled kernels not built")
    K = kernels.load_backend(backend)
    rng = np.random.default_rng(1)
    x = rng.normal(size=7) * 30
    np.testing.assert_allclose(K.sigmoid(x), 1 / (1 + np.exp(-x)), rtol=1e-14)
    np.testing.assert_allclose(K.tanh(x), np.tanh(x), rtol=1e-14)
    A = np.zeros((3, 7))
    u = rng.normal(size=3)
    K.ger_acc(A, u, x)
    np.testing.assert_allclose(A, np.outer(u, x), rtol=1e-14)
    out = np.zeros(7)
    K.gemv_t_acc(out, A, u)
    np.testing.assert_allclose(out, A.T @ u, rtol=1e-13)
    p = K.softmax(x)
    assert abs(p.sum() - 1) < 1e-12
