"""Kernel backend selection.

The compiled module is used when it imports; set ``TREEATTN_KERNELS=python``
to force the numpy fallback (the benchmark and the backend-parity tests do).
"""
import importlib
import os

_NAMES = (
    "sigmoid",
    "tanh",
    "sigmoid_grad_acc",
    "tanh_grad_acc",
    "mul_acc",
    "softmax",
    "softmax_grad_acc",
    "ger_acc",
    "gemv_t_acc",
)


def load_backend(name=None):
    """Return the kernel module for ``name`` ('cython', 'python' or None=auto)."""
    name = name or os.environ.get("TREEATTN_KERNELS", "auto")
    if name == "python":
        return importlib.import_module("treeattn._pykernels")
    try:
        return importlib.import_module("treeattn._ckernels")
    except ImportError:
        if name == "cython":
            raise
        return importlib.import_module("treeattn._pykernels")


def available():
    """Backend names that import in this build."""
    out = ["python"]
    try:
        importlib.import_module("treeattn._ckernels")
        out.append("cython")
    except ImportError:
        pass
    return out


_impl = load_backend()
BACKEND = _impl.BACKEND


def use(name):
    """Switch the process-wide backend; returns the previous backend name."""
    global _impl, BACKEND
    prev = BACKEND
    _impl = load_backend(None if name == "auto" else name)
    BACKEND = _impl.BACKEND
    g = globals()
    for n in _NAMES:
        g[n] = getattr(_impl, n)
    return prev


for _n in _NAMES:
    globals()[_n] = getattr(_impl, _n)
del _n
