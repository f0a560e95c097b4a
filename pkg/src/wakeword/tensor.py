"""Reverse-mode automatic differentiation over numpy buffers.

A Tensor wraps an ndarray; each op computes its forward value eagerly and,
when gradients are being tracked, records a closure that pushes the output
gradient back to its parents. `backward` on a scalar loss walks the recorded
graph in reverse topological order and accumulates dLoss/dParam into every
tensor with `requires_grad`.

Training runs in float32; gradient-check tests build float64 tensors, where
central finite differences are trustworthy.
"""

from __future__ import annotations

import contextlib

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class ShapeError(ValueError):
    """Operands with incompatible shapes."""


_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording (inference mode): ops return plain values."""
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


class Tensor:
    """An ndarray plus optional gradient and autodiff bookkeeping."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    def __add__(self, other) -> "Tensor":
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other) -> "Tensor":
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self) -> "Tensor":
        return mul(self, -1.0)

    def __sub__(self, other) -> "Tensor":
        return add(self, -_as_tensor(other))

    def __matmul__(self, other) -> "Tensor":
        return matmul(self, other)

    def sum(self) -> "Tensor":
        return tensor_sum(self)

    def relu(self) -> "Tensor":
        return relu(self)

    def backward(self) -> None:
        """Accumulate dSelf/dParent into grads across the recorded graph."""
        if self.data.size != 1:
            raise ValueError(f"backward requires a scalar loss, got shape {self.data.shape}")
        order: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, children_done = stack.pop()
            if children_done:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None:
                node._backward()


def _as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _make(data: np.ndarray, parents: tuple[Tensor, ...]) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
    return out


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a broadcasted gradient back to the operand's shape."""
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _pair(value) -> tuple[int, int]:
    if isinstance(value, (tuple, list)):
        a, b = value
        return int(a), int(b)
    return int(value), int(value)


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        data = a.data + b.data
    except ValueError as exc:
        raise ShapeError(f"add: cannot broadcast {a.data.shape} with {b.data.shape}") from exc
    out = _make(data, (a, b))
    if out.requires_grad:

        def backward():
            g = out.grad
            _accum(a, _unbroadcast(g, a.data.shape))
            _accum(b, _unbroadcast(g, b.data.shape))

        out._backward = backward
    return out


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        data = a.data * b.data
    except ValueError as exc:
        raise ShapeError(f"mul: cannot broadcast {a.data.shape} with {b.data.shape}") from exc
    out = _make(data, (a, b))
    if out.requires_grad:

        def backward():
            g = out.grad
            _accum(a, _unbroadcast(g * b.data, a.data.shape))
            _accum(b, _unbroadcast(g * a.data, b.data.shape))

        out._backward = backward
    return out


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.data.shape} and {b.data.shape}")
    out = _make(a.data @ b.data, (a, b))
    if out.requires_grad:

        def backward():
            g = out.grad
            _accum(a, g @ b.data.T)
            _accum(b, a.data.T @ g)

        out._backward = backward
    return out


def tensor_sum(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    out = _make(np.asarray(x.data.sum()), (x,))
    if out.requires_grad:

        def backward():
            _accum(x, np.broadcast_to(out.grad, x.data.shape))

        out._backward = backward
    return out


def relu(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    out = _make(np.maximum(x.data, 0), (x,))
    if out.requires_grad:

        def backward():
            _accum(x, out.grad * (x.data > 0))

        out._backward = backward
    return out


def _col_view(padded: np.ndarray, kh: int, kw: int, sh: int, sw: int) -> np.ndarray:
    """im2col: (N, C, Hp, Wp) -> (N*Ho*Wo, C*kh*kw) patch matrix."""
    windows = sliding_window_view(padded, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw]
    n, c, ho, wo = windows.shape[:4]
    return windows.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * kh * kw)


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride=1, padding=0) -> Tensor:
    """Batched 2-D cross-correlation with zero padding: (N,C,H,W) * (F,C,kh,kw)."""
    x, weight = _as_tensor(x), _as_tensor(weight)
    if x.data.ndim != 4 or weight.data.ndim != 4:
        raise ShapeError(f"conv2d: need 4-D input and weight, got {x.data.shape} and {weight.data.shape}")
    n, c, h, w = x.data.shape
    f, c_w, kh, kw = weight.data.shape
    if c != c_w:
        raise ShapeError(f"conv2d: input channels {c} != weight channels {c_w} "
                         f"(input {x.data.shape}, weight {weight.data.shape})")
    if bias is not None and bias.data.shape != (f,):
        raise ShapeError(f"conv2d: bias shape {bias.data.shape} != ({f},)")
    sh, sw = _pair(stride)
    ph, pw = _pair(padding)
    hp, wp = h + 2 * ph, w + 2 * pw
    if kh > hp or kw > wp:
        raise ShapeError(f"conv2d: kernel {kh}x{kw} larger than padded input {hp}x{wp}")
    ho = (hp - kh) // sh + 1
    wo = (wp - kw) // sw + 1

    padded = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    col = _col_view(padded, kh, kw, sh, sw)
    wmat = weight.data.reshape(f, c * kh * kw)
    data = (col @ wmat.T).reshape(n, ho, wo, f).transpose(0, 3, 1, 2)
    if bias is not None:
        data = data + bias.data.reshape(1, f, 1, 1)

    parents = (x, weight) if bias is None else (x, weight, bias)
    out = _make(data, parents)
    if out.requires_grad:

        def backward():
            g = out.grad
            gcol = g.transpose(0, 2, 3, 1).reshape(n * ho * wo, f)
            if weight.requires_grad:
                # Patches are recomputed rather than kept alive with the graph.
                col_again = _col_view(np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw))), kh, kw, sh, sw)
                _accum(weight, (gcol.T @ col_again).reshape(weight.data.shape))
            if bias is not None:
                _accum(bias, g.sum(axis=(0, 2, 3)))
            if x.requires_grad:
                dcol = (gcol @ wmat).reshape(n, ho, wo, c, kh, kw)
                dpadded = np.zeros((n, c, hp, wp), dtype=g.dtype)
                for i in range(kh):
                    for j in range(kw):
                        dpadded[:, :, i : i + sh * ho : sh, j : j + sw * wo : sw] += dcol[
                            :, :, :, :, i, j
                        ].transpose(0, 3, 1, 2)
                _accum(x, dpadded[:, :, ph : ph + h, pw : pw + w])

        out._backward = backward
    return out


def batchnorm2d(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """Per-channel batch normalization over (N, H, W).

    Training mode normalizes with biased batch statistics and updates the
    running buffers in place (new = (1-momentum)*old + momentum*batch); eval
    mode is a fixed affine map through the running buffers.
    """
    x = _as_tensor(x)
    if x.data.ndim != 4:
        raise ShapeError(f"batchnorm2d: need 4-D input, got {x.data.shape}")
    n, c, h, w = x.data.shape
    for name, t in (("gamma", gamma.data), ("beta", beta.data),
                    ("running_mean", running_mean), ("running_var", running_var)):
        if t.shape != (c,):
            raise ShapeError(f"batchnorm2d: {name} shape {t.shape} != ({c},) for input {x.data.shape}")
    axes = (0, 2, 3)
    count = n * h * w
    if training:
        if count < 2:
            raise ShapeError(f"batchnorm2d: needs >=2 values per channel in training mode, got {count}")
        mean = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        running_mean[:] = (1.0 - momentum) * running_mean + momentum * mean
        running_var[:] = (1.0 - momentum) * running_var + momentum * var
    else:
        mean = running_mean.astype(x.data.dtype, copy=False)
        var = running_var.astype(x.data.dtype, copy=False)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mean.reshape(1, c, 1, 1)) * inv.reshape(1, c, 1, 1)
    data = gamma.data.reshape(1, c, 1, 1) * xhat + beta.data.reshape(1, c, 1, 1)
    out = _make(data, (x, gamma, beta))
    if out.requires_grad:

        def backward():
            g = out.grad
            _accum(gamma, (g * xhat).sum(axis=axes))
            _accum(beta, g.sum(axis=axes))
            if x.requires_grad:
                dxhat = g * gamma.data.reshape(1, c, 1, 1)
                if training:
                    s1 = dxhat.sum(axis=axes).reshape(1, c, 1, 1)
                    s2 = (dxhat * xhat).sum(axis=axes).reshape(1, c, 1, 1)
                    dx = inv.reshape(1, c, 1, 1) / count * (count * dxhat - s1 - xhat * s2)
                else:
                    dx = dxhat * inv.reshape(1, c, 1, 1)
                _accum(x, dx)

        out._backward = backward
    return out


def avg_pool2d(x: Tensor, pool) -> Tensor:
    """Non-overlapping average pooling; trailing rows/cols that do not fill a
    window are dropped (floor semantics)."""
    x = _as_tensor(x)
    if x.data.ndim != 4:
        raise ShapeError(f"avg_pool2d: need 4-D input, got {x.data.shape}")
    ph, pw = _pair(pool)
    n, c, h, w = x.data.shape
    ho, wo = h // ph, w // pw
    if ho == 0 or wo == 0:
        raise ShapeError(f"avg_pool2d: input {h}x{w} smaller than pool window {ph}x{pw}")
    cropped = x.data[:, :, : ho * ph, : wo * pw]
    data = cropped.reshape(n, c, ho, ph, wo, pw).mean(axis=(3, 5))
    out = _make(data, (x,))
    if out.requires_grad:

        def backward():
            g6 = out.grad.reshape(n, c, ho, 1, wo, 1) / (ph * pw)
            core = np.broadcast_to(g6, (n, c, ho, ph, wo, pw)).reshape(n, c, ho * ph, wo * pw)
            dx = np.zeros_like(x.data)
            dx[:, :, : ho * ph, : wo * pw] = core
            _accum(x, dx)

        out._backward = backward
    return out


def global_avg_pool(x: Tensor) -> Tensor:
    """Mean over the spatial axes: (N, C, H, W) -> (N, C)."""
    x = _as_tensor(x)
    if x.data.ndim != 4:
        raise ShapeError(f"global_avg_pool: need 4-D input, got {x.data.shape}")
    n, c, h, w = x.data.shape
    out = _make(x.data.mean(axis=(2, 3)), (x,))
    if out.requires_grad:

        def backward():
            _accum(x, np.broadcast_to(out.grad[:, :, None, None] / (h * w), x.data.shape))

        out._backward = backward
    return out


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Affine map: (N, in) @ (out, in)^T + (out,)."""
    x, weight = _as_tensor(x), _as_tensor(weight)
    if x.data.ndim != 2 or weight.data.ndim != 2 or x.data.shape[1] != weight.data.shape[1]:
        raise ShapeError(f"linear: incompatible input {x.data.shape} and weight {weight.data.shape}")
    if bias is not None and bias.data.shape != (weight.data.shape[0],):
        raise ShapeError(f"linear: bias shape {bias.data.shape} != ({weight.data.shape[0]},)")
    data = x.data @ weight.data.T
    if bias is not None:
        data = data + bias.data
    parents = (x, weight) if bias is None else (x, weight, bias)
    out = _make(data, parents)
    if out.requires_grad:

        def backward():
            g = out.grad
            _accum(x, g @ weight.data)
            _accum(weight, g.T @ x.data)
            if bias is not None:
                _accum(bias, g.sum(axis=0))

        out._backward = backward
    return out


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Numerically stable log softmax along `axis`."""
    x = _as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = _make(shifted - log_norm, (x,))
    if out.requires_grad:

        def backward():
            g = out.grad
            _accum(x, g - np.exp(out.data) * g.sum(axis=axis, keepdims=True))

        out._backward = backward
    return out


def nll_loss(log_probs: Tensor, targets: np.ndarray) -> Tensor:
    """Mean negative log likelihood of integer targets under (N, K) log-probs."""
    log_probs = _as_tensor(log_probs)
    if log_probs.data.ndim != 2:
        raise ShapeError(f"nll_loss: need (N, K) log-probs, got {log_probs.data.shape}")
    targets = np.asarray(targets)
    n, k = log_probs.data.shape
    if targets.shape != (n,):
        raise ShapeError(f"nll_loss: targets shape {targets.shape} != ({n},)")
    if targets.min() < 0 or targets.max() >= k:
        raise ValueError(f"nll_loss: target outside [0, {k})")
    rows = np.arange(n)
    out = _make(np.asarray(-log_probs.data[rows, targets].mean()), (log_probs,))
    if out.requires_grad:

        def backward():
            d = np.zeros_like(log_probs.data)
            d[rows, targets] = -1.0 / n
            _accum(log_probs, out.grad * d)

        out._backward = backward
    return out
