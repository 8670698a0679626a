"""Dense float64 tensors with reverse-mode automatic differentiation.

Every operation returns a new :class:`Tensor` carrying a vector-Jacobian
closure; calling ``backward()`` on a scalar result walks the recorded graph
in reverse topological order and accumulates ``.grad`` on every tensor that
requires gradients.  The op set is deliberately small: exactly what a
patch-attention classifier needs (matmul, 1D/2D cross-correlation, softmax,
sigmoid/relu, reductions, concat, gather, dropout) plus a finite-difference
checker.

Numerical policy: all values are float64, and any operation that produces a
NaN/Inf from finite inputs raises ``FloatingPointError`` instead of letting
the poison propagate.
"""

from __future__ import annotations

from collections.abc import Callable, Sequence

import numpy as np

Array = np.ndarray

_AxesArg = int | Sequence[int] | None


def _as_float64(data) -> Array:
    return np.asarray(data, dtype=np.float64)


class Tensor:
    """A float64 array plus an optional gradient of identical shape.

    ``requires_grad=True`` marks a leaf whose gradient should be populated by
    ``backward()``; tensors produced by operations inherit the flag from their
    inputs.  Graphs are single-use: rerunning ``backward()`` on the same root
    without rebuilding the graph is an error.
    """

    __slots__ = ("data", "grad", "requires_grad", "_prev", "_vjp", "_backward_done")

    def __init__(self, data, requires_grad: bool = False):
        arr = _as_float64(data)
        if not np.all(np.isfinite(arr)):
            raise ValueError("tensor values must be finite")
        self.data = arr
        self.grad: Array | None = None
        self.requires_grad = bool(requires_grad)
        self._prev: tuple[Tensor, ...] = ()
        self._vjp: Callable[[Array], None] | None = None
        self._backward_done = False

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError("item() requires a single-element tensor")
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # -- operator sugar -------------------------------------------------

    def __add__(self, other):
        return add(self, _lift(other))

    def __radd__(self, other):
        return add(_lift(other), self)

    def __sub__(self, other):
        return sub(self, _lift(other))

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        return mul(self, _lift(other))

    def __rmul__(self, other):
        return mul(_lift(other), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, _lift(other))

    def __truediv__(self, other):
        if isinstance(other, (int, float)):
            return mul(self, _lift(1.0 / other))
        return mul(self, power(other, -1.0))

    def backward(self) -> None:
        """Populate ``.grad`` on every reachable tensor requiring gradients.

        The root must be a scalar produced by recorded operations.  Each node
        is visited exactly once, in reverse topological order.
        """
        if self.data.size != 1:
            raise ValueError("backward requires a scalar root")
        if self._backward_done:
            raise RuntimeError("backward already ran for this graph; rebuild it first")
        if not self.requires_grad:
            raise ValueError("root does not depend on any tensor requiring gradients")

        # Iterative postorder; nodes are marked visited at expansion (not
        # discovery) so shared subgraphs still topo-sort correctly.
        order: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._prev:
                if id(parent) not in visited:
                    stack.append((parent, False))

        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._vjp is not None:
                node._vjp(node.grad)
        for node in order:
            if node.grad is not None and not np.all(np.isfinite(node.grad)):
                raise FloatingPointError("backward produced non-finite gradients")
        self._backward_done = True


def _lift(value) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=np.float64))


def _result(data: Array, parents: tuple[Tensor, ...], vjp: Callable[[Array], None]) -> Tensor:
    if not np.all(np.isfinite(data)):
        raise FloatingPointError("operation produced non-finite values")
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out._backward_done = False
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._prev = parents
        out._vjp = vjp
    else:
        out.requires_grad = False
        out._prev = ()
        out._vjp = None
    return out


def _accum(t: Tensor, g: Array) -> None:
    t.grad = g if t.grad is None else t.grad + g


def _sum_to_shape(g: Array, shape: tuple[int, ...]) -> Array:
    """Reduce a broadcast gradient back to the original operand shape."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _norm_axes(axes: _AxesArg, ndim: int) -> tuple[int, ...]:
    if axes is None:
        return tuple(range(ndim))
    if isinstance(axes, int):
        axes = (axes,)
    out = []
    for ax in axes:
        if ax < 0:
            ax += ndim
        if not 0 <= ax < ndim:
            raise ValueError(f"axis {ax} out of range for {ndim}-d tensor")
        out.append(ax)
    if len(set(out)) != len(out):
        raise ValueError("duplicate reduction axes")
    return tuple(sorted(out))


def create(shape: Sequence[int], values: Sequence[float]) -> Tensor:
    """Build a tensor from a flat row-major value list."""
    shape = tuple(int(s) for s in shape)
    if any(s <= 0 for s in shape):
        raise ValueError(f"shape extents must be positive, got {shape}")
    expected = int(np.prod(shape)) if shape else 1
    values = list(values)
    if len(values) != expected:
        raise ValueError(f"shape {shape} needs {expected} values, got {len(values)}")
    return Tensor(np.array(values, dtype=np.float64).reshape(shape))


def zero_grad(tensors) -> None:
    """Clear gradients on an iterable (or mapping) of tensors."""
    if hasattr(tensors, "values"):
        tensors = tensors.values()
    for t in tensors:
        t.grad = None


# -- arithmetic ----------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    data = a.data + b.data

    def vjp(g: Array) -> None:
        if a.requires_grad:
            _accum(a, _sum_to_shape(g, a.data.shape))
        if b.requires_grad:
            _accum(b, _sum_to_shape(g, b.data.shape))

    return _result(data, (a, b), vjp)


def sub(a: Tensor, b: Tensor) -> Tensor:
    data = a.data - b.data

    def vjp(g: Array) -> None:
        if a.requires_grad:
            _accum(a, _sum_to_shape(g, a.data.shape))
        if b.requires_grad:
            _accum(b, _sum_to_shape(-g, b.data.shape))

    return _result(data, (a, b), vjp)


def mul(a: Tensor, b: Tensor) -> Tensor:
    data = a.data * b.data

    def vjp(g: Array) -> None:
        if a.requires_grad:
            _accum(a, _sum_to_shape(g * b.data, a.data.shape))
        if b.requires_grad:
            _accum(b, _sum_to_shape(g * a.data, b.data.shape))

    return _result(data, (a, b), vjp)


def neg(a: Tensor) -> Tensor:
    def vjp(g: Array) -> None:
        if a.requires_grad:
            _accum(a, -g)

    return _result(-a.data, (a,), vjp)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product; batch dimensions broadcast numpy-style.

    Gradients follow dA = dC @ B^T and dB = A^T @ dC, reduced over broadcast
    batch axes.
    """
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul operands must have at least 2 dimensions")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ValueError(f"matmul inner dimensions disagree: {a.shape} @ {b.shape}")
    data = np.matmul(a.data, b.data)

    def vjp(g: Array) -> None:
        if a.requires_grad:
            ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
            _accum(a, _sum_to_shape(ga, a.data.shape))
        if b.requires_grad:
            gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
            _accum(b, _sum_to_shape(gb, b.data.shape))

    return _result(data, (a, b), vjp)


def transpose_last2(a: Tensor) -> Tensor:
    if a.ndim < 2:
        raise ValueError("transpose_last2 needs at least 2 dimensions")

    def vjp(g: Array) -> None:
        if a.requires_grad:
            _accum(a, np.swapaxes(g, -1, -2))

    return _result(np.swapaxes(a.data, -1, -2), (a,), vjp)


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(shape)
    data = a.data.reshape(shape)

    def vjp(g: Array) -> None:
        if a.requires_grad:
            _accum(a, g.reshape(a.data.shape))

    return _result(data, (a,), vjp)


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    if not tensors:
        raise ValueError("concat needs at least one tensor")
    ndim = tensors[0].ndim
    if axis < 0:
        axis += ndim
    if not 0 <= axis < ndim:
        raise ValueError(f"invalid concat axis {axis}")
    data = np.concatenate([t.data for t in tensors], axis=axis)
    offsets = np.cumsum([t.data.shape[axis] for t in tensors])[:-1]

    def vjp(g: Array) -> None:
        pieces = np.split(g, offsets, axis=axis)
        for t, piece in zip(tensors, pieces):
            if t.requires_grad:
                _accum(t, piece)

    return _result(data, tuple(tensors), vjp)


def take_last(a: Tensor, idx: Array) -> Tensor:
    """Fancy-index the last axis; output shape is ``a.shape[:-1] + idx.shape``."""
    idx = np.asarray(idx, dtype=np.int64)
    length = a.data.shape[-1]
    if idx.size and (idx.min() < 0 or idx.max() >= length):
        raise ValueError("gather index out of range")
    data = a.data[..., idx]

    def vjp(g: Array) -> None:
        if a.requires_grad:
            ga = np.zeros_like(a.data)
            flat = ga.reshape(-1, length)
            rows = flat.shape[0]
            gb = g.reshape(rows, idx.size)
            np.add.at(flat, (np.arange(rows)[:, None], idx.reshape(-1)[None, :]), gb)
            _accum(a, ga)

    return _result(data, (a,), vjp)


# -- reductions ----------------------------------------------------------


def _spread(g: Array, shape: tuple[int, ...], axes: tuple[int, ...], keepdims: bool) -> Array:
    if not keepdims:
        for ax in axes:
            g = np.expand_dims(g, ax)
    return np.broadcast_to(g, shape)


def tsum(a: Tensor, axes: _AxesArg = None, keepdims: bool = False) -> Tensor:
    axes = _norm_axes(axes, a.ndim)
    data = a.data.sum(axis=axes, keepdims=keepdims)

    def vjp(g: Array) -> None:
        if a.requires_grad:
            _accum(a, _spread(g, a.data.shape, axes, keepdims).copy())

    return _result(data, (a,), vjp)


def mean(a: Tensor, axes: _AxesArg = None, keepdims: bool = False) -> Tensor:
    axes = _norm_axes(axes, a.ndim)
    count = int(np.prod([a.data.shape[ax] for ax in axes])) if axes else 1
    data = a.data.mean(axis=axes, keepdims=keepdims)

    def vjp(g: Array) -> None:
        if a.requires_grad:
            _accum(a, _spread(g, a.data.shape, axes, keepdims) / count)

    return _result(data, (a,), vjp)


# -- nonlinearities -------------------------------------------------------


def sigmoid(a: Tensor) -> Tensor:
    # exp(-|x|) never overflows, so both branches stay finite
    t = np.exp(-np.abs(a.data))
    data = np.where(a.data >= 0, 1.0 / (1.0 + t), t / (1.0 + t))

    def vjp(g: Array) -> None:
        if a.requires_grad:
            _accum(a, g * data * (1.0 - data))

    return _result(data, (a,), vjp)


def relu(a: Tensor) -> Tensor:
    data = np.maximum(a.data, 0.0)

    def vjp(g: Array) -> None:
        if a.requires_grad:
            _accum(a, g * (a.data > 0))

    return _result(data, (a,), vjp)


def softmax(a: Tensor) -> Tensor:
    """Softmax over the last axis, computed with max-subtraction."""
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=-1, keepdims=True)

    def vjp(g: Array) -> None:
        if a.requires_grad:
            inner = (g * data).sum(axis=-1, keepdims=True)
            _accum(a, data * (g - inner))

    return _result(data, (a,), vjp)


def log(a: Tensor) -> Tensor:
    with np.errstate(divide="ignore", invalid="ignore"):
        data = np.log(a.data)

    def vjp(g: Array) -> None:
        if a.requires_grad:
            _accum(a, g / a.data)

    return _result(data, (a,), vjp)


def exp(a: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        data = np.exp(a.data)

    def vjp(g: Array) -> None:
        if a.requires_grad:
            _accum(a, g * data)

    return _result(data, (a,), vjp)


def power(a: Tensor, exponent: float) -> Tensor:
    exponent = float(exponent)
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        data = np.power(a.data, exponent)

    def vjp(g: Array) -> None:
        if a.requires_grad:
            with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
                local = exponent * np.power(a.data, exponent - 1.0)
            _accum(a, g * local)

    return _result(data, (a,), vjp)


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp values to [lo, hi]; gradient passes through the interior."""
    if lo >= hi:
        raise ValueError("clip needs lo < hi")
    data = np.clip(a.data, lo, hi)

    def vjp(g: Array) -> None:
        if a.requires_grad:
            _accum(a, g * ((a.data >= lo) & (a.data <= hi)))

    return _result(data, (a,), vjp)


def dropout(a: Tensor, rate: float, training: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: survivors scale by 1/(1-rate); identity in eval mode."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return a
    if rng is None:
        raise ValueError("training-mode dropout needs an explicit rng")
    keep = (rng.random(a.data.shape) >= rate) / (1.0 - rate)
    data = a.data * keep

    def vjp(g: Array) -> None:
        if a.requires_grad:
            _accum(a, g * keep)

    return _result(data, (a,), vjp)


# -- convolutions ----------------------------------------------------------


def conv1d(a: Tensor, weight: Tensor, bias: Tensor | None = None, padding: str = "same") -> Tensor:
    """Cross-correlate the last axis with a bank of kernels.

    ``a`` is (..., L), ``weight`` is (features, k), ``bias`` is (features,).
    Returns (..., L_out, features) where L_out = L for "same" padding and
    L - k + 1 for "valid".
    """
    if weight.ndim != 2:
        raise ValueError("conv1d weight must be (features, k)")
    n_feat, k = weight.data.shape
    length = a.data.shape[-1]
    if k < 1:
        raise ValueError("kernel must have at least one tap")
    if padding == "same":
        left, right = (k - 1) // 2, k // 2
    elif padding == "valid":
        left = right = 0
    else:
        raise ValueError(f"unknown padding mode {padding!r}")
    out_len = length + left + right - k + 1
    if out_len < 1:
        raise ValueError(f"kernel of {k} taps exceeds padded input of length {length + left + right}")
    if bias is not None and bias.data.shape != (n_feat,):
        raise ValueError("bias shape must match the feature count")

    pad_spec = [(0, 0)] * (a.ndim - 1) + [(left, right)]
    xp = np.pad(a.data, pad_spec)
    out = np.zeros(a.data.shape[:-1] + (out_len, n_feat))
    for j in range(k):
        out += xp[..., j : j + out_len, None] * weight.data[:, j]
    if bias is not None:
        out = out + bias.data

    parents = (a, weight) if bias is None else (a, weight, bias)

    def vjp(g: Array) -> None:
        if bias is not None and bias.requires_grad:
            _accum(bias, g.reshape(-1, n_feat).sum(axis=0))
        if weight.requires_grad:
            gw = np.zeros_like(weight.data)
            g2 = g.reshape(-1, n_feat)
            for j in range(k):
                gw[:, j] = g2.T @ xp[..., j : j + out_len].reshape(-1)
            _accum(weight, gw)
        if a.requires_grad:
            gxp = np.zeros_like(xp)
            for j in range(k):
                gxp[..., j : j + out_len] += g @ weight.data[:, j]
            ga = gxp[..., left : left + length] if (left or right) else gxp
            _accum(a, ga)

    return _result(out, parents, vjp)


def conv2d(a: Tensor, kernel: Tensor) -> Tensor:
    """Cross-correlate a (..., H, W, D) grid with one shared (kh, kw) kernel.

    The feature axis D passes through untouched; zero "same" padding keeps the
    spatial extents, which is why both kernel extents must be odd.
    """
    if a.ndim < 3:
        raise ValueError("conv2d input must be (..., H, W, D)")
    if kernel.ndim != 2:
        raise ValueError("conv2d kernel must be 2-dimensional")
    kh, kw = kernel.data.shape
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValueError(f"conv2d kernel extents must be odd, got {kh}x{kw}")
    h, w = a.data.shape[-3], a.data.shape[-2]
    ph, pw = kh // 2, kw // 2

    pad_spec = [(0, 0)] * (a.ndim - 3) + [(ph, ph), (pw, pw), (0, 0)]
    xp = np.pad(a.data, pad_spec)
    out = np.zeros_like(a.data)
    for i in range(kh):
        for j in range(kw):
            out += kernel.data[i, j] * xp[..., i : i + h, j : j + w, :]

    def vjp(g: Array) -> None:
        if kernel.requires_grad:
            gk = np.zeros_like(kernel.data)
            for i in range(kh):
                for j in range(kw):
                    gk[i, j] = np.sum(g * xp[..., i : i + h, j : j + w, :])
            _accum(kernel, gk)
        if a.requires_grad:
            gxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    gxp[..., i : i + h, j : j + w, :] += kernel.data[i, j] * g
            _accum(a, gxp[..., ph : ph + h, pw : pw + w, :])

    return _result(out, (a, kernel), vjp)


# -- gradient checking ------------------------------------------------------


def grad_check(f: Callable[[Tensor], Tensor], x: Tensor, epsilon: float = 1e-5) -> float:
    """Compare analytic gradients of ``f`` at ``x`` against central differences.

    Returns max over coordinates of |analytic - numeric| / max(1, |analytic|).
    ``f`` must be deterministic (checked by evaluating it twice) and return a
    scalar tensor.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    first = f(Tensor(x.data.copy()))
    second = f(Tensor(x.data.copy()))
    if first.data.size != 1:
        raise ValueError("grad_check needs a scalar-valued function")
    if first.data.tobytes() != second.data.tobytes():
        raise ValueError("f is not deterministic; disable dropout before checking")

    leaf = Tensor(x.data.copy(), requires_grad=True)
    out = f(leaf)
    if out.requires_grad:
        out.backward()
    analytic = leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data)

    flat = x.data.reshape(-1)
    numeric = np.zeros(flat.size)
    for i in range(flat.size):
        bumped = flat.copy()
        bumped[i] += epsilon
        hi = f(Tensor(bumped.reshape(x.data.shape))).item()
        bumped[i] -= 2 * epsilon
        lo = f(Tensor(bumped.reshape(x.data.shape))).item()
        numeric[i] = (hi - lo) / (2 * epsilon)

    a = analytic.reshape(-1)
    rel = np.abs(a - numeric) / np.maximum(1.0, np.abs(a))
    return float(rel.max()) if rel.size else 0.0
