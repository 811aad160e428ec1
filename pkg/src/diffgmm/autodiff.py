"""Minimal reverse-mode differentiation over float64 numpy arrays.

A Tensor wraps an ndarray plus the closures needed to push gradients to its
parents.  The tape is implicit: each op records its parents, so a graph is
rebuilt on every forward pass (define-by-run) and discarded after backward().

Core primitives: conv1d, upsample_linear, linear, relu, softmax, exp, tanh,
elementwise add/sub/mul, sum, mean, square, abs.  A handful of helpers
(log, div, concat_channels, slice_first_axis, axis reductions) exist so the
mixture negative-log-likelihood loss and U-Net skip wiring can be composed
without new kernels.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError, NumericError, ShapeError

_DEBUG_FINITE = False


def set_debug_finite(enabled: bool) -> None:
    """When on, every op output is checked for NaN/Inf (slow; tests only)."""
    global _DEBUG_FINITE
    _DEBUG_FINITE = bool(enabled)


class Tensor:
    """A node on the tape: values plus vector-Jacobian products to parents."""

    __slots__ = ("values", "_parents", "_vjps", "name")

    def __init__(self, values, parents=(), vjps=(), name=None):
        self.values = np.asarray(values, dtype=np.float64)
        self._parents = parents
        self._vjps = vjps
        self.name = name
        if _DEBUG_FINITE and not np.all(np.isfinite(self.values)):
            raise NumericError(f"non-finite values in tensor {name or '<anon>'}")

    @property
    def shape(self):
        return self.values.shape

    def __repr__(self):
        return f"Tensor(shape={self.values.shape}, name={self.name!r})"

    # arithmetic sugar; scalars and ndarrays are lifted to constants
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

    def __truediv__(self, other):
        return div(self, _lift(other))

    def __rtruediv__(self, other):
        return div(_lift(other), self)

    def __neg__(self):
        return mul(self, _lift(-1.0))


def parameter(values, name=None) -> Tensor:
    return Tensor(np.array(values, dtype=np.float64), name=name)


def constant(values) -> Tensor:
    return Tensor(values)


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum grad down to `shape`, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# elementwise / reduction primitives


def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.values + b.values
    return Tensor(out, (a, b), (
        lambda g: _unbroadcast(g, a.values.shape),
        lambda g: _unbroadcast(g, b.values.shape),
    ))


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = a.values - b.values
    return Tensor(out, (a, b), (
        lambda g: _unbroadcast(g, a.values.shape),
        lambda g: _unbroadcast(-g, b.values.shape),
    ))


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = a.values * b.values
    return Tensor(out, (a, b), (
        lambda g: _unbroadcast(g * b.values, a.values.shape),
        lambda g: _unbroadcast(g * a.values, b.values.shape),
    ))


def div(a: Tensor, b: Tensor) -> Tensor:
    out = a.values / b.values
    return Tensor(out, (a, b), (
        lambda g: _unbroadcast(g / b.values, a.values.shape),
        lambda g: _unbroadcast(-g * a.values / (b.values * b.values), b.values.shape),
    ))


def relu(x: Tensor) -> Tensor:
    mask = x.values > 0
    return Tensor(np.where(mask, x.values, 0.0), (x,), (lambda g: g * mask,))


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.values)
    return Tensor(out, (x,), (lambda g: g * out,))


def log(x: Tensor) -> Tensor:
    return Tensor(np.log(x.values), (x,), (lambda g: g / x.values,))


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.values)
    return Tensor(out, (x,), (lambda g: g * (1.0 - out * out),))


def square(x: Tensor) -> Tensor:
    return Tensor(x.values * x.values, (x,), (lambda g: g * 2.0 * x.values,))


def absolute(x: Tensor) -> Tensor:
    return Tensor(np.abs(x.values), (x,), (lambda g: g * np.sign(x.values),))


def sum_all(x: Tensor) -> Tensor:
    return Tensor(x.values.sum(), (x,), (lambda g: np.broadcast_to(g, x.values.shape).copy(),))


def mean_all(x: Tensor) -> Tensor:
    n = x.values.size
    return Tensor(x.values.mean(), (x,), (
        lambda g: np.broadcast_to(g / n, x.values.shape).copy(),
    ))


def sum_axis(x: Tensor, axis: int, keepdims: bool = False) -> Tensor:
    out = x.values.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, x.values.shape).copy()

    return Tensor(out, (x,), (vjp,))


def mean_axis(x: Tensor, axis: int, keepdims: bool = False) -> Tensor:
    n = x.values.shape[axis]
    out = x.values.mean(axis=axis, keepdims=keepdims)

    def vjp(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g / n, x.values.shape).copy()

    return Tensor(out, (x,), (vjp,))


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.values - x.values.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        inner = (g * out).sum(axis=axis, keepdims=True)
        return out * (g - inner)

    return Tensor(out, (x,), (vjp,))


# ---------------------------------------------------------------------------
# structural primitives


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    if a.values.ndim != b.values.ndim:
        raise ShapeError("concat operands must have equal rank")
    na = a.values.shape[0]
    out = np.concatenate([a.values, b.values], axis=0)
    return Tensor(out, (a, b), (
        lambda g: g[:na],
        lambda g: g[na:],
    ))


def slice_first_axis(x: Tensor, start: int, stop: int) -> Tensor:
    out = x.values[start:stop]

    def vjp(g):
        full = np.zeros_like(x.values)
        full[start:stop] = g
        return full

    return Tensor(out, (x,), (vjp,))


def upsample_linear(x: Tensor, factor: int) -> Tensor:
    """Stretch (c, L) to (c, L*factor) by linear interpolation.

    Output j sits at input position j/factor; the last input sample is
    replicated past the end.
    """
    if factor < 1:
        raise ShapeError(f"upsample factor must be >= 1, got {factor}")
    c, n = x.values.shape
    if n < 1:
        raise ShapeError("upsample requires at least one input sample")
    if factor == 1:
        return Tensor(x.values.copy(), (x,), (lambda g: g,))
    j = np.arange(n * factor)
    idx0 = j // factor
    idx1 = np.minimum(idx0 + 1, n - 1)
    w1 = (j % factor) / factor
    w0 = 1.0 - w1
    out = x.values[:, idx0] * w0 + x.values[:, idx1] * w1

    def vjp(g):
        dx = np.zeros_like(x.values)
        np.add.at(dx, (slice(None), idx0), g * w0)
        np.add.at(dx, (slice(None), idx1), g * w1)
        return dx

    return Tensor(out, (x,), (vjp,))


def conv1d(x: Tensor, w: Tensor, b: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlate (c_in, L) with (c_out, c_in, k) weights plus bias.

    L_out = floor((L + 2*padding - k) / stride) + 1.
    """
    if x.values.ndim != 2 or w.values.ndim != 3 or b.values.ndim != 1:
        raise ShapeError("conv1d expects x(c_in,L), w(c_out,c_in,k), b(c_out)")
    c_in, n = x.values.shape
    c_out, c_in_w, k = w.values.shape
    if c_in_w != c_in:
        raise ShapeError(f"conv1d channel mismatch: input {c_in}, weights {c_in_w}")
    if b.values.shape[0] != c_out:
        raise ShapeError("conv1d bias length must equal c_out")
    if stride < 1 or padding < 0:
        raise ShapeError("conv1d needs stride >= 1 and padding >= 0")
    if k > n + 2 * padding:
        raise ShapeError(f"kernel {k} exceeds padded length {n + 2 * padding}")

    xp = np.pad(x.values, ((0, 0), (padding, padding))) if padding else x.values
    n_out = (n + 2 * padding - k) // stride + 1
    span = (n_out - 1) * stride + 1
    out = np.repeat(b.values[:, None], n_out, axis=1)
    wv = w.values
    for t in range(k):
        out += wv[:, :, t] @ xp[:, t : t + span : stride]

    def vjp_x(g):
        dxp = np.zeros_like(xp)
        for t in range(k):
            dxp[:, t : t + span : stride] += wv[:, :, t].T @ g
        return dxp[:, padding : padding + n] if padding else dxp

    def vjp_w(g):
        dw = np.empty_like(wv)
        for t in range(k):
            dw[:, :, t] = g @ xp[:, t : t + span : stride].T
        return dw

    return Tensor(out, (x, w, b), (vjp_x, vjp_w, lambda g: g.sum(axis=1)))


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Affine map: (n,) -> (m,) with weights (m, n)."""
    if x.values.ndim != 1 or w.values.ndim != 2 or b.values.ndim != 1:
        raise ShapeError("linear expects x(n), w(m,n), b(m)")
    m, n = w.values.shape
    if x.values.shape[0] != n or b.values.shape[0] != m:
        raise ShapeError(
            f"linear shape mismatch: x{x.values.shape}, w{w.values.shape}, b{b.values.shape}"
        )
    out = w.values @ x.values + b.values
    return Tensor(out, (x, w, b), (
        lambda g: w.values.T @ g,
        lambda g: np.outer(g, x.values),
        lambda g: g,
    ))


# ---------------------------------------------------------------------------
# backward pass


def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor, params) -> dict:
    """Return {parameter tensor -> dLoss/dParam}, zeros for unused parameters.

    `loss` must be a finite scalar.
    """
    if loss.values.size != 1:
        raise ContractError(f"loss must be scalar, got shape {loss.values.shape}")
    if not np.isfinite(loss.values).all():
        raise NumericError("loss is not finite")

    params = list(params)
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.values)}
    for node in reversed(_topo_order(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        for parent, vjp in zip(node._parents, node._vjps):
            contrib = vjp(g)
            prev = grads.get(id(parent))
            if prev is None:
                grads[id(parent)] = np.array(contrib, dtype=np.float64)
            else:
                prev += contrib
        # keep leaf grads (params) around until collected below
        if node._parents == () and g is not None:
            grads[id(node)] = g
    return {p: grads.get(id(p), np.zeros_like(p.values)) for p in params}
