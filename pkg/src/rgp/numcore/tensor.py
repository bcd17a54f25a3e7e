"""Dense 2-D tensors with taped reverse-mode differentiation.

Tensors wrap a float64 numpy array in row-major layout. Operations whose
inputs require gradients record their parents and a backward closure on
the result; :func:`backward` walks that tape from a scalar output and
accumulates into each participating tensor's ``grad`` buffer.

Accumulation semantics: ``backward`` adds into existing ``grad`` buffers
and never clears them. Call :func:`zero_grad` (or build a fresh graph
from fresh leaves) between steps.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.atleast_2d(np.asarray(data, dtype=np.float64))
        if arr.ndim != 2:
            raise ShapeError(f"tensors are 2-D, got shape {arr.shape}")
        self.data = np.ascontiguousarray(arr)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() on shape {self.shape}")
        return float(self.data[0, 0])

    def detach(self) -> "Tensor":
        """Copy of the values with no tape linkage and no gradient."""
        return Tensor(self.data.copy())

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64)
        else:
            self.grad += g

    def backward(self) -> None:
        backward(self)

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def _result(data: np.ndarray, parents: Sequence[Tensor], backward_fn) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _check_same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ")


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape("add", a, b)

    def bw(g):
        if a.requires_grad:
            a._accumulate(g)
        if b.requires_grad:
            b._accumulate(g)

    return _result(a.data + b.data, (a, b), bw)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape("sub", a, b)

    def bw(g):
        if a.requires_grad:
            a._accumulate(g)
        if b.requires_grad:
            b._accumulate(-g)

    return _result(a.data - b.data, (a, b), bw)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product of equal-shape tensors."""
    _check_same_shape("mul", a, b)

    def bw(g):
        if a.requires_grad:
            a._accumulate(g * b.data)
        if b.requires_grad:
            b._accumulate(g * a.data)

    return _result(a.data * b.data, (a, b), bw)


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)

    def bw(g):
        a._accumulate(g * c)

    return _result(a.data * c, (a,), bw)


def add_constant(a: Tensor, m: np.ndarray) -> Tensor:
    """Add a fixed (non-learnable) matrix, e.g. an attention mask bias."""
    if a.shape != m.shape:
        raise ShapeError(f"add_constant: shapes {a.shape} and {m.shape} differ")

    def bw(g):
        a._accumulate(g)

    return _result(a.data + m, (a,), bw)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.cols != b.rows:
        raise ShapeError(
            f"matmul: cannot multiply ({a.rows}x{a.cols}) by ({b.rows}x{b.cols})"
        )

    def bw(g):
        if a.requires_grad:
            a._accumulate(g @ b.data.T)
        if b.requires_grad:
            b._accumulate(a.data.T @ g)

    return _result(a.data @ b.data, (a, b), bw)


def transpose(a: Tensor) -> Tensor:
    def bw(g):
        a._accumulate(g.T)

    return _result(np.ascontiguousarray(a.data.T), (a,), bw)


def relu(a: Tensor) -> Tensor:
    """Elementwise max(0, x); the subgradient at 0 is taken as 0."""
    mask = a.data > 0

    def bw(g):
        a._accumulate(g * mask)

    return _result(np.maximum(a.data, 0.0), (a,), bw)


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    e = np.exp(-np.abs(x))  # overflow-safe in both tails
    y = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))

    def bw(g):
        a._accumulate(g * y * (1.0 - y))

    return _result(y, (a,), bw)


def softmax_rows(a: Tensor) -> Tensor:
    """Row-wise softmax with max subtraction for stability.

    Entries of ``-inf`` are legal and produce exact zeros, which is how
    attention masking is implemented.
    """
    m = np.max(a.data, axis=1, keepdims=True)
    e = np.exp(a.data - m)
    p = e / np.sum(e, axis=1, keepdims=True)

    def bw(g):
        dot = np.sum(g * p, axis=1, keepdims=True)
        a._accumulate(p * (g - dot))

    return _result(p, (a,), bw)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-row standardization (population variance) with affine output."""
    if gamma.shape != (1, x.cols) or beta.shape != (1, x.cols):
        raise ShapeError(
            f"layer_norm: gamma {gamma.shape} / beta {beta.shape} do not match width {x.cols}"
        )
    mu = np.mean(x.data, axis=1, keepdims=True)
    var = np.mean((x.data - mu) ** 2, axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    y = (x.data - mu) * inv

    def bw(g):
        if beta.requires_grad:
            beta._accumulate(np.sum(g, axis=0, keepdims=True))
        if gamma.requires_grad:
            gamma._accumulate(np.sum(g * y, axis=0, keepdims=True))
        if x.requires_grad:
            dy = g * gamma.data
            mean_dy = np.mean(dy, axis=1, keepdims=True)
            mean_dyy = np.mean(dy * y, axis=1, keepdims=True)
            x._accumulate((dy - mean_dy - y * mean_dyy) * inv)

    return _result(y * gamma.data + beta.data, (x, gamma, beta), bw)


def cross_entropy(logits: Tensor, label: int) -> Tensor:
    """Negative log softmax probability of ``label``, in log space."""
    if logits.rows != 1:
        raise ShapeError(f"cross_entropy expects a 1xC row, got {logits.shape}")
    if not 0 <= label < logits.cols:
        raise ValueError(f"label {label} out of range for {logits.cols} classes")
    z = logits.data[0]
    m = np.max(z)
    lse = m + np.log(np.sum(np.exp(z - m)))
    loss = lse - z[label]

    def bw(g):
        p = np.exp(z - lse)
        p[label] -= 1.0
        logits._accumulate(g[0, 0] * p[None, :])

    return _result(np.array([[loss]]), (logits,), bw)


def sum_all(a: Tensor) -> Tensor:
    def bw(g):
        a._accumulate(np.full_like(a.data, g[0, 0]))

    return _result(np.array([[a.data.sum()]]), (a,), bw)


def gather_rows(a: Tensor, indices: np.ndarray) -> Tensor:
    """Select rows by index; duplicate indices accumulate on backward."""
    idx = np.asarray(indices, dtype=np.intp)

    def bw(g):
        buf = np.zeros_like(a.data)
        np.add.at(buf, idx, g)
        a._accumulate(buf)

    return _result(a.data[idx], (a,), bw)


def slice_rows(a: Tensor, start: int, stop: int) -> Tensor:
    def bw(g):
        buf = np.zeros_like(a.data)
        buf[start:stop] = g
        a._accumulate(buf)

    return _result(a.data[start:stop].copy(), (a,), bw)


def concat_rows(parts: Sequence[Tensor]) -> Tensor:
    widths = {p.cols for p in parts}
    if len(widths) != 1:
        raise ShapeError(f"concat_rows: mixed widths {sorted(widths)}")
    offsets = np.cumsum([0] + [p.rows for p in parts])

    def bw(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if p.requires_grad:
                p._accumulate(g[lo:hi])

    return _result(np.vstack([p.data for p in parts]), tuple(parts), bw)


def concat_cols(parts: Sequence[Tensor]) -> Tensor:
    heights = {p.rows for p in parts}
    if len(heights) != 1:
        raise ShapeError(f"concat_cols: mixed heights {sorted(heights)}")
    offsets = np.cumsum([0] + [p.cols for p in parts])

    def bw(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if p.requires_grad:
                p._accumulate(g[:, lo:hi])

    return _result(np.hstack([p.data for p in parts]), tuple(parts), bw)


def add_rowvec(x: Tensor, b: Tensor) -> Tensor:
    """Add a 1xd row (bias) to every row of x."""
    if b.shape != (1, x.cols):
        raise ShapeError(f"add_rowvec: bias {b.shape} does not match width {x.cols}")

    def bw(g):
        if x.requires_grad:
            x._accumulate(g)
        if b.requires_grad:
            b._accumulate(np.sum(g, axis=0, keepdims=True))

    return _result(x.data + b.data, (x, b), bw)


def mul_colvec(x: Tensor, c: Tensor) -> Tensor:
    """Scale row i of x by c[i, 0] (used for pooling gates)."""
    if c.shape != (x.rows, 1):
        raise ShapeError(f"mul_colvec: gate {c.shape} does not match height {x.rows}")

    def bw(g):
        if x.requires_grad:
            x._accumulate(g * c.data)
        if c.requires_grad:
            c._accumulate(np.sum(g * x.data, axis=1, keepdims=True))

    return _result(x.data * c.data, (x, c), bw)


def backward(output: Tensor) -> None:
    """Reverse-mode pass from a scalar.

    Adds exactly one gradient contribution into the ``grad`` buffer of
    every tensor on the tape; contributions from earlier backward calls
    are preserved but never re-propagated.
    """
    if output.shape != (1, 1):
        raise ShapeError(f"backward requires a 1x1 scalar, got {output.shape}")
    if not output.requires_grad:
        return

    # Iterative post-order topological sort over the recorded tape.
    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(output, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in visited:
                stack.append((p, False))

    # Propagate through clean buffers, then fold prior gradients back in.
    stashed: list[tuple[Tensor, np.ndarray]] = []
    for node in topo:
        if node.grad is not None:
            stashed.append((node, node.grad))
            node.grad = None

    output._accumulate(np.ones((1, 1)))
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
    # Every tensor on the tape ends up with a populated (possibly zero)
    # gradient buffer, even if no contribution reached it.
    for node in topo:
        if node.grad is None:
            node.grad = np.zeros_like(node.data)
    for node, prior in stashed:
        node.grad += prior


def zero_grad(tensors: Iterable[Tensor]) -> None:
    for t in tensors:
        if t.requires_grad:
            t.grad = np.zeros_like(t.data)
