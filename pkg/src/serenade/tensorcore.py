"""Minimal dense-matrix math with reverse-mode automatic differentiation.

Values are 2-D float64 numpy arrays throughout. The graph supports the
closure of operations needed by the feature extractor and the autoregressive
decoder: matmul, same-shape add, bias broadcast over rows, sigmoid, ReLU,
column concatenation/slicing, temporal unfold (for 1-D convolution), mean,
and a fused softmax cross-entropy. Shape mismatches are hard errors; there
is no implicit broadcasting beyond the bias-over-rows case.

A graph instance is confined to one thread; distinct graphs may run in
parallel.
"""
from __future__ import annotations

import numpy as np

__all__ = [
    "Node", "ShapeError", "parameter", "constant", "backward",
    "sigmoid", "softmax", "cross_entropy", "relu", "matmul", "matmul_t",
    "add", "add_bias", "concat_cols", "slice_cols", "unfold_rows", "mean",
    "scale", "transpose", "softmax_xent",
]


class ShapeError(ValueError):
    """Incompatible operand shapes in a graph operation."""


def _as_matrix(x, name="value"):
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    return a


class Node:
    """One vertex of the computation graph.

    ``value`` and ``grad`` always share a shape; ``tag`` names the
    backprop rule that produced the node.
    """

    __slots__ = ("value", "grad", "parents", "tag", "_backward", "is_param")

    def __init__(self, value, parents=(), tag="leaf", backward_fn=None,
                 is_param=False):
        self.value = value
        self.grad = None  # allocated by backward()
        self.parents = tuple(parents)
        self.tag = tag
        self._backward = backward_fn
        self.is_param = is_param

    @property
    def shape(self):
        return self.value.shape

    def __matmul__(self, other):
        return matmul(self, other)

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, c):
        return scale(self, c)

    __rmul__ = __mul__

    def __repr__(self):
        return f"Node({self.tag}, shape={self.value.shape})"


def parameter(value) -> Node:
    """Leaf node whose gradient will be read after ``backward``."""
    return Node(_as_matrix(value, "parameter"), is_param=True)


def constant(value) -> Node:
    """Leaf node treated as data; its gradient is computed but unused."""
    return Node(_as_matrix(value, "constant"))


def _node(x):
    return x if isinstance(x, Node) else constant(x)


# ---------------------------------------------------------------------------
# plain-array math (shared by the no-tape inference paths)

def sigmoid(x):
    """Elementwise logistic function; accepts an ndarray or a Node."""
    if isinstance(x, Node):
        v = 1.0 / (1.0 + np.exp(-x.value))
        out = Node(v, (x,), "sigmoid")

        def bwd():
            x.grad += out.grad * v * (1.0 - v)

        out._backward = bwd
        return out
    x = np.asarray(x, dtype=np.float64)
    return 1.0 / (1.0 + np.exp(-x))


def softmax(z):
    """Probabilities from a 1-D logit vector; shift-invariant and stable."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 1:
        raise ShapeError(f"softmax expects a vector, got shape {z.shape}")
    e = np.exp(z - z.max())
    return e / e.sum()


def softmax_rows(z):
    """Row-wise softmax of a 2-D array (plain ndarray only)."""
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(logits, target: int) -> float:
    """Negative log softmax probability of ``target``; non-negative."""
    logits = np.asarray(logits, dtype=np.float64)
    if not 0 <= target < logits.shape[-1]:
        raise IndexError(f"target {target} out of range for {logits.shape[-1]} classes")
    m = logits.max()
    return float(np.log(np.exp(logits - m).sum()) + m - logits[target])


# ---------------------------------------------------------------------------
# graph operations

def matmul(a: Node, b: Node) -> Node:
    a, b = _node(a), _node(b)
    if a.value.shape[1] != b.value.shape[0]:
        raise ShapeError(f"matmul {a.value.shape} @ {b.value.shape}")
    out = Node(a.value @ b.value, (a, b), "matmul")

    def bwd():
        a.grad += out.grad @ b.value.T
        b.grad += a.value.T @ out.grad

    out._backward = bwd
    return out


def matmul_t(a: Node, b: Node) -> Node:
    """``a @ b.T`` without materialising the transpose."""
    a, b = _node(a), _node(b)
    if a.value.shape[1] != b.value.shape[1]:
        raise ShapeError(f"matmul_t {a.value.shape} @ {b.value.shape}.T")
    out = Node(a.value @ b.value.T, (a, b), "matmul_t")

    def bwd():
        a.grad += out.grad @ b.value
        b.grad += out.grad.T @ a.value

    out._backward = bwd
    return out


def add(a: Node, b: Node) -> Node:
    a, b = _node(a), _node(b)
    if a.value.shape != b.value.shape:
        raise ShapeError(f"add {a.value.shape} + {b.value.shape}")
    out = Node(a.value + b.value, (a, b), "add")

    def bwd():
        a.grad += out.grad
        b.grad += out.grad

    out._backward = bwd
    return out


def add_bias(x: Node, b: Node) -> Node:
    """Broadcast a 1 x D bias over the rows of a T x D matrix."""
    x, b = _node(x), _node(b)
    if b.value.shape[0] != 1 or b.value.shape[1] != x.value.shape[1]:
        raise ShapeError(f"add_bias {x.value.shape} + {b.value.shape}")
    out = Node(x.value + b.value, (x, b), "add_bias")

    def bwd():
        x.grad += out.grad
        b.grad += out.grad.sum(axis=0, keepdims=True)

    out._backward = bwd
    return out


def relu(x: Node) -> Node:
    x = _node(x)
    mask = x.value > 0.0
    out = Node(x.value * mask, (x,), "relu")

    def bwd():
        x.grad += out.grad * mask

    out._backward = bwd
    return out


def concat_cols(xs) -> Node:
    xs = [_node(x) for x in xs]
    rows = {x.value.shape[0] for x in xs}
    if len(rows) != 1:
        raise ShapeError(f"concat_cols row mismatch: {[x.value.shape for x in xs]}")
    out = Node(np.concatenate([x.value for x in xs], axis=1), tuple(xs), "concat")
    splits = np.cumsum([x.value.shape[1] for x in xs])[:-1]

    def bwd():
        for x, g in zip(xs, np.split(out.grad, splits, axis=1)):
            x.grad += g

    out._backward = bwd
    return out


def slice_cols(x: Node, start: int, stop: int) -> Node:
    x = _node(x)
    if not 0 <= start < stop <= x.value.shape[1]:
        raise ShapeError(f"slice_cols [{start}:{stop}] of {x.value.shape}")
    out = Node(x.value[:, start:stop].copy(), (x,), "slice")

    def bwd():
        x.grad[:, start:stop] += out.grad

    out._backward = bwd
    return out


def unfold_rows(x: Node, kernel: int) -> Node:
    """Stack each row's symmetric temporal context: T x C -> T x (C*kernel).

    Zero padding outside the sequence; kernel must be odd so the window is
    centred (no causal shift).
    """
    x = _node(x)
    if kernel < 1 or kernel % 2 == 0:
        raise ShapeError(f"kernel must be odd and positive, got {kernel}")
    t, c = x.value.shape
    r = kernel // 2
    padded = np.zeros((t + 2 * r, c))
    padded[r:r + t] = x.value
    v = np.concatenate([padded[j:j + t] for j in range(kernel)], axis=1)
    out = Node(v, (x,), "unfold")

    def bwd():
        gp = np.zeros((t + 2 * r, c))
        for j in range(kernel):
            gp[j:j + t] += out.grad[:, j * c:(j + 1) * c]
        x.grad += gp[r:r + t]

    out._backward = bwd
    return out


def mean(x: Node) -> Node:
    x = _node(x)
    n = x.value.size
    out = Node(np.array([[x.value.mean()]]), (x,), "mean")

    def bwd():
        x.grad += out.grad[0, 0] / n

    out._backward = bwd
    return out


def scale(x: Node, c: float) -> Node:
    x = _node(x)
    c = float(c)
    out = Node(x.value * c, (x,), "scale")

    def bwd():
        x.grad += out.grad * c

    out._backward = bwd
    return out


def transpose(x: Node) -> Node:
    x = _node(x)
    out = Node(x.value.T.copy(), (x,), "transpose")

    def bwd():
        x.grad += out.grad.T

    out._backward = bwd
    return out


def softmax_xent(logits: Node, targets) -> Node:
    """Fused per-row softmax cross-entropy: T x C logits -> T x 1 losses."""
    logits = _node(logits)
    targets = np.asarray(targets, dtype=np.int64).reshape(-1)
    t, c = logits.value.shape
    if targets.shape[0] != t:
        raise ShapeError(f"{targets.shape[0]} targets for {t} logit rows")
    if targets.min() < 0 or targets.max() >= c:
        raise IndexError(f"target out of range for {c} classes")
    z = logits.value
    m = z.max(axis=1, keepdims=True)
    e = np.exp(z - m)
    lse = np.log(e.sum(axis=1, keepdims=True)) + m
    losses = lse - z[np.arange(t), targets][:, None]
    out = Node(losses, (logits,), "softmax_xent")
    probs = e / e.sum(axis=1, keepdims=True)

    def bwd():
        g = probs * out.grad
        g[np.arange(t), targets] -= out.grad[:, 0]
        logits.grad += g

    out._backward = bwd
    return out


# ---------------------------------------------------------------------------

def backward(root: Node) -> None:
    """Populate ``grad`` on every node reachable from a scalar root.

    Deterministic: the traversal order is fixed by graph construction
    order, so repeated runs produce bit-identical gradients.
    """
    if root.value.shape != (1, 1):
        raise ValueError(f"backward root must be 1x1, got {root.value.shape}")
    order = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    for node in order:
        node.grad = np.zeros_like(node.value)
    root.grad = np.ones((1, 1))
    for node in reversed(order):
        if node._backward is not None:
            node._backward()
