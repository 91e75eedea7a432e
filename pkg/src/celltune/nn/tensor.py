"""Array-valued reverse-mode autodiff on float64 numpy buffers.

Each op records a closure that routes the output gradient back to its
parents; ``Tensor.backward()`` topologically sorts the recorded graph and
applies the chain rule. Only the ops needed by the dense / graph layers
and the TD loss are provided.
"""

import numpy as np


class NumericsError(RuntimeError):
    """A layer produced NaN/Inf values."""


class Tensor:
    __slots__ = ("data", "grad", "_parents", "_backward")

    def __init__(self, data, _parents=(), _backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape})"

    def backward(self):
        """Accumulate gradients of this scalar into every upstream tensor."""
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar loss")
        if not self._parents and self._backward is None:
            raise RuntimeError("backward() without a recorded forward pass")
        topo, visited = [], set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        for node in topo:
            node.grad = None
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # operator sugar; scalars and ndarrays are treated as constants
    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    def __rmul__(self, other):
        return mul(_as_tensor(other), self)

    def __truediv__(self, other):
        return div(self, _as_tensor(other))

    def __neg__(self):
        return mul(self, _as_tensor(-1.0))

    def __matmul__(self, other):
        return matmul(self, _as_tensor(other))


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _accum(t, g, owned=False):
    """Accumulate gradient g into t. `owned=True` promises g is a fresh
    array aliasing nothing else, so the first touch can take it over."""
    if t.grad is None:
        if owned and g.shape == t.data.shape:
            t.grad = g
        else:
            t.grad = np.array(g, dtype=np.float64)
            if t.grad.shape != t.data.shape:
                t.grad = np.broadcast_to(t.grad, t.data.shape).copy()
    else:
        t.grad += g


def _unbroadcast(g, shape):
    # reduce a broadcast gradient back down to `shape`
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def add(a, b):
    out = Tensor(a.data + b.data, (a, b))

    def backward(g):
        ga = _unbroadcast(g, a.data.shape)
        _accum(a, ga, owned=ga is not g)
        gb = _unbroadcast(g, b.data.shape)
        _accum(b, gb, owned=gb is not g)

    out._backward = backward
    return out


def sub(a, b):
    out = Tensor(a.data - b.data, (a, b))

    def backward(g):
        ga = _unbroadcast(g, a.data.shape)
        _accum(a, ga, owned=ga is not g)
        _accum(b, _unbroadcast(-g, b.data.shape), owned=True)

    out._backward = backward
    return out


def mul(a, b):
    out = Tensor(a.data * b.data, (a, b))

    def backward(g):
        _accum(a, _unbroadcast(g * b.data, a.data.shape), owned=True)
        _accum(b, _unbroadcast(g * a.data, b.data.shape), owned=True)

    out._backward = backward
    return out


def div(a, b):
    out = Tensor(a.data / b.data, (a, b))

    def backward(g):
        _accum(a, _unbroadcast(g / b.data, a.data.shape), owned=True)
        _accum(b, _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape),
               owned=True)

    out._backward = backward
    return out


def matmul(a, b):
    out = Tensor(a.data @ b.data, (a, b))

    def backward(g):
        _accum(a, g @ b.data.T, owned=True)
        _accum(b, a.data.T @ g, owned=True)

    out._backward = backward
    return out


def relu(a):
    mask = a.data > 0
    out = Tensor(np.maximum(a.data, 0.0), (a,))

    def backward(g):
        _accum(a, g * mask, owned=True)

    out._backward = backward
    return out


def leaky_relu(a, slope=0.2):
    mask = a.data > 0
    out = Tensor(np.where(mask, a.data, slope * a.data), (a,))

    def backward(g):
        _accum(a, g * np.where(mask, 1.0, slope), owned=True)

    out._backward = backward
    return out


def exp(a):
    val = np.exp(a.data)
    out = Tensor(val, (a,))

    def backward(g):
        _accum(a, g * val, owned=True)

    out._backward = backward
    return out


def tsum(a, axis=None, keepdims=False):
    out = Tensor(a.data.sum(axis=axis, keepdims=keepdims), (a,))

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accum(a, np.broadcast_to(g, a.data.shape).copy(), owned=True)

    out._backward = backward
    return out


def mean(a):
    return tsum(a) * (1.0 / a.data.size)


def gather_rows(a, index):
    """Select rows of a 2D (or 1D) tensor; backward scatter-adds."""
    index = np.asarray(index, dtype=np.intp)
    out = Tensor(a.data[index], (a,))

    def backward(g):
        acc = np.zeros_like(a.data)
        np.add.at(acc, index, g)
        _accum(a, acc, owned=True)

    out._backward = backward
    return out


def take_per_row(a, cols):
    """out[i] = a[i, cols[i]] for a 2D tensor, returning a 1D tensor."""
    cols = np.asarray(cols, dtype=np.intp)
    n, width = a.data.shape
    rows = np.arange(n)
    out = Tensor(a.data[rows, cols], (a,))

    def backward(g):
        acc = np.bincount(rows * width + cols, weights=g, minlength=n * width)
        _accum(a, acc.reshape(n, width), owned=True)

    out._backward = backward
    return out


def _segment_accumulate(values, segments, num_segments):
    """Bucket-sum rows by segment id; bincount fast paths for thin data."""
    if values.ndim == 1:
        return np.bincount(segments, weights=values, minlength=num_segments)
    if values.shape[1] == 1:
        return np.bincount(segments, weights=values[:, 0],
                           minlength=num_segments)[:, None]
    out = np.zeros((num_segments,) + values.shape[1:])
    np.add.at(out, segments, values)
    return out


def segment_sum(a, segments, num_segments):
    """Sum rows of `a` into `num_segments` buckets given by `segments`."""
    segments = np.asarray(segments, dtype=np.intp)
    out = Tensor(_segment_accumulate(a.data, segments, num_segments), (a,))

    def backward(g):
        _accum(a, g[segments], owned=True)

    out._backward = backward
    return out


def adjacency_matmul(x, graph):
    """Neighbor-sum via the graph's cached sparse adjacency: out = A x.

    A is symmetric, so the backward pass is another A matmul."""
    A = graph.csr()
    out = Tensor(A @ x.data, (x,))

    def backward(g):
        _accum(x, A @ g, owned=True)

    out._backward = backward
    return out


def concat(tensors, axis=1):
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors))
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            _accum(t, g[tuple(idx)])

    out._backward = backward
    return out


def segment_softmax(scores, segments, num_segments):
    """Softmax of a 1D score tensor within each segment.

    The per-segment max is subtracted as a constant; softmax is shift
    invariant so gradients stay exact.
    """
    segments = np.asarray(segments, dtype=np.intp)
    seg_max = np.full((num_segments,) + scores.data.shape[1:], -np.inf)
    np.maximum.at(seg_max, segments, scores.data)
    shifted = sub(scores, Tensor(seg_max[segments]))
    e = exp(shifted)
    denom = segment_sum(e, segments, num_segments)
    return div(e, gather_rows(denom, segments))


def affine(x, W, b, activation="identity", where="dense layer"):
    """Fused act(x W + b): one tape node for the whole dense layer."""
    pre = x.data @ W.data
    pre += b.data
    if not np.isfinite(pre.sum()):
        raise NumericsError(f"non-finite values out of {where}")
    if activation == "relu":
        mask = pre > 0
        out = Tensor(np.maximum(pre, 0.0), (x, W, b))
    elif activation == "identity":
        mask = None
        out = Tensor(pre, (x, W, b))
    else:
        raise ValueError(f"unknown activation {activation!r}")

    def backward(g):
        if mask is not None:
            g = g * mask
        _accum(x, g @ W.data.T, owned=True)
        _accum(W, x.data.T @ g, owned=True)
        _accum(b, g.sum(axis=0), owned=True)

    out._backward = backward
    return out


def graph_affine(x, W_self, W_neigh, b, graph, activation="relu",
                 inv_degree=None, where="graph conv layer"):
    """Fused graph-convolution: act(x W_self + (A x) W_neigh + b).

    A is the graph's symmetric adjacency; `inv_degree` switches the
    neighbor term to a degree-normalized mean."""
    A = graph.csr()
    neigh = A @ x.data
    if inv_degree is not None:
        neigh *= inv_degree[:, None]
    pre = x.data @ W_self.data
    pre += neigh @ W_neigh.data
    pre += b.data
    if not np.isfinite(pre.sum()):
        raise NumericsError(f"non-finite values out of {where}")
    if activation == "relu":
        mask = pre > 0
        out = Tensor(np.maximum(pre, 0.0), (x, W_self, W_neigh, b))
    elif activation == "identity":
        mask = None
        out = Tensor(pre, (x, W_self, W_neigh, b))
    else:
        raise ValueError(f"unknown activation {activation!r}")

    def backward(g):
        if mask is not None:
            g = g * mask
        gn = g @ W_neigh.data.T
        if inv_degree is not None:
            gn *= inv_degree[:, None]
        _accum(x, g @ W_self.data.T + A @ gn, owned=True)
        _accum(W_self, x.data.T @ g, owned=True)
        _accum(W_neigh, neigh.T @ g, owned=True)
        _accum(b, g.sum(axis=0), owned=True)

    out._backward = backward
    return out


def check_finite(t, where):
    if not np.all(np.isfinite(t.data)):
        raise NumericsError(f"non-finite values out of {where}")
    return t
