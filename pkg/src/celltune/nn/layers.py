"""Dense and graph layers over the autodiff tensors.

All layers share one ParameterSet so a model applied per node reuses the
same weights regardless of how many nodes the input graph has.
"""

import numpy as np

from .tensor import (
    Tensor,
    affine,
    check_finite,
    concat,
    gather_rows,
    graph_affine,
    leaky_relu,
    mul,
    relu,
    segment_softmax,
    segment_sum,
)


def glorot(shape, rng):
    """Glorot-uniform tensor, bounds +-sqrt(6/(fan_in+fan_out)).

    `rng` may be an int seed or a numpy Generator; the same seed always
    yields the same tensor.
    """
    rng = np.random.default_rng(rng)
    if len(shape) == 0 or 0 in shape:
        return Tensor(np.zeros(shape))
    fan_in = shape[0]
    fan_out = shape[1] if len(shape) > 1 else 1
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-limit, limit, size=shape))


class ParameterSet:
    """Ordered name -> Tensor map; iteration order is insertion order."""

    def __init__(self):
        self._params = {}

    def add(self, name, tensor):
        if name in self._params:
            raise ValueError(f"duplicate parameter {name!r}")
        self._params[name] = tensor
        return tensor

    def names(self):
        return list(self._params)

    def __getitem__(self, name):
        return self._params[name]

    def __iter__(self):
        return iter(self._params.items())

    def __len__(self):
        return len(self._params)

    def n_values(self):
        return sum(t.data.size for t in self._params.values())

    def zero_grad(self):
        for t in self._params.values():
            t.grad = None

    def copy_from(self, other):
        """Overwrite values with an exact copy of another set's values."""
        if self.names() != other.names():
            raise ValueError("parameter sets do not match")
        for name, t in other:
            self._params[name].data = t.data.copy()

    def state_dict(self):
        return {name: t.data.copy() for name, t in self}

    def load_state_dict(self, state):
        for name, t in self:
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != t.data.shape:
                raise ValueError(f"shape mismatch for {name!r}")
            t.data = arr.copy()


_ACTIVATIONS = {
    "relu": relu,
    "identity": lambda t: t,
}


def _activate(t, activation):
    try:
        return _ACTIVATIONS[activation](t)
    except KeyError:
        raise ValueError(f"unknown activation {activation!r}") from None


class Dense:
    """Row-wise affine map with activation: act(x W + b)."""

    def __init__(self, params, name, d_in, d_out, rng, activation="relu"):
        self.d_in = d_in
        self.d_out = d_out
        self.activation = activation
        self.W = params.add(f"{name}/W", glorot((d_in, d_out), rng))
        self.b = params.add(f"{name}/b", Tensor(np.zeros(d_out)))

    def __call__(self, x):
        if x.data.ndim != 2 or x.data.shape[1] != self.d_in:
            raise ValueError(
                f"dense layer expects (*, {self.d_in}), got {x.data.shape}"
            )
        return affine(x, self.W, self.b, self.activation)


class GraphConv:
    """Per-node transform of self features plus summed neighbor features.

    h_i = act(x_i W_self + (sum over neighbors j of x_j) W_neigh + b).
    The neighbor sum is unnormalized by default; `normalized=True` divides
    it by the node degree instead.
    """

    def __init__(self, params, name, d_in, d_out, rng, activation="relu",
                 normalized=False):
        self.d_in = d_in
        self.d_out = d_out
        self.activation = activation
        self.normalized = normalized
        self.W_self = params.add(f"{name}/W_self", glorot((d_in, d_out), rng))
        self.W_neigh = params.add(f"{name}/W_neigh", glorot((d_in, d_out), rng))
        self.b = params.add(f"{name}/b", Tensor(np.zeros(d_out)))

    def __call__(self, x, graph):
        if x.data.ndim != 2 or x.data.shape[1] != self.d_in:
            raise ValueError(
                f"graph conv expects (*, {self.d_in}), got {x.data.shape}"
            )
        if x.data.shape[0] != graph.n_nodes:
            raise ValueError("node count of features and graph differ")
        inv_degree = None
        if self.normalized:
            deg = np.bincount(graph.edge_dst, minlength=graph.n_nodes)
            inv_degree = 1.0 / np.maximum(deg, 1.0)
        return graph_affine(x, self.W_self, self.W_neigh, self.b, graph,
                            self.activation, inv_degree=inv_degree)


class GraphAttention:
    """Multi-head attention over closed neighborhoods (self-loop included).

    Per head: project features, score each edge with a leaky-relu of the
    summed source/destination projections, softmax the scores over each
    destination's closed neighborhood, and aggregate the projected source
    features with those weights. Head outputs are concatenated, so the
    layer emits n_heads * d_head features per node.
    """

    def __init__(self, params, name, d_in, d_head, n_heads, rng,
                 activation="relu", slope=0.2):
        if n_heads < 1:
            raise ValueError("n_heads must be >= 1")
        self.d_in = d_in
        self.d_head = d_head
        self.n_heads = n_heads
        self.activation = activation
        self.slope = slope
        self.heads = []
        for h in range(n_heads):
            self.heads.append((
                params.add(f"{name}/head{h}/W", glorot((d_in, d_head), rng)),
                params.add(f"{name}/head{h}/a_src", glorot((d_head, 1), rng)),
                params.add(f"{name}/head{h}/a_dst", glorot((d_head, 1), rng)),
            ))
        self.last_attention = None

    def __call__(self, x, graph):
        if x.data.ndim != 2 or x.data.shape[1] != self.d_in:
            raise ValueError(
                f"graph attention expects (*, {self.d_in}), got {x.data.shape}"
            )
        if x.data.shape[0] != graph.n_nodes:
            raise ValueError("node count of features and graph differ")
        src, dst = graph.loop_src, graph.loop_dst
        outs = []
        self.last_attention = []
        for W, a_src, a_dst in self.heads:
            p = x @ W
            score = leaky_relu(
                gather_rows(p @ a_src, src) + gather_rows(p @ a_dst, dst),
                self.slope,
            )
            alpha = segment_softmax(score, dst, graph.n_nodes)
            msg = mul(alpha, gather_rows(p, src))
            outs.append(segment_sum(msg, dst, graph.n_nodes))
            self.last_attention.append(alpha.data[:, 0].copy())
        out = outs[0] if len(outs) == 1 else concat(outs, axis=1)
        out = check_finite(out, "graph attention layer")
        return _activate(out, self.activation)
