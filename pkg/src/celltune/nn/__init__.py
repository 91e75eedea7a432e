from .tensor import (
    NumericsError,
    adjacency_matmul,
    Tensor,
    check_finite,
    concat,
    gather_rows,
    leaky_relu,
    mean,
    relu,
    segment_softmax,
    segment_sum,
    take_per_row,
    tsum,
)
from .layers import Dense, GraphAttention, GraphConv, ParameterSet, glorot
from .optim import Adam
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint

__all__ = [
    "Adam",
    "adjacency_matmul",
    "CheckpointError",
    "Dense",
    "GraphAttention",
    "GraphConv",
    "NumericsError",
    "ParameterSet",
    "Tensor",
    "check_finite",
    "concat",
    "gather_rows",
    "glorot",
    "leaky_relu",
    "load_checkpoint",
    "mean",
    "relu",
    "save_checkpoint",
    "segment_softmax",
    "segment_sum",
    "take_per_row",
    "tsum",
]
