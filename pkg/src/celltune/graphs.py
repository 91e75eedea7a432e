"""Undirected agent-adjacency structure shared by the environment and the
graph layers."""

import numpy as np
from scipy import sparse


def _edge_csr(n_nodes, edge_src, edge_dst):
    data = np.ones(len(edge_src), dtype=np.float64)
    return sparse.csr_matrix((data, (edge_dst, edge_src)),
                             shape=(n_nodes, n_nodes))


class NetworkGraph:
    """Symmetric, zero-diagonal adjacency over agent nodes.

    Stores neighbor lists plus the flattened directed-edge arrays the graph
    layers consume (`edge_src[k] -> edge_dst[k]`, both directions of every
    undirected edge). `loop_src/loop_dst` add a self-loop per node for
    attention over closed neighborhoods.
    """

    def __init__(self, n_nodes, edges, coupling_db=None):
        self.n_nodes = int(n_nodes)
        neigh = [set() for _ in range(self.n_nodes)]
        for i, j in edges:
            if i == j:
                raise ValueError("self-edges are not allowed")
            neigh[i].add(j)
            neigh[j].add(i)
        self.neighbors = tuple(tuple(sorted(s)) for s in neigh)
        src, dst = [], []
        for i, ns in enumerate(self.neighbors):
            for j in ns:
                src.append(j)
                dst.append(i)
        self.edge_src = np.asarray(src, dtype=np.intp)
        self.edge_dst = np.asarray(dst, dtype=np.intp)
        loops = np.arange(self.n_nodes, dtype=np.intp)
        self.loop_src = np.concatenate([self.edge_src, loops])
        self.loop_dst = np.concatenate([self.edge_dst, loops])
        # pairwise coupling strengths (dB) recorded by the builder; used for
        # neighbor ordering in stacked-observation baselines
        self.coupling_db = coupling_db
        self._csr = None

    def csr(self):
        if self._csr is None:
            self._csr = _edge_csr(self.n_nodes, self.edge_src, self.edge_dst)
        return self._csr

    @property
    def edges(self):
        return [(i, j) for i in range(self.n_nodes) for j in self.neighbors[i] if i < j]

    def adjacency_matrix(self):
        a = np.zeros((self.n_nodes, self.n_nodes))
        a[self.edge_dst, self.edge_src] = 1.0
        return a

    def degree(self, i):
        return len(self.neighbors[i])

    def permuted(self, perm):
        """Relabel nodes: new id of old node i is perm[i]."""
        perm = np.asarray(perm)
        edges = [(perm[i], perm[j]) for i, j in self.edges]
        return NetworkGraph(self.n_nodes, edges)


class _BatchGraph:
    """Block-diagonal stack of graphs; carries only what the layers read."""

    def __init__(self, n_nodes, edge_src, edge_dst):
        self.n_nodes = n_nodes
        self.edge_src = edge_src
        self.edge_dst = edge_dst
        loops = np.arange(n_nodes, dtype=np.intp)
        self.loop_src = np.concatenate([edge_src, loops])
        self.loop_dst = np.concatenate([edge_dst, loops])
        self._csr = None

    def csr(self):
        if self._csr is None:
            self._csr = _edge_csr(self.n_nodes, self.edge_src, self.edge_dst)
        return self._csr


def disjoint_union(graphs):
    """Stack graphs into one block graph; returns (graph, node offsets)."""
    offsets = np.cumsum([0] + [g.n_nodes for g in graphs])
    src = np.concatenate([g.edge_src + off for g, off in zip(graphs, offsets[:-1])])
    dst = np.concatenate([g.edge_dst + off for g, off in zip(graphs, offsets[:-1])])
    return _BatchGraph(int(offsets[-1]), src, dst), offsets
