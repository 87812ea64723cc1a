"""Per-sample candidate graph and the graph-convolution pass.

Each sample's fused (context, candidate) vectors become the nodes of one
small graph; a symmetric-normalized adjacency with self-loops mixes
neighbor features so candidates can be scored relative to each other.
Graph construction is non-differentiable (the adjacency is a constant);
gradients flow through node features only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, DimensionError
from .rng import Rng


@dataclass
class CandidateGraph:
    """Node features (n, d) plus a symmetric 0/1 adjacency with zero diagonal."""

    features: Tensor
    adjacency: np.ndarray

    def __post_init__(self):
        self.features = ad.as_tensor(self.features)
        a = np.asarray(self.adjacency, dtype=float)
        n = self.features.shape[0]
        if a.shape != (n, n):
            raise DimensionError(f"adjacency {a.shape} does not match {n} nodes")
        if not np.array_equal(a, a.T):
            raise DimensionError("adjacency must be symmetric")
        if not np.isin(a, (0.0, 1.0)).all():
            raise DimensionError("adjacency entries must be 0 or 1")
        if np.trace(a) != 0:
            raise DimensionError("adjacency diagonal must be zero before self-loops")
        self.adjacency = a

    @property
    def n_nodes(self) -> int:
        return self.features.shape[0]


def knn_adjacency(features: np.ndarray, k: int) -> np.ndarray:
    """Union-symmetrized k-highest-dot-product neighbors, ties to lower index."""
    n = features.shape[0]
    sims = features @ features.T
    adj = np.zeros((n, n))
    order = np.arange(n)
    for u in range(n):
        candidates = [v for v in order if v != u]
        candidates.sort(key=lambda v: (-sims[u, v], v))
        for v in candidates[:k]:
            adj[u, v] = adj[v, u] = 1.0
    return adj


def build_candidate_graph(fused, mode: str = "full", k: int | None = None) -> CandidateGraph:
    """Fused features (n, d) -> graph; `full` connects all pairs, `knn` by dot product."""
    features = ad.as_tensor(fused)
    if features.ndim != 2 or features.shape[0] == 0:
        raise DimensionError(f"build_candidate_graph: features must be (n, d), got {features.shape}")
    n = features.shape[0]
    if mode == "full":
        adjacency = np.ones((n, n)) - np.eye(n)
    elif mode == "knn":
        if k is None or not 1 <= k < n:
            raise ConfigError(f"knn graph needs 1 <= k < {n}, got {k}")
        adjacency = knn_adjacency(features.data, k)
    else:
        raise ConfigError(f"unknown graph mode {mode!r}")
    return CandidateGraph(features=features, adjacency=adjacency)


def normalized_adjacency(adjacency: np.ndarray) -> np.ndarray:
    """D^{-1/2} (A + I) D^{-1/2} with D the self-loop-augmented degree diagonal.

    Computed as a_hat_kj / sqrt(d_k d_j) in one rounding step per entry, the
    same form the per-node oracle uses.
    """
    a_hat = adjacency + np.eye(adjacency.shape[0])
    degrees = a_hat.sum(axis=1)
    return a_hat / np.sqrt(np.outer(degrees, degrees))


@dataclass
class GcnParams:
    weight: Tensor
    bias: Tensor
    num_layers: int = 1
    activation: str = "relu"  # relu | identity

    def __post_init__(self):
        if self.activation not in ("relu", "identity"):
            raise ConfigError(f"unknown gcn activation {self.activation!r}")
        if self.num_layers > 1 and self.weight.shape[0] != self.weight.shape[1]:
            raise ConfigError("stacked gcn layers share one weight; it must be square")


def init_gcn_params(d_in: int, rng: Rng, d_out: int | None = None,
                    num_layers: int = 1) -> GcnParams:
    d_out = d_in if d_out is None else d_out
    weight = ad.parameter((1.0 / np.sqrt(d_in)) * rng.child("gcn", "w").normals(
        d_in * d_out).reshape(d_in, d_out))
    bias = ad.parameter(np.zeros(d_out))
    return GcnParams(weight=weight, bias=bias, num_layers=num_layers)


def propagate(features: Tensor, norm_adj: np.ndarray, params: GcnParams) -> Tensor:
    """act(S H W + b), `num_layers` times; S may carry leading batch dims."""
    h = features
    s = ad.constant(norm_adj)
    for _ in range(params.num_layers):
        h = ad.add(ad.matmul(ad.matmul(s, h), params.weight), params.bias)
        if params.activation == "relu":
            h = ad.relu(h)
    return h


def gcn_layer(graph: CandidateGraph, params: GcnParams) -> Tensor:
    if graph.features.shape[1] != params.weight.shape[0]:
        raise DimensionError(
            f"gcn_layer: feature dim {graph.features.shape[1]} does not match "
            f"weight {tuple(params.weight.shape)}")
    return propagate(graph.features, normalized_adjacency(graph.adjacency), params)


def gcn_bypass(graph: CandidateGraph) -> Tensor:
    """Identity pass-through so downstream dimensions stay valid when ablated."""
    return graph.features
