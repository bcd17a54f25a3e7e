"""Stacked graph-convolution layers producing node embeddings.

Each layer computes sigma(A_hat @ H @ W) with no bias term; ReLU is
applied between layers and the final layer is linear.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graphbuild import PatchGraph
from .numcore import ShapeError, Tensor, matmul, relu


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


@dataclass
class GcnParams:
    layer_weights: list[Tensor]
    dims: tuple[int, ...]

    @property
    def n_layers(self) -> int:
        return len(self.layer_weights)

    def named(self) -> dict[str, Tensor]:
        return {f"gcn.{i}.w": w for i, w in enumerate(self.layer_weights)}


def init_gcn_params(rng: np.random.Generator, dims: tuple[int, ...] = (64, 128, 128)) -> GcnParams:
    weights = [
        Tensor(glorot_uniform(rng, dims[i], dims[i + 1]), requires_grad=True)
        for i in range(len(dims) - 1)
    ]
    return GcnParams(layer_weights=weights, dims=tuple(dims))


def gcn_layer(h: Tensor, a_norm: Tensor, w: Tensor, apply_nonlin: bool = True) -> Tensor:
    z = matmul(matmul(a_norm, h), w)
    return relu(z) if apply_nonlin else z


def gcn_embed(features: Tensor, a_norm: Tensor, params: GcnParams) -> Tensor:
    """Run the layer stack on explicit feature / adjacency tensors."""
    if features.cols != params.dims[0]:
        raise ShapeError(
            f"feature width {features.cols} does not match input dim {params.dims[0]}"
        )
    h = features
    last = params.n_layers - 1
    for i, w in enumerate(params.layer_weights):
        h = gcn_layer(h, a_norm, w, apply_nonlin=i < last)
    return h


def gcn_forward(graph: PatchGraph, params: GcnParams) -> Tensor:
    return gcn_embed(Tensor(graph.features), Tensor(graph.adjacency_norm), params)
