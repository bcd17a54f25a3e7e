"""Top-k node pooling and the CLS-token graph transformer head.

Pooling scores every node with a learned vector, keeps the n_keep
best-scoring nodes (ties to the smaller index), gates the kept rows by
the sigmoid of their score, and zero-pads up to the fixed budget. Padded
rows carry mask=False and are excluded from every attention softmax, so
they cannot influence real tokens.

The transformer is pre-norm residual: attention and MLP blocks each read
a layer-normalized copy of their input and add back onto the stream.
There is no positional encoding; token order is immaterial, which the
tests rely on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numcore import (
    ShapeError,
    Tensor,
    add,
    add_constant,
    add_rowvec,
    concat_cols,
    concat_rows,
    gather_rows,
    layer_norm,
    matmul,
    mul_colvec,
    relu,
    scale,
    sigmoid,
    slice_rows,
    softmax_rows,
    transpose,
)
from .gcn import glorot_uniform


@dataclass
class PoolParams:
    score_weight: Tensor  # (d, 1)
    n_keep: int = 100

    def named(self) -> dict[str, Tensor]:
        return {"pool.score": self.score_weight}


def init_pool_params(rng: np.random.Generator, dim: int, n_keep: int = 100) -> PoolParams:
    if n_keep < 1:
        raise ValueError(f"n_keep must be >= 1, got {n_keep}")
    return PoolParams(
        score_weight=Tensor(glorot_uniform(rng, dim, 1), requires_grad=True),
        n_keep=n_keep,
    )


def topk_pool(h: Tensor, params: PoolParams) -> tuple[Tensor, np.ndarray]:
    """Reduce N rows to exactly n_keep gated rows plus a validity mask.

    Rows come out in descending score order. When N < n_keep the result
    is padded with zero rows and mask False entries.
    """
    if h.cols != params.score_weight.rows:
        raise ShapeError(
            f"width {h.cols} does not match scorer dim {params.score_weight.rows}"
        )
    scores = matmul(h, params.score_weight)  # (N, 1)
    values = scores.data[:, 0]
    order = np.lexsort((np.arange(h.rows), -values))
    keep = order[: min(h.rows, params.n_keep)]

    gated = mul_colvec(gather_rows(h, keep), gather_rows(sigmoid(scores), keep))
    n_kept = len(keep)
    mask = np.zeros(params.n_keep, dtype=bool)
    mask[:n_kept] = True
    if n_kept < params.n_keep:
        padding = Tensor(np.zeros((params.n_keep - n_kept, h.cols)))
        gated = concat_rows([gated, padding])
    return gated, mask


@dataclass
class AttentionHeadParams:
    wq: Tensor  # (d, d_k)
    wk: Tensor
    wv: Tensor


@dataclass
class TransformerLayerParams:
    heads: list[AttentionHeadParams]
    wo: Tensor  # (d, d)
    ln1_gamma: Tensor
    ln1_beta: Tensor
    ln2_gamma: Tensor
    ln2_beta: Tensor
    mlp_w1: Tensor  # (d, 4d)
    mlp_b1: Tensor
    mlp_w2: Tensor  # (4d, d)
    mlp_b2: Tensor


@dataclass
class TransformerParams:
    layers: list[TransformerLayerParams]
    cls_token: Tensor  # (1, d)
    head: list[Tensor]  # [w1 (d, d), b1, w2 (d, C), b2]
    n_heads: int
    model_dim: int

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    def named(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {"cls": self.cls_token}
        for li, layer in enumerate(self.layers):
            for hi, head in enumerate(layer.heads):
                out[f"tf.{li}.h{hi}.wq"] = head.wq
                out[f"tf.{li}.h{hi}.wk"] = head.wk
                out[f"tf.{li}.h{hi}.wv"] = head.wv
            out[f"tf.{li}.wo"] = layer.wo
            out[f"tf.{li}.ln1.g"] = layer.ln1_gamma
            out[f"tf.{li}.ln1.b"] = layer.ln1_beta
            out[f"tf.{li}.ln2.g"] = layer.ln2_gamma
            out[f"tf.{li}.ln2.b"] = layer.ln2_beta
            out[f"tf.{li}.mlp.w1"] = layer.mlp_w1
            out[f"tf.{li}.mlp.b1"] = layer.mlp_b1
            out[f"tf.{li}.mlp.w2"] = layer.mlp_w2
            out[f"tf.{li}.mlp.b2"] = layer.mlp_b2
        for i, t in enumerate(self.head):
            out[f"head.{i}"] = t
        return out


def init_transformer_params(
    rng: np.random.Generator,
    n_layers: int = 2,
    n_heads: int = 4,
    model_dim: int = 128,
    n_classes: int = 5,
) -> TransformerParams:
    if model_dim % n_heads != 0:
        raise ValueError(f"model_dim {model_dim} not divisible by {n_heads} heads")
    d_k = model_dim // n_heads

    def param(fan_in, fan_out):
        return Tensor(glorot_uniform(rng, fan_in, fan_out), requires_grad=True)

    def zeros(fan_out):
        return Tensor(np.zeros((1, fan_out)), requires_grad=True)

    layers = []
    for _ in range(n_layers):
        heads = [
            AttentionHeadParams(
                wq=param(model_dim, d_k), wk=param(model_dim, d_k), wv=param(model_dim, d_k)
            )
            for _ in range(n_heads)
        ]
        layers.append(
            TransformerLayerParams(
                heads=heads,
                wo=param(model_dim, model_dim),
                ln1_gamma=Tensor(np.ones((1, model_dim)), requires_grad=True),
                ln1_beta=zeros(model_dim),
                ln2_gamma=Tensor(np.ones((1, model_dim)), requires_grad=True),
                ln2_beta=zeros(model_dim),
                mlp_w1=param(model_dim, 4 * model_dim),
                mlp_b1=zeros(4 * model_dim),
                mlp_w2=param(4 * model_dim, model_dim),
                mlp_b2=zeros(model_dim),
            )
        )
    head = [
        param(model_dim, model_dim),
        zeros(model_dim),
        param(model_dim, n_classes),
        zeros(n_classes),
    ]
    cls = Tensor(rng.normal(0.0, 0.02, size=(1, model_dim)), requires_grad=True)
    return TransformerParams(
        layers=layers, cls_token=cls, head=head, n_heads=n_heads, model_dim=model_dim
    )


def _mask_bias(mask: np.ndarray, n_tokens: int) -> np.ndarray:
    """(T, T) additive bias: -inf on masked key columns, 0 elsewhere."""
    bias_row = np.where(np.asarray(mask, dtype=bool), 0.0, -np.inf)
    return np.broadcast_to(bias_row, (n_tokens, n_tokens)).copy()


def mha(t: Tensor, layer: TransformerLayerParams, mask: np.ndarray) -> Tensor:
    """Multi-head scaled dot-product attention with masked key columns."""
    if len(mask) != t.rows:
        raise ShapeError(f"mask length {len(mask)} does not match {t.rows} tokens")
    d_k = layer.heads[0].wq.cols
    bias = _mask_bias(mask, t.rows)
    outputs = []
    for head in layer.heads:
        q = matmul(t, head.wq)
        k = matmul(t, head.wk)
        v = matmul(t, head.wv)
        logits = scale(matmul(q, transpose(k)), 1.0 / np.sqrt(d_k))
        attn = softmax_rows(add_constant(logits, bias))
        outputs.append(matmul(attn, v))
    return matmul(concat_cols(outputs), layer.wo)


def _mlp(t: Tensor, layer: TransformerLayerParams) -> Tensor:
    hidden = relu(add_rowvec(matmul(t, layer.mlp_w1), layer.mlp_b1))
    return add_rowvec(matmul(hidden, layer.mlp_w2), layer.mlp_b2)


def transformer_layer(t_prev: Tensor, layer: TransformerLayerParams, mask: np.ndarray) -> Tensor:
    attended = add(mha(layer_norm(t_prev, layer.ln1_gamma, layer.ln1_beta), layer, mask), t_prev)
    return add(_mlp(layer_norm(attended, layer.ln2_gamma, layer.ln2_beta), layer), attended)


def classify(h_pool: Tensor, mask: np.ndarray, params: TransformerParams) -> Tensor:
    """Prepend the CLS token, run the layer stack, read logits off CLS."""
    if h_pool.cols != params.model_dim:
        raise ShapeError(f"pooled width {h_pool.cols} != model dim {params.model_dim}")
    t = concat_rows([params.cls_token, h_pool])
    full_mask = np.concatenate(([True], np.asarray(mask, dtype=bool)))
    if not full_mask.all():
        # A masked token is excluded from every attention softmax and all
        # other ops are row-local, so masked rows cannot influence any
        # unmasked row; dropping them up front is exact and avoids
        # spending attention compute on padding.
        t = gather_rows(t, np.flatnonzero(full_mask))
        full_mask = np.ones(t.rows, dtype=bool)
    for layer in params.layers:
        t = transformer_layer(t, layer, full_mask)
    cls_out = slice_rows(t, 0, 1)
    w1, b1, w2, b2 = params.head
    hidden = relu(add_rowvec(matmul(cls_out, w1), b1))
    return add_rowvec(matmul(hidden, w2), b2)
