"""Shared pre-norm transformer building blocks.

Both encoders and the early-fusion path are built from the same block:
multi-head self-attention and a GELU MLP, each behind a layer norm and a
residual connection. Everything here composes the closed autodiff
primitive set; parameters live in a flat name -> Tensor dict.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import DimensionError
from .rng import Rng

MASK_BIAS = -1e9  # additive score bias; exp() underflows to exactly 0.0


def normal_param(rng: Rng, shape: tuple, std: float) -> Tensor:
    n = int(np.prod(shape))
    return ad.parameter(std * rng.normals(n).reshape(shape))


def zeros_param(shape: tuple) -> Tensor:
    return ad.parameter(np.zeros(shape))


def ones_param(shape: tuple) -> Tensor:
    return ad.parameter(np.ones(shape))


def linear_params(params: dict, name: str, d_in: int, d_out: int, rng: Rng,
                  bias: bool = True) -> None:
    params[f"{name}.w"] = normal_param(rng.child(name, "w"), (d_in, d_out), 1.0 / np.sqrt(d_in))
    if bias:
        params[f"{name}.b"] = zeros_param((d_out,))


def linear(x: Tensor, params: dict, name: str) -> Tensor:
    out = ad.matmul(x, params[f"{name}.w"])
    b = params.get(f"{name}.b")
    return ad.add(out, b) if b is not None else out


def norm_params(params: dict, name: str, d: int) -> None:
    params[f"{name}.g"] = ones_param((d,))
    params[f"{name}.b"] = zeros_param((d,))


def norm(x: Tensor, params: dict, name: str) -> Tensor:
    return ad.layer_norm_last(x, params[f"{name}.g"], params[f"{name}.b"])


def block_params(params: dict, prefix: str, d: int, mlp_hidden: int, rng: Rng) -> None:
    norm_params(params, f"{prefix}.ln1", d)
    for proj in ("wq", "wv", "wo"):
        linear_params(params, f"{prefix}.attn.{proj}", d, d, rng)
    # no key bias: a constant shift on every key cancels inside the softmax
    linear_params(params, f"{prefix}.attn.wk", d, d, rng, bias=False)
    norm_params(params, f"{prefix}.ln2", d)
    linear_params(params, f"{prefix}.mlp.fc1", d, mlp_hidden, rng)
    linear_params(params, f"{prefix}.mlp.fc2", mlp_hidden, d, rng)


def self_attention(x: Tensor, params: dict, prefix: str, num_heads: int,
                   mask_bias: Tensor | None = None) -> Tensor:
    """Multi-head self-attention over the second-to-last axis of x (*batch, N, d)."""
    *lead, n, d = x.shape
    if d % num_heads:
        raise DimensionError(f"attention: dim {d} not divisible by {num_heads} heads")
    dh = d // num_heads
    heads_shape = tuple(lead) + (n, num_heads, dh)
    perm = tuple(range(len(lead))) + (len(lead) + 1, len(lead), len(lead) + 2)

    def split_heads(t):
        return ad.transpose(ad.reshape(t, heads_shape), perm)

    q = split_heads(linear(x, params, f"{prefix}.attn.wq"))
    k = split_heads(linear(x, params, f"{prefix}.attn.wk"))
    v = split_heads(linear(x, params, f"{prefix}.attn.wv"))

    scores = ad.scalar_mul(ad.matmul(q, ad.transpose(k)), 1.0 / np.sqrt(dh))
    if mask_bias is not None:
        scores = ad.add(scores, mask_bias)
    weights = ad.softmax_last(scores)
    attended = ad.transpose(ad.matmul(weights, v), perm)  # perm is its own inverse here
    merged = ad.reshape(attended, tuple(lead) + (n, d))
    return linear(merged, params, f"{prefix}.attn.wo")


def mlp(x: Tensor, params: dict, prefix: str) -> Tensor:
    return linear(ad.gelu(linear(x, params, f"{prefix}.mlp.fc1")), params, f"{prefix}.mlp.fc2")


def transformer_block(x: Tensor, params: dict, prefix: str, num_heads: int,
                      mask_bias: Tensor | None = None) -> Tensor:
    x = ad.add(x, self_attention(norm(x, params, f"{prefix}.ln1"), params, prefix,
                                 num_heads, mask_bias))
    return ad.add(x, mlp(norm(x, params, f"{prefix}.ln2"), params, prefix))


def attention_mask_bias(mask: np.ndarray) -> Tensor:
    """(B, N) keep-mask -> (B, 1, 1, N) additive key bias for attention scores."""
    bias = np.where(mask > 0, 0.0, MASK_BIAS)
    return ad.constant(bias[:, None, None, :])


def masked_mean(x: Tensor, mask: np.ndarray) -> Tensor:
    """Mean of x (B, N, d) over axis 1 restricted to mask (B, N) > 0 positions."""
    counts = mask.sum(axis=1)
    if (counts == 0).any():
        raise DimensionError("masked_mean: a row has no unmasked positions")
    kept = ad.mul(x, ad.constant(mask[:, :, None].astype(float)))
    raw = ad.mean_over_axis(kept, 1)
    rescale = (x.shape[1] / counts)[:, None]
    return ad.mul(raw, ad.constant(rescale))
