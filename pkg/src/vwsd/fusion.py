"""Modality projection and the three text/image combination strategies.

Every strategy first maps each modality through its own affine projection
to a common width. `late` concatenates the two pooled projections (the
default pipeline); `early` interleaves projected token sequences through a
small shared encoder; `cross_attention` lets each pooled vector attend over
the other modality's token sequence (single head) and concatenates the two
attended vectors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import blocks
from .autodiff import Tensor
from .errors import ConfigError, DimensionError, InputError
from .rng import Rng

STRATEGIES = ("late", "early", "cross_attention")


@dataclass
class FusionConfig:
    strategy: str = "late"
    proj_dim: int = 32
    early_blocks: int = 2
    early_heads: int = 4
    early_mlp_hidden: int = 64
    early_max_tokens: int = 96

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"fusion strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if self.proj_dim % self.early_heads:
            raise ConfigError(
                f"proj_dim {self.proj_dim} not divisible by early_heads {self.early_heads}")

    @property
    def fused_dim(self) -> int:
        return self.proj_dim if self.strategy == "early" else 2 * self.proj_dim


def init_fusion_params(config: FusionConfig, d_text: int, d_image: int, rng: Rng,
                       prefix: str = "fusion") -> dict[str, Tensor]:
    params: dict[str, Tensor] = {}
    blocks.linear_params(params, f"{prefix}.proj.text", d_text, config.proj_dim,
                         rng.child(prefix, "proj.text"))
    blocks.linear_params(params, f"{prefix}.proj.image", d_image, config.proj_dim,
                         rng.child(prefix, "proj.image"))
    if config.strategy == "early":
        params[f"{prefix}.type_emb"] = blocks.normal_param(
            rng.child(prefix, "type_emb"), (2, config.proj_dim), 0.1)
        for i in range(config.early_blocks):
            blocks.block_params(params, f"{prefix}.early.blk{i}", config.proj_dim,
                                config.early_mlp_hidden, rng.child(prefix, f"early.blk{i}"))
    elif config.strategy == "cross_attention":
        for side in ("t2i", "i2t"):
            for mat in ("wq", "wk", "wv"):
                blocks.linear_params(params, f"{prefix}.cross.{side}.{mat}",
                                     config.proj_dim, config.proj_dim,
                                     rng.child(prefix, f"cross.{side}.{mat}"), bias=False)
    return params


def project(u: Tensor, which: str, params: dict, prefix: str = "fusion") -> Tensor:
    """Affine map of a text/image embedding (leading dims free) to proj_dim."""
    if which not in ("text", "image"):
        raise ConfigError(f"unknown modality {which!r}")
    w = params[f"{prefix}.proj.{which}.w"]
    u = ad.as_tensor(u)
    if u.shape[-1] != w.shape[0]:
        raise DimensionError(
            f"project: {which} embedding has dim {u.shape[-1]}, expected {w.shape[0]}")
    return blocks.linear(u, params, f"{prefix}.proj.{which}")


def fuse_late(t: Tensor, i: Tensor) -> Tensor:
    """Concatenate projected text then projected image along the last axis."""
    t, i = ad.as_tensor(t), ad.as_tensor(i)
    if t.shape[-1] != i.shape[-1]:
        raise DimensionError(f"fuse_late: projected dims differ, {t.shape} vs {i.shape}")
    return ad.concat_last([t, i])


def _concat_tokens(a: Tensor, b: Tensor) -> Tensor:
    # concatenate along the token axis of (B, L, d) by moving it last
    joined = ad.concat_last([ad.transpose(a, (0, 2, 1)), ad.transpose(b, (0, 2, 1))])
    return ad.transpose(joined, (0, 2, 1))


def fuse_early(token_seq: Tensor, patch_seq: Tensor, params: dict, config: FusionConfig,
               text_mask: np.ndarray | None = None, prefix: str = "fusion") -> Tensor:
    """Joint encoding of both projected token sequences; returns (B, proj_dim).

    A learned modality-type embedding is added per token, the sequences are
    concatenated and run through the shared blocks, then mean-pooled (text
    padding masked throughout). Pooling happens directly on the block
    outputs, so zeroed-out blocks reduce this to the mean of the projected
    tokens.
    """
    token_seq, patch_seq = ad.as_tensor(token_seq), ad.as_tensor(patch_seq)
    B, lt, d = token_seq.shape
    _, lp, d2 = patch_seq.shape
    if d != d2 or d != config.proj_dim:
        raise DimensionError(
            f"fuse_early: sequences must share proj_dim {config.proj_dim}, got {d} and {d2}")
    if lt + lp > config.early_max_tokens:
        raise InputError(
            f"fuse_early: combined length {lt + lp} exceeds limit {config.early_max_tokens}")

    type_emb = params[f"{prefix}.type_emb"]
    text_side = ad.add(token_seq, ad.reshape(ad.slice_axis(type_emb, 0, 1, axis=0), (d,)))
    image_side = ad.add(patch_seq, ad.reshape(ad.slice_axis(type_emb, 1, 2, axis=0), (d,)))
    x = _concat_tokens(text_side, image_side)

    if text_mask is None:
        text_mask = np.ones((B, lt))
    mask = np.concatenate([text_mask, np.ones((B, lp))], axis=1)
    bias = blocks.attention_mask_bias(mask)
    for i in range(config.early_blocks):
        x = blocks.transformer_block(x, params, f"{prefix}.early.blk{i}",
                                     config.early_heads, bias)
    return blocks.masked_mean(x, mask)


def single_head_attention(query: Tensor, keys: Tensor, values: Tensor,
                          mask_bias: Tensor | None = None) -> tuple[Tensor, Tensor]:
    """(B, 1, d) query over (B, L, d) keys/values -> ((B, d) attended, (B, 1, L) weights)."""
    d = query.shape[-1]
    scores = ad.scalar_mul(ad.matmul(query, ad.transpose(keys)), 1.0 / np.sqrt(d))
    if mask_bias is not None:
        scores = ad.add(scores, mask_bias)
    weights = ad.softmax_last(scores)
    attended = ad.reshape(ad.matmul(weights, values), (query.shape[0], d))
    return attended, weights


def fuse_cross_attention(t_seq: Tensor, i_seq: Tensor, pooled_t: Tensor, pooled_i: Tensor,
                         params: dict, config: FusionConfig,
                         text_mask: np.ndarray | None = None,
                         prefix: str = "fusion") -> Tensor:
    """Pooled text attends over patches, pooled image over text tokens; concat (B, 2*proj_dim)."""
    t_seq, i_seq = ad.as_tensor(t_seq), ad.as_tensor(i_seq)
    pooled_t, pooled_i = ad.as_tensor(pooled_t), ad.as_tensor(pooled_i)
    B, lt, d = t_seq.shape
    if d != config.proj_dim or i_seq.shape[-1] != d or pooled_t.shape[-1] != d \
            or pooled_i.shape[-1] != d:
        raise DimensionError("fuse_cross_attention: all inputs must have proj_dim "
                             f"{config.proj_dim}")

    def side(name, query, seq, bias):
        q = ad.matmul(ad.reshape(query, (B, 1, d)), params[f"{prefix}.cross.{name}.wq.w"])
        k = ad.matmul(seq, params[f"{prefix}.cross.{name}.wk.w"])
        v = ad.matmul(seq, params[f"{prefix}.cross.{name}.wv.w"])
        attended, _ = single_head_attention(q, k, v, bias)
        return attended

    text_bias = None
    if text_mask is not None:
        text_bias = ad.constant(np.where(text_mask > 0, 0.0, blocks.MASK_BIAS)[:, None, :])
    attended_text = side("t2i", pooled_t, i_seq, None)
    attended_image = side("i2t", pooled_i, t_seq, text_bias)
    return ad.concat_last([attended_text, attended_image])
