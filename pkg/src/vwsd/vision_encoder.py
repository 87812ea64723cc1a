"""Hierarchical windowed-attention image encoder (plus a flat global variant).

Images are cut into non-overlapping patches, linearly projected, then run
through stages of window-local attention blocks; every second block shifts
the window grid cyclically by half a window so information crosses window
borders. Between stages, 2x2 token neighborhoods are merged (side halves,
width doubles). The flat variant keeps one resolution and attends globally;
it exists for the encoder-swap experiment.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import blocks
from .autodiff import Tensor
from .errors import ConfigError, DimensionError
from .rng import Rng


@dataclass
class VisionEncoderConfig:
    patch_size: int = 4
    embed_dim: int = 32
    num_stages: int = 2
    blocks_per_stage: int = 2
    window_size: int = 4
    num_heads: int = 4
    image_size: int = 32

    def __post_init__(self):
        if self.embed_dim % self.num_heads:
            raise ConfigError(
                f"embed_dim {self.embed_dim} not divisible by num_heads {self.num_heads}")
        divisor = self.patch_size * 2 ** (self.num_stages - 1)
        if self.image_size % divisor:
            raise ConfigError(
                f"image_size {self.image_size} not divisible by patch_size * 2^(stages-1) = {divisor}")
        for stage in range(self.num_stages):
            side = self.grid_side(stage)
            if side % self.window_size and self.window_size < side:
                raise ConfigError(
                    f"window_size {self.window_size} does not divide stage-{stage} grid side {side}")

    def grid_side(self, stage: int = 0) -> int:
        return self.image_size // self.patch_size // 2 ** stage

    def stage_dim(self, stage: int) -> int:
        return self.embed_dim * 2 ** stage

    @property
    def out_dim(self) -> int:
        return self.stage_dim(self.num_stages - 1)


def init_vision_params(config: VisionEncoderConfig, rng: Rng, variant: str = "swin",
                       prefix: str = "vision") -> dict[str, Tensor]:
    g = config.grid_side(0)
    d = config.embed_dim
    params: dict[str, Tensor] = {}
    blocks.linear_params(params, f"{prefix}.patch", config.patch_size ** 2, d,
                         rng.child(prefix, "patch"))
    params[f"{prefix}.pos_emb"] = blocks.normal_param(
        rng.child(prefix, "pos_emb"), (g, g, d), 0.1)
    if variant == "swin":
        for s in range(config.num_stages):
            ds = config.stage_dim(s)
            for b in range(config.blocks_per_stage):
                blocks.block_params(params, f"{prefix}.s{s}.b{b}", ds, ds,
                                    rng.child(prefix, f"s{s}.b{b}"))
            if s + 1 < config.num_stages:
                blocks.linear_params(params, f"{prefix}.merge{s}", 4 * ds, 2 * ds,
                                     rng.child(prefix, f"merge{s}"))
        blocks.norm_params(params, f"{prefix}.ln_f", config.out_dim)
    elif variant == "vit":
        for i in range(config.num_stages * config.blocks_per_stage):
            blocks.block_params(params, f"{prefix}.blk{i}", d, d,
                                rng.child(prefix, f"blk{i}"))
        blocks.norm_params(params, f"{prefix}.ln_f", d)
    else:
        raise ConfigError(f"unknown vision variant {variant!r}")
    return params


def patch_embed(imgs, params: dict, config: VisionEncoderConfig,
                prefix: str = "vision") -> Tensor:
    """Images (B, H, W) -> patch token grid (B, g, g, d) with positions added."""
    imgs = ad.as_tensor(imgs)
    if imgs.ndim == 2:
        imgs = ad.reshape(imgs, (1,) + imgs.shape)
    B, H, W = imgs.shape
    p = config.patch_size
    if H % p or W % p:
        raise DimensionError(f"patch_embed: image {H}x{W} not divisible by patch size {p}")
    gh, gw = H // p, W // p
    x = ad.reshape(imgs, (B, gh, p, gw, p))
    x = ad.transpose(x, (0, 1, 3, 2, 4))
    x = ad.reshape(x, (B, gh, gw, p * p))
    x = blocks.linear(x, params, f"{prefix}.patch")
    return ad.add(x, params[f"{prefix}.pos_emb"])


def _roll(x: Tensor, shift: int, axis: int) -> Tensor:
    """Cyclic shift along one axis, composed from transpose/slice/concat."""
    n = x.shape[axis]
    shift %= n
    if shift == 0:
        return x
    perm = [i for i in range(x.ndim) if i != axis] + [axis]
    moved = ad.transpose(x, perm)
    tail = ad.slice_axis(moved, n - shift, n)
    head = ad.slice_axis(moved, 0, n - shift)
    rolled = ad.concat_last([tail, head])
    inverse = np.argsort(perm)
    return ad.transpose(rolled, inverse)


def window_attention_block(tokens: Tensor, shifted: bool, params: dict, prefix: str,
                           config: VisionEncoderConfig, window_size: int | None = None,
                           num_heads: int | None = None) -> Tensor:
    """One pre-norm block with attention restricted to window_size^2 windows."""
    B, g, g2, d = tokens.shape
    if g != g2:
        raise DimensionError(f"window_attention_block: grid must be square, got {tokens.shape}")
    w = window_size if window_size is not None else min(config.window_size, g)
    heads = num_heads if num_heads is not None else config.num_heads
    if g % w:
        raise DimensionError(f"window_attention_block: window {w} does not divide grid side {g}")

    x = tokens
    if shifted:
        s = w // 2
        x = _roll(_roll(x, -s, 1), -s, 2)

    nw = g // w
    # partition into (B, nw*nw, w*w, d) windows
    x = ad.reshape(x, (B, nw, w, nw, w, d))
    x = ad.transpose(x, (0, 1, 3, 2, 4, 5))
    x = ad.reshape(x, (B, nw * nw, w * w, d))

    x = blocks.transformer_block(x, params, prefix, heads)

    x = ad.reshape(x, (B, nw, nw, w, w, d))
    x = ad.transpose(x, (0, 1, 3, 2, 4, 5))
    x = ad.reshape(x, (B, g, g, d))

    if shifted:
        s = w // 2
        x = _roll(_roll(x, s, 1), s, 2)
    return x


def patch_merge(tokens: Tensor, params: dict, prefix: str) -> Tensor:
    """Concatenate each 2x2 neighborhood and project 4d -> 2d; side halves."""
    B, g, g2, d = tokens.shape
    if g != g2 or g % 2:
        raise DimensionError(f"patch_merge: needs an even square grid, got {tokens.shape}")
    h = g // 2
    x = ad.reshape(tokens, (B, h, 2, h, 2, d))
    x = ad.transpose(x, (0, 1, 3, 2, 4, 5))
    x = ad.reshape(x, (B, h, h, 4 * d))
    return blocks.linear(x, params, prefix)


def _final_tokens(grid: Tensor, params: dict, prefix: str) -> Tensor:
    B, g, _, d = grid.shape
    x = blocks.norm(grid, params, f"{prefix}.ln_f")
    return ad.reshape(x, (B, g * g, d))


def encode_image_tokens(imgs, params: dict, config: VisionEncoderConfig,
                        prefix: str = "vision") -> Tensor:
    """Final-stage token sequence (B, tokens, out_dim) after the last norm."""
    x = patch_embed(imgs, params, config, prefix)
    for s in range(config.num_stages):
        for b in range(config.blocks_per_stage):
            x = window_attention_block(x, shifted=(b % 2 == 1), params=params,
                                       prefix=f"{prefix}.s{s}.b{b}", config=config)
        if s + 1 < config.num_stages:
            x = patch_merge(x, params, f"{prefix}.merge{s}")
    return _final_tokens(x, params, prefix)


def encode_image(imgs, params: dict, config: VisionEncoderConfig,
                 prefix: str = "vision") -> Tensor:
    """Images (B, H, W) -> embeddings (B, out_dim) through the windowed hierarchy."""
    return ad.mean_over_axis(encode_image_tokens(imgs, params, config, prefix), 1)


def encode_image_vit_tokens(imgs, params: dict, config: VisionEncoderConfig,
                            prefix: str = "vision") -> Tensor:
    """Flat-variant token sequence (B, tokens, embed_dim) after the last norm."""
    x = patch_embed(imgs, params, config, prefix)
    g = config.grid_side(0)
    for i in range(config.num_stages * config.blocks_per_stage):
        x = window_attention_block(x, shifted=False, params=params,
                                   prefix=f"{prefix}.blk{i}", config=config,
                                   window_size=g)
    return _final_tokens(x, params, prefix)


def encode_image_vit(imgs, params: dict, config: VisionEncoderConfig,
                     prefix: str = "vision") -> Tensor:
    """Flat variant: global attention at one resolution, no merging; (B, embed_dim)."""
    return ad.mean_over_axis(encode_image_vit_tokens(imgs, params, config, prefix), 1)
