"""Context-phrase encoder: token ids -> pooled embedding.

Whitespace tokens are looked up in a dataset-derived vocabulary (id 0 is
padding, id 1 unknown), embedded with learned positional embeddings, run
through pre-norm transformer blocks with padding keys masked out of
attention, and mean-pooled over the non-padding positions.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import blocks
from .autodiff import Tensor
from .errors import ConfigError, InputError
from .rng import Rng

PAD_ID = 0
UNK_ID = 1
PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"


class Vocabulary:
    """Dense token -> id map with reserved padding/unknown ids."""

    def __init__(self, tokens: list[str]):
        if tokens[:2] != [PAD_TOKEN, UNK_TOKEN]:
            tokens = [PAD_TOKEN, UNK_TOKEN] + list(tokens)
        self._tokens = tokens
        self._ids = {tok: i for i, tok in enumerate(tokens)}
        if len(self._ids) != len(tokens):
            raise InputError("vocabulary contains duplicate tokens")

    @classmethod
    def from_tokens(cls, tokens) -> "Vocabulary":
        ordered = sorted(set(tokens) - {PAD_TOKEN, UNK_TOKEN})
        return cls([PAD_TOKEN, UNK_TOKEN] + ordered)

    def id(self, token: str) -> int:
        return self._ids.get(token, UNK_ID)

    def token(self, idx: int) -> str:
        return self._tokens[idx]

    def __len__(self):
        return len(self._tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._ids

    def save(self, path) -> None:
        Path(path).write_text("\n".join(self._tokens) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        if lines[:2] != [PAD_TOKEN, UNK_TOKEN]:
            raise InputError(f"vocabulary file {path} lacks the reserved header lines")
        return cls(lines)


@dataclass
class TextEncoderConfig:
    embed_dim: int = 32
    num_layers: int = 2
    num_heads: int = 4
    mlp_hidden: int = 64
    max_len: int = 16

    def __post_init__(self):
        if self.embed_dim % self.num_heads:
            raise ConfigError(
                f"embed_dim {self.embed_dim} not divisible by num_heads {self.num_heads}")
        if self.max_len < 2:
            raise ConfigError(f"max_len must be >= 2, got {self.max_len}")


def tokenize(phrase: list[str], vocab: Vocabulary, max_len: int) -> tuple[np.ndarray, int]:
    """Phrase -> (ids padded/truncated to max_len, true length)."""
    if not phrase:
        raise InputError("tokenize: empty phrase")
    ids = [vocab.id(tok) for tok in phrase[:max_len]]
    length = len(ids)
    ids.extend([PAD_ID] * (max_len - length))
    return np.array(ids, dtype=np.int64), length


def init_text_params(config: TextEncoderConfig, vocab_size: int, rng: Rng,
                     prefix: str = "text") -> dict[str, Tensor]:
    d = config.embed_dim
    params: dict[str, Tensor] = {}
    params[f"{prefix}.tok_emb"] = blocks.normal_param(
        rng.child(prefix, "tok_emb"), (vocab_size, d), 0.5)
    params[f"{prefix}.pos_emb"] = blocks.normal_param(
        rng.child(prefix, "pos_emb"), (config.max_len, d), 0.1)
    for i in range(config.num_layers):
        blocks.block_params(params, f"{prefix}.blk{i}", d, config.mlp_hidden,
                            rng.child(prefix, f"blk{i}"))
    blocks.norm_params(params, f"{prefix}.ln_f", d)
    return params


def embed_tokens(ids: np.ndarray, params: dict, config: TextEncoderConfig,
                 prefix: str = "text") -> tuple[Tensor, np.ndarray]:
    """Token + positional embeddings only: (B, L, d) plus the padding mask."""
    ids = np.asarray(ids)
    if ids.ndim != 2:
        raise InputError(f"embed_tokens: expected (B, L) ids, got shape {ids.shape}")
    _, L = ids.shape
    if L > config.max_len:
        raise InputError(f"encode_text: sequence length {L} exceeds max_len {config.max_len}")
    mask = (ids != PAD_ID).astype(float)
    if (mask.sum(axis=1) < 1).any():
        raise InputError("encode_text: all-padding sequence")
    x = ad.embedding_lookup(params[f"{prefix}.tok_emb"], ids)
    pos = ad.slice_axis(params[f"{prefix}.pos_emb"], 0, L, axis=0)
    return ad.add(x, pos), mask


def encode_text_features(ids: np.ndarray, params: dict, config: TextEncoderConfig,
                         prefix: str = "text") -> tuple[Tensor, np.ndarray]:
    """Per-token features (B, L, d) after all blocks and the final norm, plus mask."""
    x, mask = embed_tokens(ids, params, config, prefix)
    bias = blocks.attention_mask_bias(mask)
    for i in range(config.num_layers):
        x = blocks.transformer_block(x, params, f"{prefix}.blk{i}", config.num_heads, bias)
    return blocks.norm(x, params, f"{prefix}.ln_f"), mask


def encode_text(ids: np.ndarray, params: dict, config: TextEncoderConfig,
                prefix: str = "text") -> Tensor:
    """Encode padded id rows (B, L) to embeddings (B, d).

    Padding ids (0) contribute neither to attention (key masking) nor to
    the mean pool, so adding padding never changes the output. A single
    (L,) row is accepted and returns a (d,) vector.
    """
    ids = np.asarray(ids)
    single = ids.ndim == 1
    if single:
        ids = ids[None, :]
    features, mask = encode_text_features(ids, params, config, prefix)
    pooled = blocks.masked_mean(features, mask)
    if single:
        pooled = ad.reshape(pooled, (config.embed_dim,))
    return pooled
