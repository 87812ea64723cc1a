import numpy as np
import pytest

from vwsd import autodiff as ad
from vwsd.autodiff import Tensor, grad_check, mean_over_axis, reshape
from vwsd.errors import ConfigError, DimensionError
from vwsd.rng import Rng
from vwsd.vision_encoder import (
    VisionEncoderConfig,
    _roll,
    encode_image,
    encode_image_vit,
    init_vision_params,
    patch_embed,
    patch_merge,
    window_attention_block,
)

TINY = dict(patch_size=2, embed_dim=4, num_stages=2, blocks_per_stage=1,
            window_size=2, num_heads=2, image_size=8)


def _rand_img(rng, side=32, batch=1):
    return rng.uniforms(batch * side * side).reshape(batch, side, side)


# ---------------------------------------------------------------------------
# numpy oracle for one pre-norm block with dense (global) attention
# ---------------------------------------------------------------------------

def _np_layer_norm(x, g, b, eps=1e-5):
    mu = x.mean(-1, keepdims=True)
    var = ((x - mu) ** 2).mean(-1, keepdims=True)
    return g * (x - mu) / np.sqrt(var + eps) + b


def _np_gelu(x):
    c = np.sqrt(2.0 / np.pi)
    return 0.5 * x * (1 + np.tanh(c * (x + 0.044715 * x ** 3)))


def _np_block(x, p, prefix, heads):
    def w(name):
        return p[f"{prefix}.{name}"].data

    h = _np_layer_norm(x, w("ln1.g"), w("ln1.b"))
    n, d = h.shape
    dh = d // heads
    q = (h @ w("attn.wq.w") + w("attn.wq.b")).reshape(n, heads, dh).transpose(1, 0, 2)
    k = (h @ w("attn.wk.w")).reshape(n, heads, dh).transpose(1, 0, 2)
    v = (h @ w("attn.wv.w") + w("attn.wv.b")).reshape(n, heads, dh).transpose(1, 0, 2)
    scores = q @ k.transpose(0, 2, 1) / np.sqrt(dh)
    e = np.exp(scores - scores.max(-1, keepdims=True))
    att = e / e.sum(-1, keepdims=True)
    out = (att @ v).transpose(1, 0, 2).reshape(n, d)
    x = x + out @ w("attn.wo.w") + w("attn.wo.b")
    h = _np_layer_norm(x, w("ln2.g"), w("ln2.b"))
    x = x + _np_gelu(h @ w("mlp.fc1.w") + w("mlp.fc1.b")) @ w("mlp.fc2.w") + w("mlp.fc2.b")
    return x


# ---------------------------------------------------------------------------
# patch embedding
# ---------------------------------------------------------------------------

def test_patch_embed_token_grid_shape():
    config = VisionEncoderConfig()
    params = init_vision_params(config, Rng(0))
    tokens = patch_embed(_rand_img(Rng(1)), params, config)
    assert tokens.shape == (1, 8, 8, 32)  # 64 tokens of dim 32


def test_patch_embed_constant_image_gives_identical_tokens():
    config = VisionEncoderConfig()
    params = init_vision_params(config, Rng(0))
    params["vision.pos_emb"].data[:] = 0.0
    tokens = patch_embed(np.full((1, 32, 32), 0.37), params, config).data
    flat = tokens.reshape(64, 32)
    assert np.array_equal(flat, np.broadcast_to(flat[0], flat.shape))


def test_patch_embed_rejects_indivisible():
    config = VisionEncoderConfig()
    params = init_vision_params(config, Rng(0))
    with pytest.raises(DimensionError):
        patch_embed(np.zeros((1, 30, 32)), params, config)


def test_patch_embed_gradients():
    config = VisionEncoderConfig(**TINY)
    params = init_vision_params(config, Rng(3))
    img = _rand_img(Rng(4), side=8)
    probe = ad.constant(Rng(5).normals(4 * 4 * 4).reshape(1, 4, 4, 4))
    subset = {k: params[k] for k in ["vision.patch.w", "vision.patch.b", "vision.pos_emb"]}

    def f():
        out = ad.mul(patch_embed(img, params, config), probe)
        return mean_over_axis(reshape(out, (out.size,)), 0)

    assert grad_check(f, subset, h=1e-6, tol=1e-6).passed


# ---------------------------------------------------------------------------
# window attention
# ---------------------------------------------------------------------------

def test_single_window_equals_global_attention_oracle():
    config = VisionEncoderConfig(patch_size=4, embed_dim=8, num_stages=1,
                                 blocks_per_stage=1, window_size=4, num_heads=2,
                                 image_size=16)
    params = init_vision_params(config, Rng(7))
    tokens = Rng(8).normals(16 * 8).reshape(1, 4, 4, 8)
    got = window_attention_block(Tensor(tokens), False, params, "vision.s0.b0",
                                 config, window_size=4).data
    expected = _np_block(tokens.reshape(16, 8), params, "vision.s0.b0", heads=2)
    assert np.allclose(got.reshape(16, 8), expected, atol=1e-12)


def test_window_independence_unshifted():
    config = VisionEncoderConfig()
    params = init_vision_params(config, Rng(11))
    base = Rng(12).normals(64 * 32).reshape(1, 8, 8, 32)
    poked = base.copy()
    poked[0, 0, 0, :] += 5.0  # token inside window (0, 0)
    out_a = window_attention_block(Tensor(base), False, params, "vision.s0.b0", config).data
    out_b = window_attention_block(Tensor(poked), False, params, "vision.s0.b0", config).data
    # windows are 4x4: the (0,0) window changes, all others are untouched bits
    assert not np.allclose(out_a[0, :4, :4], out_b[0, :4, :4])
    assert np.array_equal(out_a[0, :, 4:], out_b[0, :, 4:])
    assert np.array_equal(out_a[0, 4:, :4], out_b[0, 4:, :4])


def test_cyclic_shift_roundtrip_identity():
    x = Tensor(Rng(13).normals(2 * 6 * 6 * 3).reshape(2, 6, 6, 3))
    rolled = _roll(_roll(x, -2, 1), -2, 2)
    restored = _roll(_roll(rolled, 2, 1), 2, 2)
    assert np.array_equal(restored.data, x.data)
    assert np.array_equal(np.roll(x.data, -2, axis=1), _roll(x, -2, 1).data)


def test_shifted_block_on_single_window_matches_unshifted():
    # cyclic shift inside one window is a permutation attention cannot see
    config = VisionEncoderConfig(patch_size=4, embed_dim=8, num_stages=1,
                                 blocks_per_stage=2, window_size=4, num_heads=2,
                                 image_size=16)
    params = init_vision_params(config, Rng(17))
    tokens = Tensor(Rng(18).normals(16 * 8).reshape(1, 4, 4, 8))
    out_shift = window_attention_block(tokens, True, params, "vision.s0.b0", config).data
    out_plain = window_attention_block(tokens, False, params, "vision.s0.b0", config).data
    assert np.allclose(out_shift, out_plain, atol=1e-12)


# ---------------------------------------------------------------------------
# patch merging
# ---------------------------------------------------------------------------

def test_patch_merge_shapes():
    params = {}
    from vwsd import blocks
    blocks.linear_params(params, "m", 4 * 32, 64, Rng(19))
    out = patch_merge(Tensor(np.zeros((1, 8, 8, 32))), params, "m")
    assert out.shape == (1, 4, 4, 64)
    params2 = {}
    blocks.linear_params(params2, "m", 4 * 5, 10, Rng(20))
    out2 = patch_merge(Tensor(np.zeros((1, 2, 2, 5))), params2, "m")
    assert out2.shape == (1, 1, 1, 10)


def test_patch_merge_constant_grid_stays_constant():
    from vwsd import blocks
    params = {}
    blocks.linear_params(params, "m", 12, 6, Rng(21))
    grid = np.full((1, 4, 4, 3), 0.25)
    merged = patch_merge(Tensor(grid), params, "m").data
    flat = merged.reshape(4, 6)
    assert np.allclose(flat, flat[0], atol=0)


def test_patch_merge_rejects_odd_side():
    from vwsd import blocks
    params = {}
    blocks.linear_params(params, "m", 12, 6, Rng(22))
    with pytest.raises(DimensionError):
        patch_merge(Tensor(np.zeros((1, 3, 3, 3))), params, "m")


# ---------------------------------------------------------------------------
# full encoders
# ---------------------------------------------------------------------------

def test_encode_image_default_dim():
    config = VisionEncoderConfig()
    params = init_vision_params(config, Rng(23))
    out = encode_image(_rand_img(Rng(24), batch=2), params, config)
    assert out.shape == (2, 64)  # embed_dim doubled once by the merge
    assert np.isfinite(out.data).all()


def test_encode_image_hierarchy_arithmetic():
    config = VisionEncoderConfig()
    assert config.grid_side(0) == 8 and config.grid_side(1) == 4
    assert config.stage_dim(0) == 32 and config.stage_dim(1) == 64
    assert config.out_dim == 64


def test_encode_image_deterministic():
    config = VisionEncoderConfig()
    params = init_vision_params(config, Rng(25))
    img = _rand_img(Rng(26))
    assert np.array_equal(encode_image(img, params, config).data,
                          encode_image(img, params, config).data)


def test_encode_image_vit_dim_no_doubling():
    config = VisionEncoderConfig()
    params = init_vision_params(config, Rng(27), variant="vit")
    out = encode_image_vit(_rand_img(Rng(28)), params, config)
    assert out.shape == (1, 32)


def test_vit_config_rejects_unknown_variant():
    with pytest.raises(ConfigError):
        init_vision_params(VisionEncoderConfig(), Rng(0), variant="resnet")


def test_window_config_validation():
    with pytest.raises(ConfigError):
        VisionEncoderConfig(patch_size=4, window_size=3, image_size=32)
    with pytest.raises(ConfigError):
        VisionEncoderConfig(image_size=30)


def test_encode_image_gradients():
    config = VisionEncoderConfig(**TINY)
    params = init_vision_params(config, Rng(103))
    img = _rand_img(Rng(203), side=8)
    probe = ad.constant(Rng(303).normals(config.out_dim).reshape(1, config.out_dim))

    def f():
        out = ad.mul(encode_image(img, params, config), probe)
        return mean_over_axis(reshape(out, (out.size,)), 0)

    report = grad_check(f, params, h=3e-6, tol=1e-6)
    assert report.passed, report.max_rel_err


def test_encode_image_vit_gradients():
    config = VisionEncoderConfig(**TINY)
    params = init_vision_params(config, Rng(110), variant="vit")
    img = _rand_img(Rng(210), side=8)
    probe = ad.constant(Rng(310).normals(4).reshape(1, 4))

    def f():
        out = ad.mul(encode_image_vit(img, params, config), probe)
        return mean_over_axis(reshape(out, (out.size,)), 0)

    report = grad_check(f, params, h=3e-6, tol=1e-6)
    assert report.passed, report.max_rel_err
