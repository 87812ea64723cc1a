import numpy as np
import pytest

from vwsd import autodiff as ad
from vwsd.autodiff import Tensor, grad_check, mean_over_axis, reshape
from vwsd.errors import ConfigError, DimensionError, InputError
from vwsd.fusion import (
    FusionConfig,
    fuse_cross_attention,
    fuse_early,
    fuse_late,
    init_fusion_params,
    project,
    single_head_attention,
)
from vwsd.rng import Rng


def _scalar_probe(out, seed):
    probe = ad.constant(Rng(seed).normals(out.size).reshape(out.shape))
    return mean_over_axis(reshape(ad.mul(out, probe), (out.size,)), 0)


# ---------------------------------------------------------------------------
# projection
# ---------------------------------------------------------------------------

def test_project_identity_map():
    config = FusionConfig(proj_dim=4)
    params = init_fusion_params(config, d_text=4, d_image=4, rng=Rng(0))
    params["fusion.proj.text.w"].data[:] = np.eye(4)
    params["fusion.proj.text.b"].data[:] = 0.0
    u = Tensor([1.0, 2.0, 3.0, 4.0]).data.reshape(1, 4)
    out = project(Tensor(u), "text", params)
    assert np.array_equal(out.data, u)


def test_project_zero_matrix_gives_bias():
    config = FusionConfig(proj_dim=4)
    params = init_fusion_params(config, d_text=6, d_image=4, rng=Rng(1))
    params["fusion.proj.text.w"].data[:] = 0.0
    params["fusion.proj.text.b"].data[:] = [9.0, 8.0, 7.0, 6.0]
    out = project(Tensor(np.ones((3, 6))), "text", params)
    assert np.array_equal(out.data, np.tile([9.0, 8.0, 7.0, 6.0], (3, 1)))


def test_project_errors_name_modality():
    config = FusionConfig(proj_dim=4)
    params = init_fusion_params(config, d_text=6, d_image=8, rng=Rng(2))
    with pytest.raises(DimensionError, match="image"):
        project(Tensor(np.ones((2, 6))), "image", params)
    with pytest.raises(ConfigError):
        project(Tensor(np.ones((2, 6))), "audio", params)


def test_project_gradients():
    config = FusionConfig(proj_dim=4)
    params = init_fusion_params(config, d_text=5, d_image=4, rng=Rng(3))
    u = Rng(4).normals(10).reshape(2, 5)
    subset = {k: params[k] for k in ("fusion.proj.text.w", "fusion.proj.text.b")}
    report = grad_check(lambda: _scalar_probe(project(Tensor(u), "text", params), 5),
                        subset, h=1e-6, tol=1e-6)
    assert report.passed, report.max_rel_err


# ---------------------------------------------------------------------------
# late fusion
# ---------------------------------------------------------------------------

def test_fuse_late_definition():
    out = fuse_late(Tensor([1.0, 2.0]), Tensor([3.0, 4.0]))
    assert out.data.tolist() == [1.0, 2.0, 3.0, 4.0]


def test_fuse_late_slicing_recovers_inputs():
    t = Rng(6).normals(32)
    i = Rng(7).normals(32)
    out = fuse_late(Tensor(t), Tensor(i))
    assert out.shape == (64,)
    assert np.array_equal(ad.slice_axis(out, 0, 32).data, t)
    assert np.array_equal(ad.slice_axis(out, 32, 64).data, i)


def test_fuse_late_dim_mismatch():
    with pytest.raises(DimensionError):
        fuse_late(Tensor(np.ones(3)), Tensor(np.ones(4)))


# ---------------------------------------------------------------------------
# early fusion
# ---------------------------------------------------------------------------

def _early_setup(seed=0, proj_dim=4):
    config = FusionConfig(strategy="early", proj_dim=proj_dim, early_blocks=2,
                          early_heads=2, early_mlp_hidden=8)
    params = init_fusion_params(config, d_text=proj_dim, d_image=proj_dim, rng=Rng(seed))
    return config, params


def test_fuse_early_output_dim():
    config, params = _early_setup()
    tokens = Tensor(Rng(8).normals(2 * 3 * 4).reshape(2, 3, 4))
    patches = Tensor(Rng(9).normals(2 * 5 * 4).reshape(2, 5, 4))
    out = fuse_early(tokens, patches, params, config)
    assert out.shape == (2, 4)


def test_fuse_early_degenerate_reduction_to_token_mean():
    # zero attention output and zero MLP second layer -> blocks are identity;
    # zero type embeddings -> pooled output is the mean of all projected tokens
    config, params = _early_setup(seed=11)
    params["fusion.type_emb"].data[:] = 0.0
    for i in range(2):
        params[f"fusion.early.blk{i}.attn.wo.w"].data[:] = 0.0
        params[f"fusion.early.blk{i}.attn.wo.b"].data[:] = 0.0
        params[f"fusion.early.blk{i}.mlp.fc2.w"].data[:] = 0.0
        params[f"fusion.early.blk{i}.mlp.fc2.b"].data[:] = 0.0
    tokens = Rng(12).normals(1 * 3 * 4).reshape(1, 3, 4)
    patches = Rng(13).normals(1 * 5 * 4).reshape(1, 5, 4)
    out = fuse_early(Tensor(tokens), Tensor(patches), params, config).data
    expected = np.concatenate([tokens, patches], axis=1).mean(axis=1)
    assert np.allclose(out, expected, atol=1e-15)


def test_fuse_early_respects_text_mask():
    config, params = _early_setup(seed=14)
    tokens = Rng(15).normals(1 * 3 * 4).reshape(1, 3, 4)
    patches = Rng(16).normals(1 * 2 * 4).reshape(1, 2, 4)
    mask = np.array([[1.0, 1.0, 0.0]])
    out_masked = fuse_early(Tensor(tokens), Tensor(patches), params, config,
                            text_mask=mask).data
    tokens_changed = tokens.copy()
    tokens_changed[0, 2] += 100.0  # masked position; must not matter
    out_changed = fuse_early(Tensor(tokens_changed), Tensor(patches), params, config,
                             text_mask=mask).data
    assert np.array_equal(out_masked, out_changed)


def test_fuse_early_overlength_rejected():
    config, params = _early_setup()
    tokens = Tensor(np.zeros((1, 60, 4)))
    patches = Tensor(np.zeros((1, 60, 4)))
    with pytest.raises(InputError):
        fuse_early(tokens, patches, params, config)


def test_fuse_early_gradients():
    config, params = _early_setup(seed=17)
    tokens = Rng(18).normals(1 * 2 * 4).reshape(1, 2, 4)
    patches = Rng(19).normals(1 * 3 * 4).reshape(1, 3, 4)
    report = grad_check(
        lambda: _scalar_probe(fuse_early(Tensor(tokens), Tensor(patches), params, config), 20),
        params, h=3e-6, tol=1e-5)
    assert report.passed, report.max_rel_err


# ---------------------------------------------------------------------------
# cross attention
# ---------------------------------------------------------------------------

def _cross_setup(seed=0, proj_dim=4):
    config = FusionConfig(strategy="cross_attention", proj_dim=proj_dim)
    params = init_fusion_params(config, d_text=proj_dim, d_image=proj_dim, rng=Rng(seed))
    return config, params


def test_cross_attention_output_dim():
    config, params = _cross_setup()
    t_seq = Tensor(Rng(21).normals(2 * 3 * 4).reshape(2, 3, 4))
    i_seq = Tensor(Rng(22).normals(2 * 5 * 4).reshape(2, 5, 4))
    pooled_t = Tensor(Rng(23).normals(8).reshape(2, 4))
    pooled_i = Tensor(Rng(24).normals(8).reshape(2, 4))
    out = fuse_cross_attention(t_seq, i_seq, pooled_t, pooled_i, params, config)
    assert out.shape == (2, 8)


def test_cross_attention_uniform_keys_returns_the_value():
    config, params = _cross_setup(seed=25)
    row = Rng(26).normals(4)
    i_seq = Tensor(np.tile(row, (1, 6, 1)))  # every patch identical
    t_seq = Tensor(Rng(27).normals(1 * 3 * 4).reshape(1, 3, 4))
    pooled_t = Tensor(Rng(28).normals(4).reshape(1, 4))
    pooled_i = Tensor(Rng(29).normals(4).reshape(1, 4))
    out = fuse_cross_attention(t_seq, i_seq, pooled_t, pooled_i, params, config).data
    expected_text_side = row @ params["fusion.cross.t2i.wv.w"].data
    assert np.allclose(out[0, :4], expected_text_side, atol=1e-12)


def test_attention_weights_sum_to_one():
    q = Tensor(Rng(30).normals(1 * 1 * 4).reshape(1, 1, 4))
    k = Tensor(Rng(31).normals(1 * 7 * 4).reshape(1, 7, 4))
    v = Tensor(Rng(32).normals(1 * 7 * 4).reshape(1, 7, 4))
    _, weights = single_head_attention(q, k, v)
    assert (weights.data >= 0).all()
    assert abs(weights.data.sum() - 1.0) <= 1e-12


def test_cross_attention_gradients():
    config, params = _cross_setup(seed=33)
    t_seq = Tensor(Rng(34).normals(1 * 3 * 4).reshape(1, 3, 4))
    i_seq = Tensor(Rng(35).normals(1 * 4 * 4).reshape(1, 4, 4))
    pooled_t = Tensor(Rng(36).normals(4).reshape(1, 4))
    pooled_i = Tensor(Rng(37).normals(4).reshape(1, 4))
    report = grad_check(
        lambda: _scalar_probe(
            fuse_cross_attention(t_seq, i_seq, pooled_t, pooled_i, params, config), 38),
        params, h=3e-6, tol=1e-5)
    assert report.passed, report.max_rel_err


def test_strategy_validation():
    with pytest.raises(ConfigError):
        FusionConfig(strategy="gated")
    assert FusionConfig(strategy="late").fused_dim == 64
    assert FusionConfig(strategy="early").fused_dim == 32
    assert FusionConfig(strategy="cross_attention").fused_dim == 64
