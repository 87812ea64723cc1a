import numpy as np
import pytest

from vwsd import autodiff as ad
from vwsd.autodiff import Tape, backward, grad_check, mean_over_axis, reshape
from vwsd.errors import ConfigError, InputError
from vwsd.rng import Rng
from vwsd.text_encoder import (
    PAD_ID,
    UNK_ID,
    TextEncoderConfig,
    Vocabulary,
    encode_text,
    init_text_params,
    tokenize,
)


@pytest.fixture
def vocab():
    return Vocabulary.from_tokens(["river", "bank", "money", "shore", "water"])


def test_vocabulary_roundtrip(tmp_path, vocab):
    for tok in ["river", "bank", "money"]:
        assert vocab.token(vocab.id(tok)) == tok
    assert vocab.id("never-seen") == UNK_ID
    path = tmp_path / "vocab.txt"
    vocab.save(path)
    text = path.read_text(encoding="utf-8").splitlines()
    assert text[:2] == ["<pad>", "<unk>"]
    loaded = Vocabulary.load(path)
    assert len(loaded) == len(vocab)
    assert loaded.id("bank") == vocab.id("bank")


def test_vocabulary_rejects_bad_header(tmp_path):
    path = tmp_path / "vocab.txt"
    path.write_text("river\nbank\n", encoding="utf-8")
    with pytest.raises(InputError):
        Vocabulary.load(path)


def test_tokenize_lookup_and_pad(vocab):
    ids, length = tokenize(["river", "bank"], vocab, max_len=4)
    assert ids.tolist() == [vocab.id("river"), vocab.id("bank"), PAD_ID, PAD_ID]
    assert length == 2


def test_tokenize_unknown_token(vocab):
    ids, length = tokenize(["zzz-unseen"], vocab, max_len=4)
    assert ids[0] == UNK_ID and length == 1
    assert (ids[1:] == PAD_ID).all()


def test_tokenize_truncates(vocab):
    ids, length = tokenize(["river"] * 20, vocab, max_len=16)
    assert len(ids) == 16 and length == 16


def test_tokenize_empty_phrase(vocab):
    with pytest.raises(InputError):
        tokenize([], vocab, max_len=4)


def test_config_invariants():
    with pytest.raises(ConfigError):
        TextEncoderConfig(embed_dim=30, num_heads=4)
    with pytest.raises(ConfigError):
        TextEncoderConfig(max_len=1)


def _setup(seed=0, **kw):
    config = TextEncoderConfig(**kw)
    vocab = Vocabulary.from_tokens([f"tok{i}" for i in range(10)])
    params = init_text_params(config, len(vocab), Rng(seed))
    return config, vocab, params


def test_output_shape_is_embed_dim():
    config, vocab, params = _setup()
    ids, length = tokenize(["tok1", "tok2", "tok3"], vocab, config.max_len)
    out = encode_text(ids, params, config)
    assert out.shape == (config.embed_dim,)
    batch = encode_text(np.stack([ids, ids]), params, config)
    assert batch.shape == (2, config.embed_dim)


def test_all_padding_rejected():
    config, vocab, params = _setup()
    with pytest.raises(InputError):
        encode_text(np.zeros(4, dtype=np.int64), params, config)


def test_padding_extension_is_bit_identical():
    config, vocab, params = _setup()
    short = np.array([3, 4, PAD_ID, PAD_ID], dtype=np.int64)
    long = np.concatenate([short, np.zeros(12, dtype=np.int64)])
    out_short = encode_text(short, params, config).data
    out_long = encode_text(long, params, config).data
    assert np.array_equal(out_short, out_long)


def test_zero_positions_single_token_position_independent():
    config, vocab, params = _setup()
    params["text.pos_emb"].data[:] = 0.0
    a = np.array([5, PAD_ID, PAD_ID, PAD_ID], dtype=np.int64)
    b = np.array([PAD_ID, PAD_ID, 5, PAD_ID], dtype=np.int64)
    out_a = encode_text(a, params, config).data
    out_b = encode_text(b, params, config).data
    assert np.allclose(out_a, out_b, atol=1e-12)


def test_zero_positions_permutation_invariance():
    config, vocab, params = _setup()
    params["text.pos_emb"].data[:] = 0.0
    a = np.array([3, 4, 5, PAD_ID], dtype=np.int64)
    b = np.array([5, 3, 4, PAD_ID], dtype=np.int64)
    out_a = encode_text(a, params, config).data
    out_b = encode_text(b, params, config).data
    assert np.allclose(out_a, out_b, atol=1e-12)


def test_determinism():
    config, vocab, params = _setup()
    ids, length = tokenize(["tok1", "tok2"], vocab, config.max_len)
    a = encode_text(ids, params, config).data
    b = encode_text(ids, params, config).data
    assert np.array_equal(a, b)


def test_gradients_match_finite_differences():
    config, vocab, params = _setup(seed=5, embed_dim=4, num_layers=1, num_heads=2,
                                   mlp_hidden=8, max_len=4)
    ids = np.array([[2, 3, PAD_ID, PAD_ID]], dtype=np.int64)
    weights = ad.constant(Rng(9).normals(4))

    def f():
        out = encode_text(ids, params, config)
        return mean_over_axis(reshape(ad.mul(out, weights), (out.size,)), 0)

    report = grad_check(f, params, h=3e-6, tol=1e-6)
    assert report.passed, report.max_rel_err
    # the embedding table must receive gradient through the lookup
    with Tape():
        grads = backward(f())
    table_grad = grads[params["text.tok_emb"].node_id].data
    assert np.abs(table_grad[2]).max() > 0
    assert np.abs(table_grad[7]).max() == 0  # untouched row
