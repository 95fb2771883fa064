"""Data encoder: pair embedding layout and plan-ordered encoding."""

import numpy as np
import pytest

from styled2t import data_encoder as D
from styled2t import nn
from styled2t import tensor as T
from styled2t.corpus import AttributeValuePair, PAD_ID, Plan, Vocabulary
from styled2t.errors import ShapeMismatch

from gradcheck import check_tensor


def setup(rng, d1=8, layers=1, heads=2, vocab_tokens=("color", "red", "size", "big", "deep", "blue")):
    vocab = Vocabulary(list(vocab_tokens))
    table = D.EmbeddingTable.init(rng, len(vocab), d1, max_positions=32)
    params = D.EncoderParams.init(rng, d1, layers, heads, d_ff=2 * d1)
    return vocab, table, params


def test_pair_embedding_includes_separator_row():
    rng = np.random.default_rng(0)
    vocab, table, _ = setup(rng)
    # attr (1 token) + value (2 tokens) = 3 tokens -> 4 rows with <sep>
    pair = AttributeValuePair(("color",), ("deep", "blue"), 1)
    (mat,) = D.embed_pairs([pair], vocab, table)
    assert mat.data.shape == (4, 8)


def test_identical_pairs_embed_identically():
    rng = np.random.default_rng(1)
    vocab, table, _ = setup(rng)
    a = AttributeValuePair(("color",), ("red",), 1)
    b = AttributeValuePair(("color",), ("red",), 2)
    ma, mb = D.embed_pairs([a, b], vocab, table)
    assert np.array_equal(ma.data, mb.data)


def test_pad_never_inside_pair_tokens():
    vocab = Vocabulary(["color", "red"])
    pair = AttributeValuePair(("color",), ("red",), 1)
    assert PAD_ID not in vocab.encode(pair.tokens())


def test_identity_plan_equals_original_order_encoding():
    rng = np.random.default_rng(2)
    vocab, table, params = setup(rng)
    pairs = [
        AttributeValuePair(("color",), ("red",), 1),
        AttributeValuePair(("size",), ("big",), 2),
    ]
    h, mask = D.encode_planned(pairs, Plan((1, 2)), vocab, table, params)
    ids = vocab.encode(pairs[0].tokens()) + vocab.encode(pairs[1].tokens())
    x = D.embed_sequence(ids, table)
    manual = nn.encoder_forward(x, params.layers, params.num_heads, key_real=np.ones(len(ids), dtype=bool))
    assert np.allclose(h.data, manual.data, atol=1e-14)
    assert mask.all() and mask.shape == (len(ids),)


def test_permuted_plan_changes_encoding():
    rng = np.random.default_rng(3)
    vocab, table, params = setup(rng)
    pairs = [
        AttributeValuePair(("color",), ("red",), 1),
        AttributeValuePair(("size",), ("big",), 2),
    ]
    fwd, _ = D.encode_planned(pairs, Plan((1, 2)), vocab, table, params)
    rev, _ = D.encode_planned(pairs, Plan((2, 1)), vocab, table, params)
    # same token multiset, different positions: representations must differ
    assert not np.allclose(np.sort(fwd.data, axis=0), np.sort(rev.data, axis=0))


def test_zeroed_residual_branches_give_identity():
    rng = np.random.default_rng(4)
    vocab, table, params = setup(rng, layers=2)
    for layer in params.layers:
        layer.attn.Wo.data[:] = 0.0
        layer.attn.bo.data[:] = 0.0
        layer.ffn.W2.data[:] = 0.0
        layer.ffn.b2.data[:] = 0.0
    pair = AttributeValuePair(("color",), ("red",), 1)
    h, _ = D.encode_planned([pair], Plan((1,)), vocab, table, params)
    ids = vocab.encode(pair.tokens())
    expected = table.tokens.data[ids] + table.positions.data[: len(ids)]
    assert np.allclose(h.data, expected, atol=1e-15)


def test_pad_positions_do_not_leak_into_real_outputs():
    rng = np.random.default_rng(5)
    vocab, table, params = setup(rng)
    ids = vocab.encode(["color", "red", "size"])
    x_real = D.embed_sequence(ids, table)
    base = nn.encoder_forward(x_real, params.layers, params.num_heads, key_real=np.ones(3, dtype=bool))

    for junk_seed in (0, 1):
        junk = np.random.default_rng(junk_seed).standard_normal((2, 8))
        x_padded = T.concat([x_real, T.Tensor(junk)], axis=0)
        real = np.array([True, True, True, False, False])
        padded = D.encode_padded(x_padded, real, params)
        assert np.allclose(padded.data[:3], base.data, atol=1e-12)


def test_plan_index_validation():
    rng = np.random.default_rng(6)
    vocab, table, params = setup(rng)
    pairs = [AttributeValuePair(("color",), ("red",), 1)]
    with pytest.raises(ShapeMismatch):
        D.encode_planned(pairs, Plan((2,)), vocab, table, params)


def test_sequence_length_capped_by_position_table():
    rng = np.random.default_rng(7)
    vocab, table, params = setup(rng)
    with pytest.raises(ShapeMismatch):
        D.embed_sequence([5] * 40, table)


def test_encoder_gradients_match_finite_differences():
    rng = np.random.default_rng(8)
    vocab, table, params = setup(rng, d1=8, layers=1, heads=2)
    pairs = [
        AttributeValuePair(("color",), ("red",), 1),
        AttributeValuePair(("size",), ("big",), 2),
    ]
    plan = Plan((2, 1))
    probe = rng.standard_normal((6, 8))  # two 3-token pairs

    def value():
        h, _ = D.encode_planned(pairs, plan, vocab, table, params)
        return float(T.tsum(T.mul(h, T.Tensor(probe))).data)

    h_out, _ = D.encode_planned(pairs, plan, vocab, table, params)
    T.tsum(T.mul(h_out, T.Tensor(probe))).backward()

    named = dict(table.named("embed"))
    named.update(params.named("enc"))
    for name, p in named.items():
        if p.grad is None:
            continue
        check_tensor(value, p, p.grad, name, stride=3)  # stride keeps runtime sane
