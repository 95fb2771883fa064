"""Style embedding: mask behavior, classifier, and the two constraint losses."""

import math

import numpy as np
import pytest

from styled2t import data_encoder as D
from styled2t import style_embedder as S
from styled2t import tensor as T
from styled2t.corpus import Vocabulary
from styled2t.errors import EmptyReference, MissingCenter, ShapeMismatch

from gradcheck import check_tensor


def setup(rng, d1=8, n_styles=2):
    vocab = Vocabulary(["hello", "there", "friend", "formal", "casual"])
    table = D.EmbeddingTable.init(rng, len(vocab), d1, max_positions=16)
    encoder = D.EncoderParams.init(rng, d1, 1, 2, d_ff=2 * d1)
    head = S.StyleHeadParams.init(rng, d1, n_styles)
    return vocab, table, encoder, head


def test_mask_entries_strictly_inside_unit_interval():
    rng = np.random.default_rng(0)
    vocab, table, encoder, head = setup(rng)
    _, mask = S.embed_style(["hello", "there", "friend"], vocab, table, encoder, head)
    assert (mask.data > 0).all() and (mask.data < 1).all()


def test_zero_mask_weights_halve_the_average():
    rng = np.random.default_rng(1)
    vocab, table, encoder, head = setup(rng)
    head.W_m.data[:] = 0.0
    head.b_m.data[:] = 0.0
    s, mask = S.embed_style(["hello", "there"], vocab, table, encoder, head)
    assert np.allclose(mask.data, 0.5)
    import styled2t.nn as nn

    x = D.embed_sequence(vocab.encode(["hello", "there"]), table)
    h_x = nn.encoder_forward(x, encoder.layers, encoder.num_heads)
    assert np.allclose(s.data, 0.5 * h_x.data.mean(axis=0, keepdims=True), atol=1e-14)


def test_single_position_has_no_averaging_effect():
    rng = np.random.default_rng(2)
    vocab, table, encoder, head = setup(rng)
    s, mask = S.embed_style(["hello"], vocab, table, encoder, head)
    import styled2t.nn as nn

    x = D.embed_sequence(vocab.encode(["hello"]), table)
    h_x = nn.encoder_forward(x, encoder.layers, encoder.num_heads)
    assert np.allclose(s.data, mask.data * h_x.data, atol=1e-14)


def test_no_mask_variant_returns_plain_average():
    rng = np.random.default_rng(3)
    vocab, table, encoder, head = setup(rng)
    s, mask = S.embed_style(["hello", "there"], vocab, table, encoder, head, use_mask=False)
    assert mask is None
    import styled2t.nn as nn

    x = D.embed_sequence(vocab.encode(["hello", "there"]), table)
    h_x = nn.encoder_forward(x, encoder.layers, encoder.num_heads)
    assert np.allclose(s.data, h_x.data.mean(axis=0, keepdims=True), atol=1e-14)


def test_empty_reference_raises():
    rng = np.random.default_rng(4)
    vocab, table, encoder, head = setup(rng)
    with pytest.raises(EmptyReference):
        S.embed_style([], vocab, table, encoder, head)


def test_zero_weights_classify_uniformly():
    rng = np.random.default_rng(5)
    _, _, _, head = setup(rng)
    head.W_s2.data[:] = 0.0
    head.b_s2.data[:] = 0.0
    probs = S.classify_style(np.ones((1, 8)), head)
    assert np.allclose(probs.data, 0.5)


def test_classifier_probabilities_sum_to_one():
    rng = np.random.default_rng(6)
    _, _, _, head = setup(rng)
    for _ in range(5):
        probs = S.classify_style(rng.standard_normal((1, 8)), head)
        assert float(probs.data.sum()) == pytest.approx(1.0, abs=1e-6)
        assert (probs.data > 0).all()


def test_large_logit_wins():
    rng = np.random.default_rng(7)
    _, _, _, head = setup(rng)
    head.W_s2.data[:] = 0.0
    head.b_s2.data[:] = np.array([4.0, -4.0])
    probs = S.classify_style(rng.standard_normal((1, 8)), head)
    assert int(np.argmax(probs.data)) == 0


def test_cla_loss_values():
    perfect = S.style_cla_loss(T.Tensor(np.array([[1.0, 0.0]])), np.array([1.0, 0.0]))
    assert float(perfect.data) == pytest.approx(0.0, abs=1e-9)
    uniform = S.style_cla_loss(T.Tensor(np.array([[0.5, 0.5]])), np.array([0.0, 1.0]))
    assert float(uniform.data) == pytest.approx(math.log(2), abs=1e-12)
    probs = np.array([[0.3, 0.7]])
    loss = S.style_cla_loss(T.Tensor(probs), np.array([0.0, 1.0]))
    assert float(loss.data) == pytest.approx(-math.log(0.7), abs=1e-12)


def test_cla_loss_shape_check():
    with pytest.raises(ShapeMismatch):
        S.style_cla_loss(T.Tensor(np.array([[0.5, 0.5]])), np.array([1.0, 0.0, 0.0]))


def test_clu_loss_at_own_center():
    d = 4
    centers = {0: np.zeros(d), 1: np.full(d, 0.5)}
    s = T.Tensor(np.zeros((1, d)))
    loss = S.style_clu_loss(s, 0, centers, 2)
    expected = 0.5 * math.exp(-float(np.sum(0.5 ** 2 * np.ones(d))))
    assert float(loss.data) == pytest.approx(expected, abs=1e-12)


def test_clu_loss_equidistant_centers():
    # s at the origin, both centers at distance d: loss = d^2 + 0.5 e^{-d^2}
    d = 1.3
    centers = {0: np.array([d, 0.0]), 1: np.array([-d, 0.0])}
    s = T.Tensor(np.zeros((1, 2)))
    loss = S.style_clu_loss(s, 0, centers, 2)
    assert float(loss.data) == pytest.approx(d * d + 0.5 * math.exp(-d * d), abs=1e-12)


def test_clu_loss_strictly_positive():
    rng = np.random.default_rng(8)
    centers = {0: rng.standard_normal(4), 1: rng.standard_normal(4)}
    s = T.Tensor(centers[0].reshape(1, -1).copy())
    assert float(S.style_clu_loss(s, 0, centers, 2).data) > 0.0


def test_missing_center_raises():
    with pytest.raises(MissingCenter):
        S.style_clu_loss(T.Tensor(np.zeros((1, 2))), 0, {0: np.zeros(2)}, 2)


def test_batch_style_centers_are_means():
    vecs = [(0, np.array([1.0, 0.0])), (0, np.array([3.0, 2.0])), (1, np.array([5.0, 5.0]))]
    centers = S.batch_style_centers(vecs)
    assert np.allclose(centers[0], [2.0, 1.0])
    assert np.allclose(centers[1], [5.0, 5.0])


def test_cla_loss_gradients():
    rng = np.random.default_rng(9)
    _, _, _, head = setup(rng)
    s_base = rng.standard_normal((1, 8))
    one_hot = np.array([0.0, 1.0])

    def value():
        return float(S.style_cla_loss(S.classify_style(T.Tensor(s_base), head), one_hot).data)

    s_param = T.parameter(s_base.copy())
    S.style_cla_loss(S.classify_style(s_param, head), one_hot).backward()
    check_tensor(value, T.Tensor(s_base), s_param.grad, "s")
    for name, p in head.named():
        if p.grad is not None:
            check_tensor(value, p, p.grad, name)


def test_clu_loss_gradients():
    rng = np.random.default_rng(10)
    d = 8
    centers = {0: rng.standard_normal(d), 1: rng.standard_normal(d)}
    s_base = rng.standard_normal((1, d))

    def value():
        return float(S.style_clu_loss(T.Tensor(s_base), 0, centers, 2).data)

    s_param = T.parameter(s_base.copy())
    S.style_clu_loss(s_param, 0, centers, 2).backward()
    check_tensor(value, T.Tensor(s_base), s_param.grad, "s")


def test_fixed_style_vector_is_padded_one_hot():
    v = S.fixed_style_vector(1, 8)
    assert v.shape == (1, 8)
    assert v[0, 1] == 1.0 and v.sum() == 1.0
