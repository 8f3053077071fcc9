import math

import numpy as np
import pytest

from fuselab import autodiff as ad
from fuselab import layers
from fuselab.autodiff import DimensionError, Tensor
from fuselab.gradcheck import check_gradients
from fuselab.heads import AttentiveDecoder, ClassifierHead
from fuselab.vocab import EOS, PAD, SOS


@pytest.fixture
def rng():
    return np.random.default_rng(41)


def test_classifier_uniform_at_zero_weights(rng):
    head = ClassifierHead(5, 8, 4, rng)
    for p in head.parameters().values():
        p.data[...] = 0.0
    logits = head(Tensor(rng.normal(size=(3, 5))))
    loss = head.loss(logits, np.array([0, 1, 2]))
    assert loss.item() == pytest.approx(math.log(4), abs=1e-12)


def test_classifier_shape_contract(rng):
    head = ClassifierHead(5, 8, 4, rng)
    assert head(Tensor(rng.normal(size=(7, 5)))).shape == (7, 4)


def test_classifier_width_mismatch(rng):
    with pytest.raises(DimensionError):
        ClassifierHead(5, 8, 4, rng)(Tensor(np.zeros((2, 3))))


def test_classifier_hinge_flag(rng):
    head = ClassifierHead(3, 4, 3, rng)
    logits = head(Tensor(rng.normal(size=(4, 3))))
    assert head.loss(logits, np.array([0, 1, 2, 0]), kind="hinge").item() >= 0.0
    with pytest.raises(ValueError):
        head.loss(logits, np.array([0, 1, 2, 0]), kind="nope")


def make_decoder(rng, **kw):
    return AttentiveDecoder(vocab_size=9, embed_dim=4, hidden=5, enc_hidden=6,
                            d_fuse=3, rng=rng, **kw)


def test_single_unmasked_position_gets_full_weight(rng):
    dec = make_decoder(rng)
    states = Tensor(rng.normal(size=(2, 4, 6)))
    mask = np.zeros((2, 4))
    mask[:, 2] = 1.0
    h, c = dec.init_state(Tensor(rng.normal(size=(2, 3))))
    _, _, _, w = dec.decode_step(np.array([SOS, SOS]), h, c,
                                 Tensor(rng.normal(size=(2, 3))), states, mask)
    np.testing.assert_allclose(w.data[:, 2], 1.0, atol=1e-12)
    np.testing.assert_allclose(w.data[:, [0, 1, 3]], 0.0, atol=1e-12)


def test_uniform_scores_mean_context(rng):
    dec = make_decoder(rng)
    dec.attn_W.data[...] = 0.0  # all scores equal -> uniform attention
    states = Tensor(rng.normal(size=(1, 5, 6)))
    mask = np.ones((1, 5))
    z = Tensor(rng.normal(size=(1, 3)))
    h, c = dec.init_state(z)
    _, _, _, w = dec.decode_step(np.array([SOS]), h, c, z, states, mask)
    np.testing.assert_allclose(w.data, 0.2, atol=1e-12)


def test_attention_weights_sum_to_one(rng):
    dec = make_decoder(rng)
    states = Tensor(rng.normal(size=(3, 6, 6)))
    mask = (rng.random((3, 6)) > 0.3).astype(float)
    mask[:, 0] = 1.0
    z = Tensor(rng.normal(size=(3, 3)))
    h, c = dec.init_state(z)
    prev = np.array([SOS] * 3)
    for _ in range(4):
        _, h, c, w = dec.decode_step(prev, h, c, z, states, mask)
        np.testing.assert_allclose(w.data.sum(axis=1), 1.0, atol=1e-12)
        np.testing.assert_array_equal(w.data[mask == 0.0], 0.0)
        prev = np.array([4, 5, 6])


def test_all_positions_masked_rejected(rng):
    dec = make_decoder(rng)
    states = Tensor(rng.normal(size=(1, 3, 6)))
    z = Tensor(rng.normal(size=(1, 3)))
    h, c = dec.init_state(z)
    with pytest.raises(ValueError):
        dec.decode_step(np.array([SOS]), h, c, z, states, np.zeros((1, 3)))


def test_greedy_respects_max_len_and_determinism(rng):
    dec = make_decoder(rng)
    states = Tensor(rng.normal(size=(2, 4, 6)))
    mask = np.ones((2, 4))
    z = Tensor(rng.normal(size=(2, 3)))
    out1 = dec.decode_greedy(z, states, mask, max_len=7)
    out2 = dec.decode_greedy(z, states, mask, max_len=7)
    assert all(len(s) <= 7 for s in out1)
    assert out1 == out2


def test_teacher_forced_loss_ignores_padding(rng):
    dec = make_decoder(rng)
    states = Tensor(rng.normal(size=(2, 3, 6)))
    mask = np.ones((2, 3))
    z = Tensor(rng.normal(size=(2, 3)))
    t_short = np.array([[4, EOS, PAD], [5, 6, EOS]])
    loss = dec.teacher_forced_loss(z, states, mask, t_short)
    assert np.isfinite(loss.item())


def test_decoder_gradcheck(rng):
    dec = AttentiveDecoder(vocab_size=5, embed_dim=2, hidden=3, enc_hidden=3,
                           d_fuse=2, rng=rng)
    states = Tensor(rng.uniform(-1, 1, size=(2, 2, 3)), requires_grad=True)
    z = Tensor(rng.uniform(-1, 1, size=(2, 2)), requires_grad=True)
    mask = np.ones((2, 2))
    targets = np.array([[4, EOS], [4, EOS]])

    def fn(ts):
        return dec.teacher_forced_loss(ts[0], ts[1], mask, targets)

    check_gradients(fn, [z, states] + list(dec.parameters().values()))


def test_condition_every_step_changes_input_width(rng):
    dec = make_decoder(rng, condition_every_step=True)
    assert dec.cell.d_in == 4 + 3
    states = Tensor(rng.normal(size=(1, 2, 6)))
    z = Tensor(rng.normal(size=(1, 3)))
    out = dec.decode_greedy(z, states, np.ones((1, 2)), max_len=4)
    assert len(out) == 1


def test_memorization_capacity(rng):
    # 20 fixed sentence pairs; teacher-forced loss should collapse quickly
    vocab = 12
    dec = AttentiveDecoder(vocab_size=vocab, embed_dim=8, hidden=48,
                           enc_hidden=8, d_fuse=4, rng=rng)
    enc = layers.Embedding(vocab, 8, rng)  # stand-in encoder: embedded source
    n, L, T = 20, 5, 6
    src = rng.integers(4, vocab, size=(n, L))
    tgt = np.concatenate([src[:, ::-1][:, :T - 1], np.full((n, 1), EOS)], axis=1)
    mask = np.ones((n, L))
    z = Tensor(np.zeros((n, 4)))
    params = dict(dec.parameters())
    params.update(enc.parameters("enc."))
    state = layers.AdamState(lr=2e-2)
    loss = None
    for epoch in range(500):
        for p in params.values():
            p.zero_grad()
        states = enc(src)
        loss = dec.teacher_forced_loss(z, states, mask, tgt)
        loss.backward()
        layers.adam_step(params, state)
        if loss.item() < 0.05:
            break
    assert loss.item() < 0.05
