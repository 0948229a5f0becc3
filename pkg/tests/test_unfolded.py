import numpy as np
import pytest

from scma_unfold.channel import ChannelRealization, generate_batch, substream
from scma_unfold.codec import CodebookError, build_factor_graph, random_codebook
from scma_unfold.mpa import DetectorConfig, GraphTables, MessageState, decide, maxlog_I, maxlog_Q, run_mpa
from scma_unfold.unfolded import (
    init_all_ones,
    forward,
    load_checkpoint,
    pooling_concat_layer,
    q_layer,
    save_checkpoint,
    verify_equivalence,
    weight_pairs,
)


def jittered(cb, T, rng, scale=0.2):
    p = init_all_ones(cb.graph, T)
    return p.with_vector(p.to_vector() + scale * rng.standard_normal(p.size))


@pytest.mark.parametrize("T, count", [(1, 72), (2, 144), (4, 288)])
def test_parameter_count(cb, T, count):
    p = init_all_ones(cb.graph, T)
    assert p.size == count
    assert np.all(p.to_vector() == 1.0)
    assert p.wI.shape == (T, 24) and p.c.shape == (T, 12) and p.wQ.shape == (T, 12)


def test_parameters_follow_edges():
    F = np.array([[1, 1, 1], [1, 1, 0]])
    p = init_all_ones(build_factor_graph(F), 1)
    F2 = F.copy()
    F2[1, 1] = 0
    p2 = init_all_ones(build_factor_graph(F2), 1)
    # edge (2,2) gone: one fewer c/a/b, two fewer wI (it had one peer, and was a peer once), two fewer wQ
    assert p.c.size - p2.c.size == 1
    assert p.wI.size - p2.wI.size == 2
    assert p.wQ.size - p2.wQ.size == 2
    pI, pQ = weight_pairs(build_factor_graph(F))
    assert pI == sorted(pI) and pQ == sorted(pQ)


def test_init_rejects_zero_blocks(cb):
    with pytest.raises(ValueError):
        init_all_ones(cb.graph, 0)


def test_q_layer(cb, rng):
    lnp = np.full((cb.J, cb.M), np.log(0.25))
    LI = rng.normal(size=(5, cb.graph.E, cb.M))
    ones = init_all_ones(cb.graph, 2)
    cfg = DetectorConfig()
    LQ = q_layer(LI, ones, 1, lnp)
    for e, (k, j) in enumerate(cb.graph.edges):
        assert np.array_equal(LQ[:, e], maxlog_Q(MessageState(LI, None), cb, cfg, j, k))
    zero = ones.copy()
    zero.b[:] = 0
    zero.wQ[:] = 0
    assert np.all(q_layer(LI, zero, 0, lnp) == 0)
    first = q_layer(np.zeros_like(LI), ones, 0, lnp)
    np.testing.assert_allclose(first, -1.386294, atol=1e-6)


def test_pooling_layer(cb, rng):
    chan = ChannelRealization.awgn(cb, 8.0)
    tb = GraphTables(cb, chan)
    y = generate_batch(cb, chan, "random", 6, substream(1)).y
    D = tb.distances(y)
    LQ = rng.normal(size=(6, cb.graph.E, cb.M))
    ones = init_all_ones(cb.graph, 1)
    LI, win = pooling_concat_layer(LQ, D, ones, 0, tb, chan.beta)
    for e, (k, j) in enumerate(cb.graph.edges):
        assert np.array_equal(LI[:, e], maxlog_I(MessageState(None, LQ), y, cb, chan, k, j))
    # winning hypotheses fix user j to the output symbol
    for e, (k, j) in enumerate(cb.graph.edges):
        p = cb.graph.V[k].index(j)
        assert np.all(tb.symbols[k][win[:, e], p] == np.arange(cb.M))
    flat = ones.copy()
    flat.c[:] = 0
    flat.wI[:] = 0
    LI0, _ = pooling_concat_layer(LQ, D, flat, 0, tb, chan.beta)
    assert np.all(LI0 == chan.beta)


def test_pooling_positive_homogeneity(cb, rng):
    chan = ChannelRealization.awgn(cb, 8.0)
    tb = GraphTables(cb, chan)
    y = generate_batch(cb, chan, "random", 6, substream(1)).y
    D = tb.distances(y)
    LQ = rng.normal(size=(6, cb.graph.E, cb.M))
    p = jittered(cb, 1, rng)
    base, _ = pooling_concat_layer(LQ, D, p, 0, tb, chan.beta)
    e, lam = 5, 2.5
    q = p.copy()
    q.c[0, e] *= lam
    for i, (e1, _) in enumerate(q.pairs_I):
        if e1 == e:
            q.wI[0, i] *= lam
    scaled, _ = pooling_concat_layer(LQ, D, q, 0, tb, chan.beta)
    ab = p.a[0, e] * chan.beta
    np.testing.assert_allclose(scaled[:, e] - ab, lam * (base[:, e] - ab), rtol=1e-12)
    others = [x for x in range(cb.graph.E) if x != e]
    assert np.array_equal(scaled[:, others], base[:, others])


@pytest.mark.parametrize("T", [1, 2, 4])
def test_all_ones_bit_equal_to_maxlog(cb, T):
    for snr in (0.0, 9.0, 18.0):
        chan = ChannelRealization.awgn(cb, snr)
        y = generate_batch(cb, chan, "random", 300, substream(T, int(snr))).y
        nn, _ = forward(y, cb, chan, init_all_ones(cb.graph, T))
        ref = run_mpa(y, cb, chan, DetectorConfig(T, "max-log", normalize=False))
        assert np.array_equal(nn, ref)


def test_verify_equivalence_report(cb, rng):
    rep = verify_equivalence(cb, 2, 60, seed=3)
    assert rep.passed() and rep.max_rel_dev == 0.0
    bad = init_all_ones(cb.graph, 2)
    bad.wI[0, 0] = 1.001
    assert not verify_equivalence(cb, 2, 60, seed=3, params=bad).passed()


def test_zero_noise_sweep(cb):
    chan = ChannelRealization.awgn(cb, 0.0).with_sigma2(1e-4 * cb.signal_power())
    batch = generate_batch(cb, chan, "exhaustive", None, substream(0))
    logits, _ = forward(batch.y, cb, chan, init_all_ones(cb.graph, 4))
    assert np.array_equal(decide(logits), batch.labels)


def test_perturbation_is_causal(cb, rng):
    chan = ChannelRealization.awgn(cb, 6.0)
    y = generate_batch(cb, chan, "random", 40, substream(2)).y
    p = jittered(cb, 3, rng)
    _, t0 = forward(y, cb, chan, p)
    q = p.copy()
    q.c[1, 4] += 0.5  # block 2, edge 5
    _, t1 = forward(y, cb, chan, q)
    assert np.array_equal(t0.LQ[0], t1.LQ[0]) and np.array_equal(t0.LQ[1], t1.LQ[1])
    assert np.array_equal(t0.LI_in[1], t1.LI_in[1])
    changed = np.flatnonzero(np.any(t0.LI_in[2] != t1.LI_in[2], axis=(0, 2)))
    assert list(changed) == [4]  # block-2 output differs only on the perturbed edge


def test_logit_shift_invariance(cb, rng):
    chan = ChannelRealization.awgn(cb, 6.0)
    y = generate_batch(cb, chan, "random", 40, substream(2)).y
    logits, tape = forward(y, cb, chan, jittered(cb, 2, rng))
    shifted = logits + rng.normal(size=(40, cb.J, 1)) * 30
    assert np.array_equal(decide(logits), decide(shifted))
    assert all(np.isfinite(x).all() for x in tape.LQ + tape.LI_in + [tape.logits])


def test_forward_rejects_mismatched_graph(cb, rng):
    other = random_codebook([[1, 1], [1, 0]], 4, rng)
    with pytest.raises(CodebookError):
        forward(np.zeros(4), cb, ChannelRealization.awgn(cb, 0), init_all_ones(other.graph, 1))


def test_checkpoint_round_trip(cb, rng, tmp_path):
    p = jittered(cb, 2, rng)
    path = tmp_path / "ck.json"
    save_checkpoint(p, path)
    q = load_checkpoint(path, cb.graph)
    assert np.array_equal(p.to_vector(), q.to_vector())
    assert q.T == 2 and q.size == 144


def test_checkpoint_rejects_other_graph(cb, rng, tmp_path):
    other = random_codebook([[1, 1], [1, 0]], 4, rng)
    path = tmp_path / "ck.json"
    save_checkpoint(init_all_ones(other.graph, 1), path)
    with pytest.raises(CodebookError, match="does not match"):
        load_checkpoint(path, cb.graph)
