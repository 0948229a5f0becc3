import numpy as np
import pytest

from scma_unfold.channel import (
    ChannelRealization,
    EnumerationError,
    all_labels,
    awgn_vector,
    generate_batch,
    snr_to_sigma2,
    substream,
    superpose,
)
from scma_unfold.codec import encode_labels, make_codebook


def test_snr_zero_default(cb):
    # P_s averaged by brute force over every label combination
    labels = all_labels(cb.M, cb.J)
    y0 = superpose(encode_labels(cb, labels), ChannelRealization.awgn(cb, 0.0))
    brute = (np.abs(y0) ** 2).mean()
    assert brute == pytest.approx(1.5, abs=1e-12)
    assert snr_to_sigma2(0.0, cb) == pytest.approx(1.5, abs=1e-12)


def test_snr_unit_power():
    cb = make_codebook(np.array([[[1.0], [-1.0]]]), [[1]])
    assert cb.signal_power() == 1.0
    assert snr_to_sigma2(10.0, cb) == pytest.approx(0.1)


def test_snr_monotone(cb):
    s = [snr_to_sigma2(x, cb) for x in np.linspace(-10, 60, 50)]
    assert all(a > b for a, b in zip(s, s[1:]))
    assert s[-1] < 1e-5


def test_beta_matches_formula():
    ch = ChannelRealization(np.ones((1, 1)), 0.3)
    assert ch.beta == np.log(1 / np.sqrt(2 * np.pi * 0.3))


def test_superpose_cases(cb):
    x = np.array([[1 + 2j, 0, 3j]])
    assert np.array_equal(superpose(x, ChannelRealization(np.ones((1, 3)), 1.0)), x[0])
    zeros = ChannelRealization(np.zeros((cb.J, cb.K)), 1.0)
    assert np.all(superpose(encode_labels(cb, np.zeros(cb.J, int)), zeros) == 0)
    ones = ChannelRealization.awgn(cb, 10.0)
    expected = sum(cb.codewords[j, 0] for j in range(cb.J))
    np.testing.assert_allclose(superpose(encode_labels(cb, np.zeros(cb.J, int)), ones), expected, rtol=0, atol=1e-15)
    with pytest.raises(ValueError):
        superpose(np.ones((2, 3)), ones)


def test_awgn_basic():
    assert np.all(awgn_vector(4, 0.0, substream(0)) == 0)
    a = awgn_vector(5, 1.0, substream(7))
    b = awgn_vector(5, 1.0, substream(7))
    assert np.array_equal(a, b)
    with pytest.raises(ValueError):
        awgn_vector(3, -1.0, substream(0))


def test_awgn_statistics():
    n = awgn_vector(10**6, 2.0, substream(3))
    assert 1.98 <= np.mean(np.abs(n) ** 2) <= 2.02
    # half the variance in each quadrature
    assert np.var(n.real) == pytest.approx(1.0, rel=0.01)
    assert np.var(n.imag) == pytest.approx(1.0, rel=0.01)
    assert abs(np.mean(n)) < 0.01


def test_exhaustive_batch(cb):
    chan = ChannelRealization.awgn(cb, 10.0)
    b1 = generate_batch(cb, chan, "exhaustive", 4096, substream(0))
    b2 = generate_batch(cb, chan, "exhaustive", None, substream(1))
    assert len(b1) == 4096
    assert len({tuple(r) for r in b1.labels}) == 4096
    assert np.array_equal(b1.labels, b2.labels)
    assert not np.allclose(b1.y, b2.y)
    with pytest.raises(ValueError):
        generate_batch(cb, chan, "exhaustive", 100, substream(0))


def test_random_batch(cb):
    chan = ChannelRealization.awgn(cb, 10.0)
    assert len(generate_batch(cb, chan, "random", 0, substream(0))) == 0
    b = generate_batch(cb, chan, "random", 20000, substream(0))
    counts = np.bincount(b.labels.ravel(), minlength=4) / b.labels.size
    np.testing.assert_allclose(counts, 0.25, atol=0.01)


def test_noiseless_batch_matches_oracle_hypotheses(cb):
    chan = ChannelRealization.awgn(cb, 10.0).with_sigma2(0.0)
    b = generate_batch(cb, chan, "exhaustive", None, substream(0))
    direct = np.array([sum(cb.codewords[j, m] for j, m in enumerate(row)) for row in b.labels[:50]])
    np.testing.assert_allclose(b.y[:50], direct, rtol=0, atol=1e-15)


def test_enumeration_guard():
    with pytest.raises(EnumerationError):
        all_labels(4, 13)
