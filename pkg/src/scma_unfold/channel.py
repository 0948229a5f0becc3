"""Superposition channel with AWGN, SNR mapping and labeled batch generation."""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .codec import Codebook, encode_labels

ENUMERATION_LIMIT = 2**24


class EnumerationError(ValueError):
    """Raised when an exhaustive enumeration of M^J combinations is refused."""


def substream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator addressed by (seed, key...); identical across runs."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


def snr_key(snr_db: float) -> int:
    """Stable non-negative integer identifying an SNR value inside a spawn key."""
    return int(np.float64(snr_db).view(np.uint64))


def snr_to_sigma2(snr_db: float, cb: Codebook) -> float:
    """Total complex noise variance per resource for the given SNR.

    SNR is average received signal power per resource (unit gains, averaged
    over users and symbols) over noise variance per resource.
    """
    return cb.signal_power() / 10.0 ** (snr_db / 10.0)


@dataclass(frozen=True, eq=False)
class ChannelRealization:
    h: np.ndarray  # (J, K) complex gains
    sigma2: float

    def __post_init__(self):
        if not self.sigma2 >= 0:
            raise ValueError(f"noise variance must be non-negative, got {self.sigma2}")
        h = np.array(self.h, dtype=np.complex128)
        h.setflags(write=False)
        object.__setattr__(self, "h", h)

    @property
    def beta(self) -> float:
        return float(np.log(1.0 / np.sqrt(2 * np.pi * self.sigma2)))

    @classmethod
    def awgn(cls, cb: Codebook, snr_db: float) -> ChannelRealization:
        return cls(np.ones((cb.J, cb.K), dtype=np.complex128), snr_to_sigma2(snr_db, cb))

    def with_sigma2(self, sigma2: float) -> ChannelRealization:
        return ChannelRealization(self.h, sigma2)


@dataclass(frozen=True, eq=False)
class LabeledSample:
    labels: np.ndarray
    y: np.ndarray
    chan: ChannelRealization


@dataclass(frozen=True, eq=False)
class Batch:
    """A stack of labeled samples sharing one channel realization."""

    labels: np.ndarray  # (B, J) int
    y: np.ndarray  # (B, K) complex
    chan: ChannelRealization

    def __len__(self):
        return len(self.labels)

    def __getitem__(self, i) -> LabeledSample:
        return LabeledSample(self.labels[i], self.y[i], self.chan)


def superpose(codewords, chan: ChannelRealization) -> np.ndarray:
    """Noiseless received vector sum_j h[j] * x_j for codewords of shape (..., J, K)."""
    x = np.asarray(codewords)
    if x.shape[-2:] != chan.h.shape:
        raise ValueError(f"dimension mismatch: codewords {x.shape[-2:]} vs gains {chan.h.shape}")
    return (chan.h * x).sum(axis=-2)


def awgn_vector(K, sigma2: float, rng: np.random.Generator) -> np.ndarray:
    """Circularly-symmetric complex Gaussian noise, total variance sigma2 per entry.

    ``K`` may be an int or a shape tuple.
    """
    if sigma2 < 0:
        raise ValueError(f"noise variance must be non-negative, got {sigma2}")
    shape = (K,) if np.isscalar(K) else tuple(K)
    z = rng.standard_normal(shape + (2,))
    return np.sqrt(sigma2 / 2) * (z[..., 0] + 1j * z[..., 1])


def all_labels(M: int, J: int) -> np.ndarray:
    """Every label combination in lexicographic order, shape (M**J, J)."""
    if M**J > ENUMERATION_LIMIT:
        raise EnumerationError(f"M^J = {M}^{J} exceeds the enumeration limit {ENUMERATION_LIMIT}")
    return np.array(list(itertools.product(range(M), repeat=J)), dtype=np.int64).reshape(-1, J)


def generate_batch(cb: Codebook, chan: ChannelRealization, mode: str, size: int | None,
                   rng: np.random.Generator) -> Batch:
    if mode == "exhaustive":
        labels = all_labels(cb.M, cb.J)
        if size is not None and size != len(labels):
            raise ValueError(f"exhaustive mode needs size = M^J = {len(labels)}, got {size}")
    elif mode == "random":
        if size < 0:
            raise ValueError("batch size must be non-negative")
        labels = rng.integers(0, cb.M, size=(size, cb.J))
    else:
        raise ValueError(f"unknown batch mode {mode!r}")
    y = superpose(encode_labels(cb, labels), chan)
    if chan.sigma2 > 0 and len(labels):
        y = y + awgn_vector(y.shape, chan.sigma2, rng)
    return Batch(labels, y, chan)
