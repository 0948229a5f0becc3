"""Offline training of the unfolded detector: loss, gradients, Adam, loop."""
from __future__ import annotations

import csv
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import log_softmax, softmax

from .channel import ChannelRealization, generate_batch, substream
from .codec import Codebook
from .mpa import GraphTables, NumericalError
from .unfolded import NetworkParams, backward, forward, init_all_ones, save_checkpoint

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    T: int = 4
    lr: float = 1e-3
    steps: int = 2000
    train_snr_db: float = 16.0
    batch_mode: str = "exhaustive"
    seed: int = 0
    adam: tuple = (0.9, 0.999, 1e-8)
    tie_a_across_blocks: bool = False

    def __post_init__(self):
        if not self.lr >= 0:
            raise ValueError(f"learning rate must be non-negative, got {self.lr}")
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if self.T < 1:
            raise ValueError(f"block count must be >= 1, got {self.T}")
        if self.batch_mode != "exhaustive":
            raise ValueError("only the exhaustive batch mode is supported for training")
        self.adam = tuple(self.adam)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros_like(cls, params: NetworkParams) -> AdamState:
        n = params.size
        return cls(np.zeros(n), np.zeros(n))


def loss(logits, labels) -> float:
    """Batch mean of the per-sample sum over users of softmax cross-entropy."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    if logits.ndim == 2:
        logits, labels = logits[None], labels[None]
    if np.isnan(logits).any():
        raise NumericalError("NaN in logits")
    lp = log_softmax(logits, axis=-1)
    picked = np.take_along_axis(lp, labels[..., None], axis=-1)[..., 0]
    return float(-picked.sum(axis=1).mean())


def loss_grad(logits, labels) -> np.ndarray:
    """d loss / d logits for the batch-mean loss above."""
    p = softmax(logits, axis=-1)
    B, J, M = logits.shape
    p[np.arange(B)[:, None], np.arange(J)[None, :], labels] -= 1.0
    return p / B


def loss_and_grad(y, labels, cb: Codebook, chan: ChannelRealization, params: NetworkParams,
                  tables: GraphTables | None = None) -> tuple[float, NetworkParams, np.ndarray]:
    tables = tables or GraphTables(cb, chan)
    logits, tape = forward(y, cb, chan, params, tables=tables)
    labels = np.atleast_2d(labels)
    value = loss(logits, labels)
    grad = backward(tape, loss_grad(logits, labels), params, tables)
    return value, grad, logits


def adam_step(params: NetworkParams, grad: NetworkParams, state: AdamState, lr: float,
              betas=(0.9, 0.999, 1e-8)) -> tuple[NetworkParams, AdamState]:
    b1, b2, eps = betas
    g = grad.to_vector()
    if g.shape != state.m.shape or params.size != g.size:
        raise ValueError("gradient, optimizer state and parameters have mismatched shapes")
    t = state.t + 1
    m = b1 * state.m + (1 - b1) * g
    v = b2 * state.v + (1 - b2) * g * g
    m_hat = m / (1 - b1**t)
    v_hat = v / (1 - b2**t)
    new = params.to_vector() - lr * m_hat / (np.sqrt(v_hat) + eps)
    return params.with_vector(new), AdamState(m, v, t)


@dataclass
class TrainResult:
    params: NetworkParams
    losses: list = field(default_factory=list)
    wall_ms: list = field(default_factory=list)

    @property
    def baseline(self) -> float:
        return self.losses[0]


def train(cb: Codebook, cfg: TrainConfig, checkpoint: str | Path | None = None,
          log_csv: str | Path | None = None, progress_every: int = 100) -> TrainResult:
    """Full-batch training from all-ones weights at a fixed SNR.

    Step s draws a fresh exhaustive batch (all M^J label combinations) with
    noise from substream (seed, s). ``losses[s]`` is the loss of the parameters
    *before* update s, so ``losses[0]`` is the all-ones (max-log MPA) baseline.
    """
    chan = ChannelRealization.awgn(cb, cfg.train_snr_db)
    tables = GraphTables(cb, chan)
    params = init_all_ones(cb.graph, cfg.T, tie_a=cfg.tie_a_across_blocks)
    state = AdamState.zeros_like(params)
    result = TrainResult(params)
    t0 = time.perf_counter()
    for step in range(cfg.steps):
        batch = generate_batch(cb, chan, cfg.batch_mode, None, substream(cfg.seed, step))
        try:
            value, grad, logits = loss_and_grad(batch.y, batch.labels, cb, chan, params, tables)
        except NumericalError as exc:
            raise NumericalError(f"step {step}: {exc}") from None
        if not np.isfinite(value):
            bad = int(np.flatnonzero(~np.isfinite(logits).all(axis=(1, 2)))[0]) if not np.isfinite(
                logits).all() else 0
            raise NumericalError(f"step {step}: non-finite loss; sample {bad} labels={batch.labels[bad].tolist()} "
                                 f"y={batch.y[bad].tolist()}")
        params, state = adam_step(params, grad, state, cfg.lr, cfg.adam)
        result.losses.append(value)
        result.wall_ms.append((time.perf_counter() - t0) * 1e3)
        if progress_every and step % progress_every == 0:
            log.info("step %d loss %.6f", step, value)
    result.params = params
    if checkpoint is not None:
        save_checkpoint(params, checkpoint)
    if log_csv is not None:
        write_loss_log(result, log_csv)
    return result


def write_loss_log(result: TrainResult, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "loss", "wall_ms"])
        for s, (v, ms) in enumerate(zip(result.losses, result.wall_ms)):
            w.writerow([s, repr(v), f"{ms:.3f}"])


def config_dict(cfg: TrainConfig) -> dict:
    return asdict(cfg)


GRAD_FLOOR = 1e-6


@dataclass
class GradcheckReport:
    probes: list  # (flat index, analytic, finite difference, relative error)
    skipped_ties: int
    requested: int

    @property
    def max_rel_err(self) -> float:
        return max((p[3] for p in self.probes), default=0.0)

    def passed(self, tol: float = 1e-4) -> bool:
        return len(self.probes) == self.requested and self.max_rel_err < tol


def gradcheck(cb: Codebook, T: int, probes: int, seed: int = 0, h: float = 1e-5, snr_db: float = 10.0,
              batch: int = 32, jitter: float = 0.1) -> GradcheckReport:
    """Central finite differences of the loss against ``backward`` on random probes.

    Weights are all-ones plus Gaussian jitter so gradients are generic. A probe
    whose +h or -h evaluation changes any recorded argmax route straddles a
    max tie; it is skipped and another parameter is drawn, up to 50 draws per
    requested probe. Probes are drawn among parameters whose analytic gradient
    exceeds ``GRAD_FLOOR``: the a/b weights and block-1 wQ have identically
    zero gradient and would only compare roundoff.
    """
    if probes < 1:
        raise ValueError("probes must be >= 1")
    rng = substream(seed, 0)
    chan = ChannelRealization.awgn(cb, snr_db)
    tables = GraphTables(cb, chan)
    base = init_all_ones(cb.graph, T)
    vec = base.to_vector() + jitter * rng.standard_normal(base.size)
    params = base.with_vector(vec)
    data = generate_batch(cb, chan, "random", batch, substream(seed, 1))
    _, tape0 = forward(data.y, cb, chan, params, tables=tables)
    _, grad, _ = loss_and_grad(data.y, data.labels, cb, chan, params, tables)
    g = grad.to_vector()

    def evaluate(v):
        logits, tape = forward(data.y, cb, chan, params.with_vector(v), tables=tables)
        return loss(logits, data.labels), tape.win

    live = np.flatnonzero(np.abs(g) > GRAD_FLOOR)
    out, skipped = [], 0
    for _ in range(50 * probes):
        if len(out) == probes or live.size == 0:
            break
        i = int(live[rng.integers(live.size)])
        vp, vm = vec.copy(), vec.copy()
        vp[i] += h
        vm[i] -= h
        lp, wp = evaluate(vp)
        lm, wm = evaluate(vm)
        if any(not np.array_equal(a, b) for w in (wp, wm) for a, b in zip(w, tape0.win)):
            skipped += 1
            continue
        fd = (lp - lm) / (2 * h)
        rel = abs(fd - g[i]) / max(abs(fd), abs(g[i]), GRAD_FLOOR)
        out.append((i, float(g[i]), float(fd), float(rel)))
    return GradcheckReport(out, skipped, probes)
