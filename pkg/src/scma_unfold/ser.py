"""Monte-Carlo symbol-error-rate measurement and SNR sweeps.

Trials are split into fixed-size chunks of channel uses; chunk c at SNR s
draws labels and noise from ``substream(seed, snr_key(s), c)``. Chunks are
merged strictly in index order and the run stops inside the chunk where the
error target is reached, so results do not depend on the worker count. The
noise stream does not depend on the detector, so two detectors swept with the
same seed see identical channel realizations.
"""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelRealization, generate_batch, snr_key, substream
from .codec import Codebook
from .mpa import DetectorConfig, GraphTables, _all_hypotheses, decide, ml_oracle, run_mpa
from .unfolded import NetworkParams, forward

CSV_HEADER = ["detector", "iters_or_blocks", "snr_db", "trials", "errors", "ser", "ci95"]


class DetectorFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class MPADetector:
    iterations: int = 4
    variant: str = "max-log"
    normalize: bool = True

    @property
    def name(self) -> str:
        return "mpa-sp" if self.variant == "sum-product" else "mpa-maxlog"

    @property
    def size(self) -> int:
        return self.iterations

    def detect(self, y, cb, chan, rng):
        cfg = DetectorConfig(self.iterations, self.variant, self.normalize)
        return decide(run_mpa(y, cb, chan, cfg, GraphTables(cb, chan)))


@dataclass(frozen=True, eq=False)
class NetworkDetector:
    params: NetworkParams

    name = "nn"

    @property
    def size(self) -> int:
        return self.params.T

    def detect(self, y, cb, chan, rng):
        logits, _ = forward(y, cb, chan, self.params, record=False)
        return decide(logits)


@dataclass(frozen=True)
class MLDetector:
    name = "ml-oracle"
    size = 0

    def detect(self, y, cb, chan, rng):
        return ml_oracle(y, cb, chan, _all_hypotheses(cb, chan))


@dataclass(frozen=True)
class RandomGuessDetector:
    """Reference detector that ignores y; its SER is 1 - 1/M."""

    name = "random-guess"
    size = 0

    def detect(self, y, cb, chan, rng):
        return rng.integers(0, cb.M, size=(len(y), cb.J))


@dataclass(frozen=True)
class StopRule:
    min_errors: int = 100
    max_trials: int = 10**7  # channel uses
    chunk: int = 2048

    def __post_init__(self):
        if self.min_errors < 1 or self.max_trials < 1 or self.chunk < 1:
            raise ValueError("stop rule needs min_errors, max_trials and chunk >= 1")


@dataclass(frozen=True)
class SweepConfig:
    start: float = 0.0
    stop: float = 21.0
    step: float = 3.0
    min_errors: int = 100
    max_trials: int = 10**7
    seed: int = 0
    workers: int = 1
    chunk: int = 2048

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError(f"SNR step must be positive, got {self.step}")
        if self.stop < self.start:
            raise ValueError("SNR grid is empty (stop < start)")
        if self.min_errors < 1:
            raise ValueError("min_errors must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    def grid(self) -> list[float]:
        n = int(math.floor((self.stop - self.start) / self.step + 1e-9)) + 1
        return [round(self.start + i * self.step, 10) for i in range(n)]

    def stop_rule(self) -> StopRule:
        return StopRule(self.min_errors, self.max_trials, self.chunk)


@dataclass
class SerResult:
    detector: str
    iters_or_blocks: int
    snr_db: float
    trials: int  # symbol decisions, J per channel use
    errors: int
    ser: float = field(init=False)
    ci95: float = field(init=False)

    def __post_init__(self):
        if not 0 <= self.errors <= self.trials:
            raise ValueError("errors must lie in [0, trials]")
        self.ser = self.errors / self.trials if self.trials else 0.0
        self.ci95 = 1.96 * math.sqrt(self.ser * (1 - self.ser) / self.trials) if self.trials else 0.0

    @property
    def interval(self) -> tuple[float, float]:
        return self.ser - self.ci95, self.ser + self.ci95


def _run_chunk(args):
    detector, cb, snr_db, seed, c, n = args
    chan = ChannelRealization.awgn(cb, snr_db)
    batch = generate_batch(cb, chan, "random", n, substream(seed, snr_key(snr_db), c))
    try:
        est = detector.detect(batch.y, cb, chan, substream(seed, snr_key(snr_db), c, 1))
    except Exception as exc:
        raise DetectorFailure(f"{detector.name} failed at seed={seed} snr_db={snr_db} chunk={c}: {exc}") from exc
    return (est != batch.labels).sum(axis=1)


def run_ser_point(detector, cb: Codebook, snr_db: float, stop: StopRule = StopRule(), seed: int = 0,
                  workers: int = 1, pool: ProcessPoolExecutor | None = None) -> SerResult:
    uses = errors = 0
    c = 0
    own_pool = pool is None and workers > 1
    if own_pool:
        pool = ProcessPoolExecutor(workers)
    try:
        while uses < stop.max_trials and errors < stop.min_errors:
            wave = []
            planned = uses
            for _ in range(workers):
                n = min(stop.chunk, stop.max_trials - planned)
                if n <= 0:
                    break
                wave.append((detector, cb, snr_db, seed, c + len(wave), n))
                planned += n
            outs = pool.map(_run_chunk, wave) if workers > 1 else map(_run_chunk, wave)
            for per_use in outs:
                c += 1
                cum = errors + np.cumsum(per_use)
                hit = np.flatnonzero(cum >= stop.min_errors)
                if hit.size:
                    uses += int(hit[0]) + 1
                    errors = int(cum[hit[0]])
                    break
                uses += len(per_use)
                errors = int(cum[-1]) if len(cum) else errors
    finally:
        if own_pool:
            pool.shutdown()
    return SerResult(detector.name, detector.size, float(snr_db), uses * cb.J, errors)


def run_sweep(detectors, cb: Codebook, cfg: SweepConfig) -> list[SerResult]:
    results = []
    pool = ProcessPoolExecutor(cfg.workers) if cfg.workers > 1 and detectors else None
    try:
        for det in detectors:
            for snr in cfg.grid():
                results.append(run_ser_point(det, cb, snr, cfg.stop_rule(), cfg.seed, cfg.workers, pool))
    finally:
        if pool is not None:
            pool.shutdown()
    return results


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def csv_text(results) -> str:
    """CSV rows sorted by (detector, iters_or_blocks, snr_db)."""
    rows = sorted(results, key=lambda r: (r.detector, r.iters_or_blocks, r.snr_db))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow([r.detector, r.iters_or_blocks, _fmt(r.snr_db), r.trials, r.errors, _fmt(r.ser), _fmt(r.ci95)])
    return buf.getvalue()


def write_csv(results, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(csv_text(results))


def read_csv(path) -> list[SerResult]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CSV_HEADER:
            raise ValueError(f"unexpected CSV header {reader.fieldnames}")
        return [SerResult(r["detector"], int(r["iters_or_blocks"]), float(r["snr_db"]), int(r["trials"]),
                          int(r["errors"])) for r in reader]
