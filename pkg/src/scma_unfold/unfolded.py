"""Unfolded max-log MPA with trainable per-edge weights.

Block l (1..T) is a weighted user-to-resource layer followed by a weighted
pooling-concat layer::

    LQ[e=(k,j)] = b[l,e] ln p(x_j) + sum_{k2 in C(j)\\k} wQ[l,(e,k2)] LI[(k2,j)]
    LI[e=(k,j)](m) = max over V(k)\\j combinations of
                     -c[l,e] A_k / (2 sigma^2) + sum_{j2} wI[l,(e,j2)] LQ[(k,j2)](m_j2)
                     + a[l,e] beta

Block 1 sees zero incoming LI (the placeholder input), so with b = 1 its LQ is
the log prior. With every weight equal to 1 the network computes exactly the
T-iteration max-log MPA.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .channel import ChannelRealization
from .codec import Codebook, CodebookError, FactorGraph, build_factor_graph
from .mpa import GraphTables, NumericalError, _as_batch, log_prior

PARAM_NAMES = ("wI", "c", "a", "wQ", "b")


def weight_pairs(graph: FactorGraph) -> tuple[list[tuple[int, int]], list[tuple[int, int]]]:
    """Canonical (edge, peer edge) pairs for the wI and wQ weights.

    wI pairs: for each edge (k, j), the edges (k, j2), j2 in V(k)\\j ascending.
    wQ pairs: for each edge (k, j), the edges (k2, j), k2 in C(j)\\k ascending.
    """
    pI = [(e, e2) for e in range(graph.E) for e2 in graph.resource_peers(e)]
    pQ = [(e, e2) for e in range(graph.E) for e2 in graph.user_peers(e)]
    return pI, pQ


@dataclass(eq=False)
class NetworkParams:
    graph: FactorGraph
    wI: np.ndarray  # (T, n_wI)
    c: np.ndarray  # (T, E)
    a: np.ndarray  # (T, E)
    wQ: np.ndarray  # (T, n_wQ)
    b: np.ndarray  # (T, E)
    tie_a: bool = False
    pairs_I: list = field(init=False, repr=False)
    pairs_Q: list = field(init=False, repr=False)

    def __post_init__(self):
        self.pairs_I, self.pairs_Q = weight_pairs(self.graph)
        T, E = self.T, self.graph.E
        expected = {"wI": (T, len(self.pairs_I)), "c": (T, E), "a": (T, E),
                    "wQ": (T, len(self.pairs_Q)), "b": (T, E)}
        for name, shape in expected.items():
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != shape:
                raise ValueError(f"parameter {name} has shape {arr.shape}, expected {shape}")
            setattr(self, name, arr)

    @property
    def T(self) -> int:
        return np.shape(self.c)[0]

    @property
    def size(self) -> int:
        return sum(getattr(self, n).size for n in PARAM_NAMES)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([getattr(self, n).ravel() for n in PARAM_NAMES])

    def with_vector(self, vec) -> NetworkParams:
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (self.size,):
            raise ValueError(f"parameter vector has shape {vec.shape}, expected ({self.size},)")
        parts, i = {}, 0
        for n in PARAM_NAMES:
            shape = getattr(self, n).shape
            size = int(np.prod(shape))
            parts[n] = vec[i:i + size].reshape(shape).copy()
            i += size
        return NetworkParams(self.graph, tie_a=self.tie_a, **parts)

    def copy(self) -> NetworkParams:
        return self.with_vector(self.to_vector())


def init_all_ones(graph: FactorGraph, T: int, tie_a: bool = False) -> NetworkParams:
    if T < 1:
        raise ValueError(f"block count must be >= 1, got {T}")
    pI, pQ = weight_pairs(graph)
    E = graph.E
    return NetworkParams(graph, np.ones((T, len(pI))), np.ones((T, E)), np.ones((T, E)),
                         np.ones((T, len(pQ))), np.ones((T, E)), tie_a=tie_a)


@dataclass
class Tape:
    """Everything backward needs: inputs and argmax routes of every block."""

    D: list  # per resource (B, n_hyp): A_k / (2 sigma^2)
    beta: float
    lnp: np.ndarray
    LI_in: list = field(default_factory=list)  # per block (B, E, M)
    LQ: list = field(default_factory=list)  # per block (B, E, M)
    win: list = field(default_factory=list)  # per block (B, E, M) winning hypothesis index
    LI_out: np.ndarray | None = None
    logits: np.ndarray | None = None


def q_layer(LI_prev: np.ndarray, params: NetworkParams, l: int, lnp: np.ndarray) -> np.ndarray:
    """Weighted user-to-resource messages of block l (0-indexed)."""
    g = params.graph
    LQ = np.empty_like(LI_prev)
    b, wQ = params.b[l], params.wQ[l]
    i = 0
    for e in range(g.E):
        acc = b[e] * lnp[g.edges[e][1]]
        while i < len(params.pairs_Q) and params.pairs_Q[i][0] == e:
            acc = acc + wQ[i] * LI_prev[:, params.pairs_Q[i][1]]
            i += 1
        LQ[:, e] = acc
    return LQ


def pooling_concat_layer(LQ: np.ndarray, D: list, params: NetworkParams, l: int, tables: GraphTables,
                         beta: float, record: bool = True) -> tuple[np.ndarray, np.ndarray | None]:
    """Weighted max-pooled resource-to-user messages of block l and their argmax routes.

    Routes are the winning hypothesis index per (sample, edge, symbol); ties go
    to the lexicographically first competing combination. With
    ``record=False`` only the messages are computed and routes are None.
    """
    g = params.graph
    B, E, M = LQ.shape
    LI = np.empty_like(LQ)
    win = np.empty(LQ.shape, dtype=np.int64) if record else None
    c, a, wI = params.c[l], params.a[l], params.wI[l]
    i = 0
    for e in range(E):
        k = g.edges[e][0]
        term = -c[e] * tables.grid(D[k], k)
        while i < len(params.pairs_I) and params.pairs_I[i][0] == e:
            e2 = params.pairs_I[i][1]
            term += wI[i] * tables.along(LQ[:, e2], e, e2)
            i += 1
        terms = tables.pool(term, e)
        if record:
            o = np.argmax(terms, axis=2)
            LI[:, e] = np.take_along_axis(terms, o[..., None], axis=2)[..., 0] + a[e] * beta
            win[:, e] = tables.gather[e][np.arange(M), o]
        else:
            LI[:, e] = terms.max(axis=2) + a[e] * beta
    return LI, win


def _check_block(msg, g, kind, l):
    bad = ~np.isfinite(msg).all(axis=(0, 2))
    if bad.any():
        k, j = g.edges[int(np.flatnonzero(bad)[0])]
        raise NumericalError(f"non-finite {kind} message on edge (k={k + 1}, j={j + 1}) in block {l + 1}")


def forward(y, cb: Codebook, chan: ChannelRealization, params: NetworkParams, prior=None,
            tables: GraphTables | None = None, record: bool = True) -> tuple[np.ndarray, Tape]:
    """Per-user logits (B, J, M) and the tape for backward.

    ``record=False`` skips the argmax routes and per-block messages (inference).
    """
    if params.graph != cb.graph:
        raise CodebookError("network parameters do not match the codebook's factor graph")
    if params.T < 1:
        raise ValueError("network needs at least one block")
    y, single = _as_batch(y)
    g = cb.graph
    tables = tables or GraphTables(cb, chan)
    tape = Tape(tables.distances(y), chan.beta, log_prior(cb, prior))
    LI = np.zeros((len(y), g.E, cb.M))
    with np.errstate(invalid="ignore", over="ignore"):
        for l in range(params.T):
            LQ = q_layer(LI, params, l, tape.lnp)
            _check_block(LQ, g, "LQ", l)
            if record:
                tape.LI_in.append(LI)
                tape.LQ.append(LQ)
            LI, win = pooling_concat_layer(LQ, tape.D, params, l, tables, tape.beta, record)
            _check_block(LI, g, "LI", l)
            if record:
                tape.win.append(win)
    tape.LI_out = LI
    logits = np.empty((len(y), cb.J, cb.M))
    for j in range(cb.J):
        acc = tape.lnp[j]
        for e in g.user_edges(j):
            acc = acc + LI[:, e]
        logits[:, j] = acc
    tape.logits = logits
    return (logits[0], tape) if single else (logits, tape)


def backward(tape: Tape, dlogits: np.ndarray, params: NetworkParams, tables: GraphTables) -> NetworkParams:
    """Gradient of a scalar with respect to params given d(scalar)/d(logits).

    Max nodes pass gradient only to the recorded winning hypothesis.
    """
    g = params.graph
    dlogits = np.asarray(dlogits)
    if dlogits.shape != tape.logits.shape:
        raise ValueError(f"logit gradient shape {dlogits.shape} does not match tape {tape.logits.shape}")
    B, E, M = tape.LI_out.shape
    grad = {n: np.zeros_like(getattr(params, n)) for n in PARAM_NAMES}
    dLI = np.empty((B, E, M))
    for e, (k, j) in enumerate(g.edges):
        dLI[:, e] = dlogits[:, j]
    rows = np.arange(B)[:, None]
    flat = rows * M
    for l in reversed(range(params.T)):
        LQ, win, LI_in = tape.LQ[l], tape.win[l], tape.LI_in[l]
        grad["a"][l] = tape.beta * dLI.sum(axis=(0, 2))
        dLQ = np.zeros_like(dLI)
        i = 0
        for e in range(E):
            k = g.edges[e][0]
            gl = dLI[:, e]
            grad["c"][l, e] = -(gl * np.take_along_axis(tape.D[k], win[:, e], axis=1)).sum()
            while i < len(params.pairs_I) and params.pairs_I[i][0] == e:
                e2 = params.pairs_I[i][1]
                s = tables.peer_symbols(e, e2)[win[:, e]]  # (B, M) symbol of peer user
                grad["wI"][l, i] = (gl * LQ[:, e2][rows, s]).sum()
                dLQ[:, e2] += params.wI[l, i] * np.bincount((flat + s).ravel(), gl.ravel(),
                                                             minlength=B * M).reshape(B, M)
                i += 1
        lnp = tape.lnp
        dLI_prev = np.zeros_like(dLI)
        i = 0
        for e in range(E):
            j = g.edges[e][1]
            gq = dLQ[:, e]
            grad["b"][l, e] = (gq * lnp[j]).sum()
            while i < len(params.pairs_Q) and params.pairs_Q[i][0] == e:
                e2 = params.pairs_Q[i][1]
                grad["wQ"][l, i] = (gq * LI_in[:, e2]).sum()
                dLI_prev[:, e2] += params.wQ[l, i] * gq
                i += 1
        dLI = dLI_prev
    if params.tie_a:
        grad["a"][:] = grad["a"].sum(axis=0)
    return NetworkParams(g, tie_a=params.tie_a, **grad)


def save_checkpoint(params: NetworkParams, path) -> None:
    doc = {"T": params.T, "F": params.graph.F.tolist(), "tie_a": params.tie_a}
    for n in PARAM_NAMES:
        doc[n] = [float(v) for v in getattr(params, n).ravel()]
    Path(path).write_text(json.dumps(doc) + "\n", encoding="utf-8")


def load_checkpoint(path, graph: FactorGraph) -> NetworkParams:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise CodebookError(f"checkpoint file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise CodebookError(f"parse error in checkpoint {path}: {exc}") from None
    known = {"T", "F", "tie_a", *PARAM_NAMES}
    if not isinstance(doc, dict) or set(doc) - known or {"T", "F", *PARAM_NAMES} - set(doc):
        raise CodebookError(f"checkpoint {path} has missing or unknown keys")
    if build_factor_graph(doc["F"]) != graph:
        raise CodebookError("checkpoint factor graph does not match the active codebook")
    T = doc["T"]
    if not isinstance(T, int) or T < 1:
        raise CodebookError(f"checkpoint block count must be a positive integer, got {T!r}")
    template = init_all_ones(graph, T, tie_a=bool(doc.get("tie_a", False)))
    parts = []
    for n in PARAM_NAMES:
        vals = np.asarray(doc[n], dtype=np.float64)
        if vals.shape != (getattr(template, n).size,):
            raise CodebookError(f"checkpoint parameter {n} has {vals.size} entries, "
                                f"expected {getattr(template, n).size} for T={T}")
        parts.append(vals)
    return template.with_vector(np.concatenate(parts))


@dataclass
class EquivalenceReport:
    max_rel_dev: float
    worst_sample: int
    worst_snr_db: float
    samples: int

    def passed(self, tol: float = 1e-9) -> bool:
        return self.max_rel_dev <= tol


def verify_equivalence(cb: Codebook, T: int, samples: int, seed: int = 0, snrs=(0.0, 9.0, 18.0),
                       params: NetworkParams | None = None) -> EquivalenceReport:
    """Compare the network (all-ones unless ``params`` given) with T-iteration max-log MPA.

    Sample i uses SNR ``snrs[i % len(snrs)]`` and labels/noise from
    ``substream(seed, i)``. Renormalization is off on the MPA side.
    """
    from .channel import generate_batch, substream
    from .mpa import DetectorConfig, run_mpa

    params = params if params is not None else init_all_ones(cb.graph, T)
    cfg = DetectorConfig(T, "max-log", normalize=False)
    worst = (-1.0, -1, float("nan"))
    for s, snr in enumerate(snrs):
        idx = list(range(s, samples, len(snrs)))
        if not idx:
            continue
        chan = ChannelRealization.awgn(cb, snr)
        ys = np.stack([generate_batch(cb, chan, "random", 1, substream(seed, i)).y[0] for i in idx])
        tables = GraphTables(cb, chan)
        nn, _ = forward(ys, cb, chan, params, tables=tables)
        ref = run_mpa(ys, cb, chan, cfg, tables)
        scale = np.maximum(np.abs(ref).max(axis=(1, 2)), np.finfo(float).tiny)
        dev = np.abs(nn - ref).max(axis=(1, 2)) / scale
        w = int(np.argmax(dev))
        if dev[w] > worst[0]:
            worst = (float(dev[w]), idx[w], snr)
    return EquivalenceReport(worst[0], worst[1], worst[2], samples)
