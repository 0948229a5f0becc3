"""Message passing detectors (sum-product and max-log) and brute-force oracles.

Messages live in arrays of shape (B, E, M): batch, factor-graph edge in
canonical order, symbol. ``LI[:, e]`` is the resource-to-user message on edge
e = (k, j) and ``LQ[:, e]`` the user-to-resource message on the same edge.
All functions accept a single received vector of shape (K,) or a batch (B, K).
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .channel import ChannelRealization, EnumerationError, all_labels
from .codec import Codebook


class NumericalError(ArithmeticError):
    """A message or logit became NaN/Inf."""


@dataclass(frozen=True)
class DetectorConfig:
    iterations: int = 4
    variant: str = "max-log"  # or "sum-product"
    normalize: bool = True
    prior: np.ndarray | None = None  # (J, M); uniform when None

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")
        if self.variant not in ("max-log", "sum-product"):
            raise ValueError(f"unknown MPA variant {self.variant!r}")
        if self.prior is not None:
            p = np.asarray(self.prior, dtype=float)
            if np.any(p <= 0) or np.any(np.abs(p.sum(axis=-1) - 1) > 1e-12):
                raise ValueError("prior entries must be positive and sum to 1 per user")


def log_prior(cb: Codebook, prior=None) -> np.ndarray:
    if prior is None:
        return np.full((cb.J, cb.M), np.log(1.0 / cb.M))
    return np.log(np.broadcast_to(np.asarray(prior, dtype=float), (cb.J, cb.M)))


@dataclass
class MessageState:
    LI: np.ndarray
    LQ: np.ndarray
    t: int = 0


class GraphTables:
    """Per-resource hypothesis tables shared by MPA and the unfolded network.

    For resource k the hypotheses are all symbol combinations of V(k) in
    lexicographic order (users ascending). ``points[k]`` holds the noiseless
    superposition on resource k for each hypothesis, ``symbols[k]`` the
    (n_hyp, dc) symbol table, and ``gather[e]`` the (M, M**(dc-1)) table of
    hypotheses with user j of edge e fixed to each symbol; its second axis
    runs over the competing users' combinations, again lexicographically.
    """

    def __init__(self, cb: Codebook, chan: ChannelRealization):
        g = cb.graph
        M = cb.M
        self.cb, self.chan, self.graph = cb, chan, g
        self.symbols, self.points = [], []
        for k in range(g.K):
            users = np.array(g.V[k])
            if M ** len(users) > 2**20:
                raise EnumerationError(f"resource {k + 1}: M^dc = {M}^{len(users)} hypotheses is too many")
            sym = np.array(list(itertools.product(range(M), repeat=len(users))), dtype=np.int64)
            self.symbols.append(sym)
            self.points.append((chan.h[users, k] * cb.codewords[users, sym, k]).sum(axis=1))
        self.gather = []
        self.position = []  # position of j within V(k) for edge (k, j)
        for k, j in g.edges:
            dc = len(g.V[k])
            p = g.V[k].index(j)
            combos = list(itertools.product(range(M), repeat=dc - 1))
            others = np.array(combos, dtype=np.int64).reshape(len(combos), dc - 1)
            table = np.empty((M, len(others)), dtype=np.int64)
            for m in range(M):
                full = np.insert(others, p, m, axis=1)
                table[m] = np.ravel_multi_index(full.T, (M,) * dc)
            self.gather.append(table)
            self.position.append(p)

    def peer_symbols(self, e: int, e2: int) -> np.ndarray:
        """Symbol of edge e2's user in each hypothesis of edge e's resource."""
        k = self.graph.edges[e][0]
        return self.symbols[k][:, self.position[e2]]

    def distances(self, y: np.ndarray) -> list[np.ndarray]:
        """A_k / (2 sigma^2) for every hypothesis, list over k of (B, n_hyp)."""
        s = 2.0 * self.chan.sigma2
        return [np.abs(y[:, k, None] - self.points[k][None, :]) ** 2 / s for k in range(self.graph.K)]

    def grid(self, D_k: np.ndarray, k: int) -> np.ndarray:
        """View (B, n_hyp) as (B, M, ..., M) with one axis per user of V(k)."""
        return D_k.reshape((len(D_k),) + (self.cb.M,) * len(self.graph.V[k]))

    def along(self, msg: np.ndarray, e: int, e2: int) -> np.ndarray:
        """Broadcast a (B, M) message of edge e2 along its user's axis in e's hypothesis grid."""
        k = self.graph.edges[e][0]
        shape = [len(msg)] + [1] * len(self.graph.V[k])
        shape[1 + self.position[e2]] = self.cb.M
        return msg.reshape(shape)

    def pool(self, term: np.ndarray, e: int) -> np.ndarray:
        """Rearrange a hypothesis grid to (B, M, n_other) with user j of edge e first."""
        p = self.position[e]
        return np.moveaxis(term, 1 + p, 1).reshape(len(term), self.cb.M, -1)


def _as_batch(y) -> tuple[np.ndarray, bool]:
    y = np.asarray(y, dtype=np.complex128)
    return (y[None, :], True) if y.ndim == 1 else (y, False)


def compute_Ak(y_k: complex, hypothesis: dict, cb: Codebook, chan: ChannelRealization, k: int) -> float:
    """Squared residual on resource k for a hypothesis {user: symbol} over V(k)."""
    if not 0 <= k < cb.K:
        raise IndexError(f"resource index {k} out of range")
    users = cb.graph.V[k]
    missing = [j for j in users if j not in hypothesis]
    if missing:
        raise ValueError(f"hypothesis is missing users {missing} of V({k + 1})")
    s = sum(chan.h[j, k] * cb.codewords[j, hypothesis[j], k] for j in users)
    return float(abs(y_k - s) ** 2)


def _check_edge(cb: Codebook, k: int, j: int) -> int:
    try:
        return cb.graph.edge_index[k, j]
    except KeyError:
        raise ValueError(f"({k + 1}, {j + 1}) is not an edge of the factor graph") from None


def _incoming(tables: GraphTables, D_k: np.ndarray, LQ: np.ndarray, e: int) -> np.ndarray:
    """-A_k/(2 sigma^2) + sum of incoming LQ over the hypothesis grid of e's resource."""
    k = tables.graph.edges[e][0]
    term = -tables.grid(D_k, k)
    for e2 in tables.graph.resource_peers(e):
        term += tables.along(LQ[:, e2], e, e2)
    return term


def _I_update(tables, D, LQ, e, variant):
    k = tables.graph.edges[e][0]
    terms = _incoming(tables, D[k], LQ, e)
    terms = tables.pool(terms, e)
    red = terms.max(axis=2) if variant == "max-log" else logsumexp(terms, axis=2)
    return red + tables.chan.beta


def _Q_update(graph, lnp, LI, e):
    out = lnp[graph.edges[e][1]]
    for e2 in graph.user_peers(e):
        out = out + LI[:, e2]
    return np.broadcast_to(out, (LI.shape[0], LI.shape[2]))


def _edge_call(state, y, cb, chan, k, j, variant):
    e = _check_edge(cb, k, j)
    y, single = _as_batch(y)
    LQ = np.asarray(state.LQ)
    LQ = LQ[None] if LQ.ndim == 2 else LQ
    tables = GraphTables(cb, chan)
    out = _I_update(tables, tables.distances(y), LQ, e, variant)
    return out[0] if single else out


def sum_product_I(state: MessageState, y, cb: Codebook, chan: ChannelRealization, k: int, j: int) -> np.ndarray:
    """Log resource-to-user message on edge (k, j), exact marginalization."""
    return _edge_call(state, y, cb, chan, k, j, "sum-product")


def maxlog_I(state: MessageState, y, cb: Codebook, chan: ChannelRealization, k: int, j: int) -> np.ndarray:
    """Log resource-to-user message on edge (k, j), max over competing hypotheses."""
    return _edge_call(state, y, cb, chan, k, j, "max-log")


def maxlog_Q(state: MessageState, cb: Codebook, cfg: DetectorConfig, j: int, k: int) -> np.ndarray:
    e = _check_edge(cb, k, j)
    LI = np.asarray(state.LI)
    single = LI.ndim == 2
    LI = LI[None] if single else LI
    out = _Q_update(cb.graph, log_prior(cb, cfg.prior), LI, e)
    return out[0] if single else out


# Both variants are sums in the log domain.
sum_product_Q = maxlog_Q


def _normalize(msg: np.ndarray) -> np.ndarray:
    return msg - msg.max(axis=-1, keepdims=True)


def _check_finite(msg, graph, kind, t):
    bad = ~np.isfinite(msg).all(axis=(0, 2))
    if bad.any():
        k, j = graph.edges[int(np.flatnonzero(bad)[0])]
        raise NumericalError(f"non-finite {kind} message on edge (k={k + 1}, j={j + 1}) at iteration {t}")


def run_messages(y, cb: Codebook, chan: ChannelRealization, cfg: DetectorConfig,
                 tables: GraphTables | None = None) -> MessageState:
    """Flooding schedule: every iteration updates all LQ, then all LI."""
    y, _ = _as_batch(y)
    g = cb.graph
    tables = tables or GraphTables(cb, chan)
    D = tables.distances(y)
    lnp = log_prior(cb, cfg.prior)
    B = len(y)
    LI = np.zeros((B, g.E, cb.M))
    LQ = np.empty_like(LI)
    with np.errstate(invalid="ignore", over="ignore"):
        for t in range(1, cfg.iterations + 1):
            for e in range(g.E):
                LQ[:, e] = _Q_update(g, lnp, LI, e)
            if cfg.normalize:
                LQ = _normalize(LQ)
            _check_finite(LQ, g, "LQ", t)
            LI_new = np.empty_like(LI)
            for e in range(g.E):
                LI_new[:, e] = _I_update(tables, D, LQ, e, cfg.variant)
            LI = _normalize(LI_new) if cfg.normalize else LI_new
            _check_finite(LI, g, "LI", t)
    return MessageState(LI, LQ, cfg.iterations)


def output_logits(LI: np.ndarray, cb: Codebook, prior=None) -> np.ndarray:
    """ln p(x_j) + sum of all incoming LI at user j; shape (B, J, M)."""
    lnp = log_prior(cb, prior)
    out = np.empty((LI.shape[0], cb.J, cb.M))
    for j in range(cb.J):
        acc = lnp[j]
        for e in cb.graph.user_edges(j):
            acc = acc + LI[:, e]
        out[:, j] = acc
    return out


def run_mpa(y, cb: Codebook, chan: ChannelRealization, cfg: DetectorConfig = DetectorConfig(),
            tables: GraphTables | None = None) -> np.ndarray:
    y, single = _as_batch(y)
    state = run_messages(y, cb, chan, cfg, tables)
    logits = output_logits(state.LI, cb, cfg.prior)
    return logits[0] if single else logits


def decide(logits) -> np.ndarray:
    """Per-user argmax; ties go to the lowest symbol index."""
    logits = np.asarray(logits)
    if np.isnan(logits).any():
        raise NumericalError("NaN in logits")
    return np.argmax(logits, axis=-1)


@dataclass
class _Hypotheses:
    labels: np.ndarray
    points: np.ndarray = field(repr=False)


def _all_hypotheses(cb: Codebook, chan: ChannelRealization) -> _Hypotheses:
    labels = all_labels(cb.M, cb.J)
    points = (chan.h[None] * cb.codewords[np.arange(cb.J), labels]).sum(axis=1)
    return _Hypotheses(labels, points)


def _chunks(n, size):
    for s in range(0, n, size):
        yield slice(s, min(s + size, n))


def ml_oracle(y, cb: Codebook, chan: ChannelRealization, hyp: _Hypotheses | None = None) -> np.ndarray:
    """Exhaustive joint ML detection; ties go to the lexicographically first combination."""
    y, single = _as_batch(y)
    hyp = hyp or _all_hypotheses(cb, chan)
    out = np.empty((len(y), cb.J), dtype=np.int64)
    step = max(1, 2**22 // len(hyp.labels))
    for sl in _chunks(len(y), step):
        d = (np.abs(y[sl, None, :] - hyp.points[None]) ** 2).sum(axis=2)
        out[sl] = hyp.labels[np.argmin(d, axis=1)]
    return out[0] if single else out


def exact_marginals(y, cb: Codebook, chan: ChannelRealization, prior=None,
                    hyp: _Hypotheses | None = None) -> np.ndarray:
    """Exact per-user posterior marginals by enumeration; shape (B, J, M)."""
    y, single = _as_batch(y)
    hyp = hyp or _all_hypotheses(cb, chan)
    lnp = log_prior(cb, prior)
    prior_term = lnp[np.arange(cb.J), hyp.labels].sum(axis=1)
    out = np.empty((len(y), cb.J, cb.M))
    step = max(1, 2**22 // len(hyp.labels))
    for sl in _chunks(len(y), step):
        ll = -(np.abs(y[sl, None, :] - hyp.points[None]) ** 2).sum(axis=2) / (2 * chan.sigma2) + prior_term
        for j in range(cb.J):
            for m in range(cb.M):
                out[sl, j, m] = logsumexp(ll[:, hyp.labels[:, j] == m], axis=1)
    out -= logsumexp(out, axis=2, keepdims=True)
    out = np.exp(out)
    return out[0] if single else out
