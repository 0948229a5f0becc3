"""Codebook and factor-graph data model.

Users and resources are 1-indexed in the file format and in printed reports;
everything in memory is 0-indexed.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

ENERGY_TOL = 1e-9
DEFAULT_CODEBOOK = Path(__file__).parent / "codebooks" / "default_6x4_m4.json"

# Indicator matrix of the 6-user / 4-resource reference graph.
DEFAULT_F = np.array(
    [
        [1, 1, 1, 0, 0, 0],
        [1, 0, 0, 1, 1, 0],
        [0, 1, 0, 1, 0, 1],
        [0, 0, 1, 0, 1, 1],
    ],
    dtype=np.int8,
)

_CODEBOOK_KEYS = {"J", "K", "M", "F", "codewords"}


class CodebookError(ValueError):
    """Structural or numerical validation failure of a codebook or graph."""


@dataclass(frozen=True, eq=False)
class FactorGraph:
    """Bipartite resource/user graph induced by a K x J indicator matrix.

    ``edges`` lists every (k, j) with F[k, j] = 1 in canonical order: row-major
    over k, then j ascending. Message arrays throughout the package are indexed
    by position in this list.
    """

    F: np.ndarray
    V: tuple[tuple[int, ...], ...]
    C: tuple[tuple[int, ...], ...]
    edges: tuple[tuple[int, int], ...]
    edge_index: dict = field(repr=False)

    @property
    def K(self) -> int:
        return self.F.shape[0]

    @property
    def J(self) -> int:
        return self.F.shape[1]

    @property
    def E(self) -> int:
        return len(self.edges)

    @property
    def dc(self) -> np.ndarray:
        return np.array([len(v) for v in self.V])

    @property
    def dv(self) -> np.ndarray:
        return np.array([len(c) for c in self.C])

    def resource_peers(self, e: int) -> list[int]:
        """Edge indices (k, j2) for j2 in V(k) minus j, where edge e = (k, j)."""
        k, j = self.edges[e]
        return [self.edge_index[k, j2] for j2 in self.V[k] if j2 != j]

    def user_peers(self, e: int) -> list[int]:
        """Edge indices (k2, j) for k2 in C(j) minus k, where edge e = (k, j)."""
        k, j = self.edges[e]
        return [self.edge_index[k2, j] for k2 in self.C[j] if k2 != k]

    def user_edges(self, j: int) -> list[int]:
        return [self.edge_index[k, j] for k in self.C[j]]

    def __eq__(self, other):
        return isinstance(other, FactorGraph) and np.array_equal(self.F, other.F)

    def __hash__(self):
        return hash(self.F.tobytes())


def build_factor_graph(F) -> FactorGraph:
    F = np.asarray(F)
    if F.ndim != 2 or F.size == 0:
        raise CodebookError(f"indicator matrix must be a non-empty 2-D array, got shape {F.shape}")
    if not np.isin(F, (0, 1)).all():
        raise CodebookError("indicator matrix has non-binary entries")
    F = F.astype(np.int8)
    for k in np.flatnonzero(F.sum(axis=1) == 0):
        raise CodebookError(f"resource {k + 1} has no users (all-zero row of F)")
    for j in np.flatnonzero(F.sum(axis=0) == 0):
        raise CodebookError(f"user {j + 1} occupies no resource (all-zero column of F)")
    F.setflags(write=False)
    K, J = F.shape
    V = tuple(tuple(int(j) for j in np.flatnonzero(F[k])) for k in range(K))
    C = tuple(tuple(int(k) for k in np.flatnonzero(F[:, j])) for j in range(J))
    edges = tuple((k, j) for k in range(K) for j in V[k])
    return FactorGraph(F, V, C, edges, {e: i for i, e in enumerate(edges)})


@dataclass(frozen=True, eq=False)
class Codebook:
    """J x M table of length-K complex codewords, ``codewords[j, m, k]``."""

    codewords: np.ndarray
    graph: FactorGraph

    @property
    def J(self) -> int:
        return self.codewords.shape[0]

    @property
    def M(self) -> int:
        return self.codewords.shape[1]

    @property
    def K(self) -> int:
        return self.codewords.shape[2]

    def user_energy(self) -> np.ndarray:
        return (np.abs(self.codewords) ** 2).sum(axis=2).mean(axis=1)

    def signal_power(self) -> float:
        """Average received power per resource under unit gains."""
        return float(self.user_energy().sum() / self.K)

    def to_dict(self) -> dict:
        cw = self.codewords
        return {
            "J": self.J,
            "K": self.K,
            "M": self.M,
            "F": self.graph.F.tolist(),
            "codewords": [
                [[[float(z.real), float(z.imag)] for z in cw[j, m]] for m in range(self.M)]
                for j in range(self.J)
            ],
        }


def make_codebook(codewords, F) -> Codebook:
    """Validate a codeword array against F and return a Codebook."""
    graph = build_factor_graph(F)
    cw = np.array(codewords, dtype=np.complex128)
    if cw.ndim != 3:
        raise CodebookError(f"codewords must be indexed [j][m][k], got {cw.ndim} dimensions")
    J, M, K = cw.shape
    if (K, J) != graph.F.shape:
        raise CodebookError(f"dimension mismatch: codewords are J={J}, K={K} but F is {graph.F.shape}")
    if M < 2:
        raise CodebookError(f"alphabet size M={M} must be at least 2")
    if not np.isfinite(cw).all():
        raise CodebookError("codewords contain non-finite entries")
    for j in range(J):
        off = [k for k in range(K) if graph.F[k, j] == 0]
        if np.any(cw[j][:, off] != 0):
            k = off[int(np.flatnonzero((cw[j][:, off] != 0).any(axis=0))[0])]
            raise CodebookError(f"sparsity violation: user {j + 1} is non-zero on resource {k + 1} outside C(j)")
        if not np.any(cw[j] != 0):
            raise CodebookError(f"user {j + 1} is silent (all codewords zero)")
        for m1, m2 in itertools.combinations(range(M), 2):
            if np.array_equal(cw[j, m1], cw[j, m2]):
                raise CodebookError(f"user {j + 1} has identical codewords for symbols {m1} and {m2}")
    energy = (np.abs(cw) ** 2).sum(axis=2).mean(axis=1)
    for j in range(J):
        if abs(energy[j] - 1.0) > ENERGY_TOL:
            raise CodebookError(f"energy-normalization violation: user {j + 1} has average energy {energy[j]!r}")
    cw.setflags(write=False)
    return Codebook(cw, graph)


def parse_codebook(doc: dict) -> Codebook:
    if not isinstance(doc, dict):
        raise CodebookError("codebook document must be a JSON object")
    unknown = set(doc) - _CODEBOOK_KEYS
    if unknown:
        raise CodebookError(f"unknown top-level keys: {sorted(unknown)}")
    missing = _CODEBOOK_KEYS - set(doc)
    if missing:
        raise CodebookError(f"missing top-level keys: {sorted(missing)}")
    J, K, M = doc["J"], doc["K"], doc["M"]
    for name, v in (("J", J), ("K", K), ("M", M)):
        if not isinstance(v, int) or isinstance(v, bool) or v < 1:
            raise CodebookError(f"{name} must be a positive integer, got {v!r}")
    F = np.asarray(doc["F"])
    if F.shape != (K, J):
        raise CodebookError(f"dimension mismatch: F has shape {F.shape}, declared K={K}, J={J}")
    raw = doc["codewords"]
    if not isinstance(raw, list) or len(raw) != J:
        n = len(raw) if isinstance(raw, list) else "?"
        raise CodebookError(f"dimension mismatch: declared J={J} but found {n} user arrays")
    for j, user in enumerate(raw):
        if not isinstance(user, list) or len(user) != M:
            raise CodebookError(f"dimension mismatch: user {j + 1} has {len(user)} codewords, declared M={M}")
        for m, word in enumerate(user):
            if not isinstance(word, list) or len(word) != K:
                raise CodebookError(f"dimension mismatch: codeword ({j + 1}, {m}) is not of length K={K}")
            for z in word:
                if not isinstance(z, list) or len(z) != 2:
                    raise CodebookError(f"codeword ({j + 1}, {m}) entries must be [re, im] pairs")
    try:
        arr = np.array(raw, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise CodebookError(f"codewords are not numeric: {exc}") from None
    return make_codebook(arr[..., 0] + 1j * arr[..., 1], F)


def load_codebook(path=None) -> Codebook:
    path = Path(path) if path is not None else DEFAULT_CODEBOOK
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise CodebookError(f"codebook file not found: {path}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CodebookError(f"parse error in {path}: {exc}") from None
    return parse_codebook(doc)


def save_codebook(cb: Codebook, path) -> None:
    Path(path).write_text(json.dumps(cb.to_dict(), indent=1) + "\n", encoding="utf-8")


def encode(cb: Codebook, j: int, m: int) -> np.ndarray:
    """Codeword of user ``j`` (0-indexed) for symbol ``m``."""
    if not 0 <= j < cb.J:
        raise IndexError(f"user index {j} out of range [0, {cb.J})")
    if not 0 <= m < cb.M:
        raise IndexError(f"symbol index {m} out of range [0, {cb.M})")
    return cb.codewords[j, m]


def encode_labels(cb: Codebook, labels) -> np.ndarray:
    """Stack codewords for label arrays of shape (..., J) -> (..., J, K)."""
    labels = np.asarray(labels)
    return cb.codewords[np.arange(cb.J), labels]


def random_codebook(F, M: int, rng: np.random.Generator) -> Codebook:
    """Gaussian random codebook with the sparsity of F and unit per-user energy."""
    F = np.asarray(F)
    K, J = F.shape
    cw = rng.standard_normal((J, M, K)) + 1j * rng.standard_normal((J, M, K))
    cw *= F.T[:, None, :]
    cw /= np.sqrt((np.abs(cw) ** 2).sum(axis=2).mean(axis=1))[:, None, None]
    return make_codebook(cw, F)
