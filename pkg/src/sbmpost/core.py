"""Graphs, labellings, edge probabilities, model families and the likelihood.

Labellings are kept in restricted-growth form (0-based internally, printed
1-based), so two class assignments that differ only by a permutation of the
class names compare and hash equal.
"""

from __future__ import annotations

import math
from collections import Counter, namedtuple
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property, lru_cache
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import AssumptionViolation

PHASES = ("dense", "chernoff-hellinger", "kesten-stigum", "explicit")


# ---------------------------------------------------------------------------
# RNG helpers
# ---------------------------------------------------------------------------


def derive_seed(seed, *keys: int) -> np.random.SeedSequence:
    """Deterministic child seed for ``(seed, *keys)``, independent of call order."""
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(seed.entropy, spawn_key=tuple(seed.spawn_key) + tuple(keys))
    return np.random.SeedSequence(seed, spawn_key=tuple(keys))


def make_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@lru_cache(maxsize=64)
def pair_index(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Row-major (i, j), i < j, index arrays for the upper triangle (0-based)."""
    iu, ju = np.triu_indices(n, 1)
    iu.setflags(write=False)
    ju.setflags(write=False)
    return iu, ju


# ---------------------------------------------------------------------------
# Graph
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Graph:
    """Undirected simple graph stored as a bit-packed upper triangle."""

    n: int
    bits: bytes
    seed: object = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("graph needs at least one vertex")
        npairs = self.n * (self.n - 1) // 2
        if len(self.bits) != (npairs + 7) // 8:
            raise ValueError("bit buffer does not match vertex count")

    @classmethod
    def from_upper(cls, n: int, upper, seed=None) -> "Graph":
        upper = np.asarray(upper, dtype=bool)
        if upper.shape != (n * (n - 1) // 2,):
            raise ValueError(f"expected {n * (n - 1) // 2} pair indicators, got {upper.shape}")
        return cls(n, np.packbits(upper).tobytes(), seed)

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]]) -> "Graph":
        """Build from 1-based pairs ``(i, j)`` with ``i < j``."""
        adj = np.zeros((n, n), dtype=bool)
        for i, j in edges:
            if not (1 <= i < j <= n):
                raise ValueError(f"invalid edge ({i}, {j}) for n={n}; need 1 <= i < j <= n")
            adj[i - 1, j - 1] = True
        iu, ju = pair_index(n)
        return cls.from_upper(n, adj[iu, ju])

    @classmethod
    def from_adjacency(cls, adj) -> "Graph":
        adj = np.asarray(adj, dtype=bool)
        n = adj.shape[0]
        iu, ju = pair_index(n)
        return cls.from_upper(n, adj[iu, ju])

    @cached_property
    def upper(self) -> np.ndarray:
        npairs = self.n * (self.n - 1) // 2
        arr = np.unpackbits(np.frombuffer(self.bits, dtype=np.uint8), count=npairs).astype(bool)
        arr.setflags(write=False)
        return arr

    @property
    def num_pairs(self) -> int:
        return self.n * (self.n - 1) // 2

    @property
    def edge_count(self) -> int:
        return int(self.upper.sum())

    def edges(self) -> list[tuple[int, int]]:
        iu, ju = pair_index(self.n)
        idx = np.flatnonzero(self.upper)
        return [(int(iu[k]) + 1, int(ju[k]) + 1) for k in idx]

    def adjacency(self) -> np.ndarray:
        adj = np.zeros((self.n, self.n), dtype=bool)
        iu, ju = pair_index(self.n)
        adj[iu, ju] = self.upper
        return adj | adj.T

    def to_text(self) -> str:
        lines = [f"n={self.n}"] + [f"{i} {j}" for i, j in self.edges()]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Graph":
        lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
        if not lines or not lines[0].startswith("n="):
            raise ValueError("graph file must start with a 'n=<int>' line")
        n = int(lines[0][2:])
        edges = []
        for ln in lines[1:]:
            parts = ln.split()
            if len(parts) != 2:
                raise ValueError(f"malformed edge line {ln!r}")
            edges.append((int(parts[0]), int(parts[1])))
        return cls.from_edges(n, edges)

    def save(self, path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Graph":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# Labelling
# ---------------------------------------------------------------------------


def canonical_labels(labels: Sequence) -> tuple[int, ...]:
    """Restricted-growth relabelling: classes numbered by first occurrence."""
    first: dict = {}
    out = []
    for lab in labels:
        if lab not in first:
            first[lab] = len(first)
        out.append(first[lab])
    return tuple(out)


def canonical_array(labels: np.ndarray) -> np.ndarray:
    """Row-wise restricted-growth form of an ``(N, n)`` integer label array."""
    labels = np.asarray(labels)
    out = np.empty_like(labels)
    for r, row in enumerate(labels):
        _, first = np.unique(row, return_index=True)
        remap = np.empty(row.max() + 1, dtype=labels.dtype)
        remap[row[np.sort(first)]] = np.arange(len(first))
        out[r] = remap[row]
    return out


@dataclass(frozen=True, order=True)
class Labelling:
    """A class assignment modulo permutation of the class names."""

    labels: tuple[int, ...]

    def __post_init__(self):
        if not self.labels:
            raise ValueError("empty labelling")
        if canonical_labels(self.labels) != tuple(self.labels):
            raise ValueError("labels are not in restricted-growth form; use Labelling.from_labels")

    @classmethod
    def from_labels(cls, labels: Iterable) -> "Labelling":
        return cls(canonical_labels(list(labels)))

    @classmethod
    def blocks(cls, sizes: Sequence[int]) -> "Labelling":
        """Consecutive blocks: ``sizes=(2, 3)`` gives ``1 1 2 2 2``."""
        labels: list[int] = []
        for k, m in enumerate(sizes):
            if m < 1:
                raise ValueError("block sizes must be positive")
            labels.extend([k] * m)
        return cls(tuple(labels))

    @classmethod
    def parse(cls, text: str) -> "Labelling":
        return cls.from_labels(int(tok) for tok in text.replace(",", " ").split())

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def ell(self) -> int:
        return max(self.labels) + 1

    @cached_property
    def sizes(self) -> tuple[int, ...]:
        return tuple(sorted(Counter(self.labels).values()))

    def array(self) -> np.ndarray:
        return np.asarray(self.labels, dtype=np.int64)

    def same_class_pairs(self) -> np.ndarray:
        """Boolean vector over the upper triangle: True where i and j share a class."""
        lab = self.array()
        iu, ju = pair_index(self.n)
        return lab[iu] == lab[ju]

    def __str__(self) -> str:
        return " ".join(str(x + 1) for x in self.labels)


# ---------------------------------------------------------------------------
# Edge probabilities
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EdgeProbs:
    """Within-class probability ``p`` and between-class probability ``q``.

    Degenerate values 0 and 1 are allowed here so sampling fixtures stay
    expressible; likelihood code calls :meth:`check_open` first.
    """

    p: float
    q: float
    phase: str = "explicit"
    phase_params: tuple[float, float] | None = None

    def __post_init__(self):
        if not (0.0 <= self.p <= 1.0 and 0.0 <= self.q <= 1.0):
            raise ValueError(f"edge probabilities must lie in [0, 1], got p={self.p}, q={self.q}")
        if self.phase not in PHASES:
            raise ValueError(f"unknown phase {self.phase!r}")

    @classmethod
    def dense(cls, p: float, q: float) -> "EdgeProbs":
        return cls(p, q, "dense", None)

    @classmethod
    def chernoff_hellinger(cls, n: int, a: float, b: float) -> "EdgeProbs":
        return cls(a * math.log(n) / n, b * math.log(n) / n, "chernoff-hellinger", (a, b))

    @classmethod
    def kesten_stigum(cls, n: int, c: float, d: float) -> "EdgeProbs":
        return cls(c / n, d / n, "kesten-stigum", (c, d))

    def check_open(self) -> None:
        if not (0.0 < self.p < 1.0 and 0.0 < self.q < 1.0):
            raise ValueError(f"likelihood needs p, q in (0, 1); got p={self.p}, q={self.q}")

    def to_dict(self) -> dict:
        d = {"phase": self.phase, "p": self.p, "q": self.q}
        if self.phase_params is not None:
            keys = ("a", "b") if self.phase == "chernoff-hellinger" else ("c", "d")
            d.update(dict(zip(keys, self.phase_params)))
        return d


# ---------------------------------------------------------------------------
# Model families
# ---------------------------------------------------------------------------


def integer_partitions(n: int, parts: int, lo: int = 1, hi: int | None = None) -> Iterator[tuple[int, ...]]:
    """Nondecreasing tuples of ``parts`` integers in ``[lo, hi]`` summing to ``n``."""
    hi = n if hi is None else hi
    if parts == 0:
        if n == 0:
            yield ()
        return
    for first in range(max(lo, 1), min(hi, n // parts) + 1):
        for rest in integer_partitions(n - first, parts - 1, first, hi):
            yield (first,) + rest


def size_vector_count(sizes: Sequence[int]) -> int:
    """Number of partitions of ``sum(sizes)`` points with exactly these block sizes."""
    n = sum(sizes)
    count = math.factorial(n)
    for m in sizes:
        count //= math.factorial(m)
    for mult in Counter(sizes).values():
        count //= math.factorial(mult)
    return count


class ModelFamily:
    """Admissible class-size vectors ``M_{n, ell}`` for every class count ``ell``.

    Families are not required to satisfy the class-size ordering at
    construction; bounds that need it call :meth:`require_size_ordering`.
    """

    def __init__(self, n: int, size_vectors: Iterable[Sequence[int]], L: int | None = None,
                 window: float | None = None):
        grouped: dict[int, set[tuple[int, ...]]] = {}
        for vec in size_vectors:
            vec = tuple(sorted(int(m) for m in vec))
            if not vec or min(vec) < 1 or sum(vec) != n:
                raise ValueError(f"size vector {vec} is not a composition of n={n} into positive parts")
            grouped.setdefault(len(vec), set()).add(vec)
        if not grouped:
            raise ValueError("model family is empty")
        self.n = n
        self._allowed = {ell: tuple(sorted(vs)) for ell, vs in sorted(grouped.items())}
        self.L = L if L is not None else max(self._allowed)
        self.window = window

    @classmethod
    def windowed(cls, n: int, L: int) -> "ModelFamily":
        """Class counts ``1..L`` with every class size within ``n/ell +- n/(4 L^2)``.

        The real-valued window is rounded toward its interior.
        """
        if L < 1:
            raise ValueError("L must be positive")
        half = Fraction(n, 4 * L * L)
        vectors = []
        for ell in range(1, L + 1):
            centre = Fraction(n, ell)
            lo = max(1, math.ceil(centre - half))
            hi = math.floor(centre + half)
            vectors.extend(integer_partitions(n, ell, lo, hi))
        return cls(n, vectors, L=L, window=float(half))

    @classmethod
    def all_partitions(cls, n: int, ells: Iterable[int] | None = None) -> "ModelFamily":
        ells = range(1, n + 1) if ells is None else ells
        vectors = [v for ell in ells for v in integer_partitions(n, ell)]
        return cls(n, vectors)

    @classmethod
    def from_dict(cls, d: dict, n: int | None = None) -> "ModelFamily":
        n = d.get("n", n)
        if "sizes" in d:
            return cls(n, d["sizes"], L=d.get("L"))
        if "L" in d:
            return cls.windowed(n, int(d["L"]))
        raise ValueError("family spec needs 'sizes' or 'L'")

    def to_dict(self) -> dict:
        d = {"n": self.n, "L": self.L, "sizes": [list(v) for ell in self.ells for v in self._allowed[ell]]}
        if self.window is not None:
            d["window"] = self.window
        return d

    # -- basic queries --------------------------------------------------

    @property
    def ells(self) -> tuple[int, ...]:
        return tuple(self._allowed)

    def vectors(self, ell: int | None = None) -> tuple[tuple[int, ...], ...]:
        if ell is None:
            return tuple(v for e in self.ells for v in self._allowed[e])
        return self._allowed.get(ell, ())

    def m_min(self, ell: int) -> int:
        return min(v[0] for v in self._allowed[ell])

    def m_max(self, ell: int) -> int:
        return max(v[-1] for v in self._allowed[ell])

    def cardinality(self, ell: int | None = None) -> int:
        """Exact ``|Theta_{n, ell}|`` (or ``|Theta_n|``) from the multinomial count."""
        return sum(size_vector_count(v) for v in self.vectors(ell))

    def __contains__(self, theta: Labelling) -> bool:
        return theta.n == self.n and theta.sizes in self._allowed.get(theta.ell, ())

    def __eq__(self, other) -> bool:
        return isinstance(other, ModelFamily) and self.n == other.n and self._allowed == other._allowed

    def __hash__(self) -> int:
        return hash((self.n, tuple(self._allowed.items())))

    def __repr__(self) -> str:
        return f"ModelFamily(n={self.n}, sizes={list(self.vectors())})"

    # -- premises -------------------------------------------------------

    def satisfies_size_ordering(self) -> bool:
        """Smaller class counts never have smaller classes than larger class counts."""
        ells = self.ells
        return all(self.m_min(a) >= self.m_max(b) for i, a in enumerate(ells) for b in ells[i + 1:])

    def require_size_ordering(self) -> None:
        if not self.satisfies_size_ordering():
            raise AssumptionViolation(
                "class-size ordering fails: need m_min(l1) >= m_max(l2) whenever l1 < l2")

    def satisfies_balance(self) -> bool:
        """``m_min(ell) >= m_max(ell) / 2`` for every class count."""
        return all(2 * self.m_min(ell) >= self.m_max(ell) for ell in self.ells)

    def size_gap(self, ell0: int, ell: int) -> int:
        lo, hi = min(ell0, ell), max(ell0, ell)
        return self.m_min(lo) - self.m_max(hi)


# ---------------------------------------------------------------------------
# Sampling and likelihood
# ---------------------------------------------------------------------------


def sample_graph(theta: Labelling, probs: EdgeProbs, seed=None) -> Graph:
    """Draw a graph with independent edges: ``p`` within classes, ``q`` across."""
    if theta.n < 2:
        raise ValueError("need at least two vertices to sample edges")
    rng = make_rng(seed)
    same = theta.same_class_pairs()
    prob = np.where(same, probs.p, probs.q)
    upper = rng.random(prob.shape[0]) < prob
    return Graph.from_upper(theta.n, upper, seed=seed if not isinstance(seed, np.random.Generator) else None)


def log_likelihood(graph: Graph, theta: Labelling, probs: EdgeProbs) -> float:
    """Bernoulli log-likelihood of ``graph`` under labelling ``theta``."""
    probs.check_open()
    if graph.n != theta.n:
        raise ValueError("graph and labelling have different vertex counts")
    Q = np.where(theta.same_class_pairs(), probs.p, probs.q)
    x = graph.upper
    return float(np.sum(np.where(x, np.log(Q), np.log1p(-Q))))


def pair_weights(graph: Graph, probs: EdgeProbs) -> tuple[float, np.ndarray]:
    """Split the log-likelihood as ``base + sum(weights[same_pairs])``.

    ``base`` is the log-likelihood with every pair between classes; each
    within-class pair adds its entry of ``weights``.
    """
    probs.check_open()
    x = graph.upper
    lp, l1p = math.log(probs.p), math.log1p(-probs.p)
    lq, l1q = math.log(probs.q), math.log1p(-probs.q)
    base = float(np.sum(np.where(x, lq, l1q)))
    weights = np.where(x, lp - lq, l1p - l1q)
    return base, weights


def same_class_matrix(labels: np.ndarray) -> np.ndarray:
    """``(N, n(n-1)/2)`` within-class indicators for an ``(N, n)`` label array."""
    labels = np.atleast_2d(labels)
    iu, ju = pair_index(labels.shape[1])
    return labels[:, iu] == labels[:, ju]


def log_likelihood_many(graph: Graph, labels: np.ndarray, probs: EdgeProbs) -> np.ndarray:
    base, weights = pair_weights(graph, probs)
    return base + same_class_matrix(labels).astype(np.float64) @ weights


LRStats = namedtuple("LRStats", ["d1", "d2", "s", "t"])


def likelihood_ratio_stats(graph: Graph, theta0: Labelling, theta: Labelling) -> LRStats:
    """Pair counts that separate ``theta0`` from ``theta`` and their edge counts.

    ``d1`` counts pairs joined under ``theta0`` but split under ``theta``;
    ``d2`` the reverse. ``s`` and ``t`` count graph edges among them.
    """
    if not (graph.n == theta0.n == theta.n):
        raise ValueError("vertex counts differ")
    same0 = theta0.same_class_pairs()
    same1 = theta.same_class_pairs()
    d1 = same0 & ~same1
    d2 = ~same0 & same1
    x = graph.upper
    return LRStats(int(d1.sum()), int(d2.sum()), int((x & d1).sum()), int((x & d2).sum()))


def log_likelihood_ratio(graph: Graph, theta0: Labelling, theta: Labelling, probs: EdgeProbs) -> float:
    """``log p_theta(X) - log p_theta0(X)`` from the separating-pair statistics."""
    probs.check_open()
    p, q = probs.p, probs.q
    d1, d2, s, t = likelihood_ratio_stats(graph, theta0, theta)
    edge_term = math.log1p(-p) + math.log(q) - math.log(p) - math.log1p(-q)
    count_term = math.log1p(-q) - math.log1p(-p)
    return (s - t) * edge_term + (d1 - d2) * count_term


__all__ = [
    "AssumptionViolation",
    "EdgeProbs",
    "Graph",
    "LRStats",
    "Labelling",
    "ModelFamily",
    "canonical_array",
    "canonical_labels",
    "derive_seed",
    "integer_partitions",
    "likelihood_ratio_stats",
    "log_likelihood",
    "log_likelihood_many",
    "log_likelihood_ratio",
    "make_rng",
    "pair_index",
    "pair_weights",
    "same_class_matrix",
    "sample_graph",
    "size_vector_count",
]
