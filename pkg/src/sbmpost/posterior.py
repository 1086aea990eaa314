"""Priors on labellings, exact posteriors by enumeration, and an MCMC sampler.

Everything is kept in log space until reporting; set masses are computed
from predicates so that model sets, rings and balls share one code path.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Union

import numpy as np
from scipy.special import logsumexp

from .core import (EdgeProbs, Graph, Labelling, ModelFamily, canonical_labels, log_likelihood_many,
                   make_rng, pair_weights, size_vector_count)
from .errors import AssumptionViolation, EnumerationInfeasible, OverlapError, UndefinedOdds
from .metrics import MAX_ENUM_N, enumerate_array

PRIOR_KINDS = ("hierarchical-uniform", "flat-uniform", "explicit-mass")

SetSpec = Union[Callable[[Labelling], bool], Iterable[Labelling], np.ndarray]


# ---------------------------------------------------------------------------
# Priors
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Prior:
    """Prior mass function on the labellings of a model family."""

    kind: str
    family: ModelFamily
    explicit: dict | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in PRIOR_KINDS:
            raise ValueError(f"unknown prior kind {self.kind!r}")
        if self.kind == "explicit-mass" and self.explicit is None:
            raise ValueError("explicit-mass prior needs a mass table")

    def log_mass(self, theta: Labelling) -> float:
        if theta not in self.family:
            return -math.inf
        if self.kind == "flat-uniform":
            return -math.log(self.family.cardinality())
        if self.kind == "hierarchical-uniform":
            return -math.log(len(self.family.ells)) - math.log(self.family.cardinality(theta.ell))
        return math.log(self.explicit.get(theta, 0.0)) if self.explicit.get(theta, 0.0) > 0 else -math.inf

    def mass(self, theta: Labelling) -> float:
        return math.exp(self.log_mass(theta))

    def log_mass_many(self, labels: np.ndarray) -> np.ndarray:
        """Log prior masses for rows of a label array already known to lie in the family."""
        labels = np.atleast_2d(labels)
        if self.kind == "flat-uniform":
            return np.full(labels.shape[0], -math.log(self.family.cardinality()))
        if self.kind == "hierarchical-uniform":
            ells = labels.max(axis=1) + 1
            table = {e: -math.log(len(self.family.ells)) - math.log(self.family.cardinality(e))
                     for e in self.family.ells}
            return np.array([table[int(e)] for e in ells])
        return np.array([self.log_mass(Labelling(tuple(int(x) for x in row))) for row in labels])

    def max_ratio(self, ell0: int, *, max_n: int = MAX_ENUM_N) -> float:
        """Largest ratio of prior masses within the labellings with ``ell0`` classes."""
        if self.kind in ("flat-uniform", "hierarchical-uniform"):
            return 1.0
        lm = self.log_mass_many(enumerate_array(self.family, ell0, max_n=max_n))
        return float(math.exp(lm.max() - lm.min()))


def build_prior(kind: str, family: ModelFamily, masses: dict | None = None, *,
                max_n: int = MAX_ENUM_N) -> Prior:
    """Normalised prior of the requested kind.

    Uniform kinds use exact multinomial counts, so no enumeration is needed.
    ``explicit-mass`` normalises ``masses`` over the enumerated family and
    rejects zero-mass labellings.
    """
    if kind != "explicit-mass":
        return Prior(kind, family)
    if masses is None:
        raise ValueError("explicit-mass prior needs masses")
    try:
        arr = enumerate_array(family, max_n=max_n)
    except EnumerationInfeasible as exc:
        raise EnumerationInfeasible(f"cannot normalise an explicit prior: {exc}") from None
    thetas = [Labelling(tuple(int(x) for x in row)) for row in arr]
    raw = np.array([float(masses.get(t, 0.0)) for t in thetas])
    if np.any(raw <= 0):
        bad = thetas[int(np.argmin(raw))]
        raise AssumptionViolation(f"prior must be positive on every labelling; {bad} has mass {raw.min()}")
    raw /= raw.sum()
    return Prior(kind, family, dict(zip(thetas, raw.tolist())))


# ---------------------------------------------------------------------------
# Exact posterior
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PosteriorTable:
    """Exact posterior over an enumerated family.

    ``log_mass`` is normalised; ``normalizer`` is the log prior-predictive
    probability of the conditioning graph.
    """

    labels: np.ndarray
    log_mass: np.ndarray
    normalizer: float
    graph: Graph
    prior: Prior
    probs: EdgeProbs

    @property
    def mass(self) -> np.ndarray:
        return np.exp(self.log_mass)

    def __len__(self) -> int:
        return self.labels.shape[0]

    def labellings(self) -> list[Labelling]:
        return [Labelling(tuple(int(x) for x in row)) for row in self.labels]

    def index(self, theta: Labelling) -> int:
        hit = np.flatnonzero((self.labels == theta.array()).all(axis=1))
        if hit.size == 0:
            raise KeyError(str(theta))
        return int(hit[0])

    def __getitem__(self, theta: Labelling) -> float:
        return float(np.exp(self.log_mass[self.index(theta)]))

    def mask(self, S: SetSpec) -> np.ndarray:
        return as_mask(self.labels, S)

    def log_set_mass(self, S: SetSpec) -> float:
        m = self.mask(S)
        return float(logsumexp(self.log_mass[m])) if m.any() else -math.inf

    def set_mass(self, S: SetSpec) -> float:
        return min(1.0, math.exp(self.log_set_mass(S)))

    def order(self) -> np.ndarray:
        """Indices by mass descending, ties broken lexicographically on labels."""
        keys = [self.labels[:, c] for c in range(self.labels.shape[1] - 1, -1, -1)]
        return np.lexsort(keys + [-self.log_mass])

    def argmax(self) -> Labelling:
        row = self.labels[self.order()[0]]
        return Labelling(tuple(int(x) for x in row))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["labelling", "log_mass", "mass"])
        for i in self.order():
            lab = Labelling(tuple(int(x) for x in self.labels[i]))
            w.writerow([str(lab), repr(float(self.log_mass[i])), repr(float(np.exp(self.log_mass[i])))])
        return buf.getvalue()


def as_mask(labels: np.ndarray, S: SetSpec) -> np.ndarray:
    """Boolean mask over the rows of ``labels`` for a predicate, collection or mask."""
    if isinstance(S, np.ndarray) and S.dtype == bool:
        if S.shape != (labels.shape[0],):
            raise ValueError("mask length does not match the table")
        return S
    if callable(S):
        return np.array([bool(S(Labelling(tuple(int(x) for x in row)))) for row in labels], dtype=bool)
    members = {t.labels for t in S}
    return np.array([tuple(int(x) for x in row) in members for row in labels], dtype=bool)


def class_count_in(*ells: int) -> Callable[[Labelling], bool]:
    wanted = set(ells)
    return lambda theta: theta.ell in wanted


def exact_posterior(graph: Graph, prior: Prior, probs: EdgeProbs, *, max_n: int = MAX_ENUM_N) -> PosteriorTable:
    """Posterior over every labelling of ``prior.family`` (log-sum-exp normalised)."""
    if graph.n != prior.family.n:
        raise ValueError("graph and family have different vertex counts")
    try:
        labels = enumerate_array(prior.family, max_n=max_n)
    except EnumerationInfeasible as exc:
        raise EnumerationInfeasible(f"{exc}; use mcmc_posterior for this family") from None
    return posterior_from_array(graph, prior, probs, labels)


def posterior_from_array(graph: Graph, prior: Prior, probs: EdgeProbs, labels: np.ndarray,
                         log_prior: np.ndarray | None = None) -> PosteriorTable:
    if log_prior is None:
        log_prior = prior.log_mass_many(labels)
    joint = log_prior + log_likelihood_many(graph, labels, probs)
    norm = float(logsumexp(joint))
    return PosteriorTable(labels, joint - norm, norm, graph, prior, probs)


def set_mass(table: PosteriorTable, S: SetSpec) -> float:
    return table.set_mass(S)


def posterior_odds(table: PosteriorTable, A: SetSpec, B: SetSpec) -> float:
    """Posterior mass of ``B`` over posterior mass of ``A``.

    Returns ``inf`` when only ``A`` is massless; raises when both are.
    """
    ma, mb = table.mask(A), table.mask(B)
    if np.any(ma & mb):
        raise OverlapError("hypotheses overlap on the enumerated family")
    la = float(logsumexp(table.log_mass[ma])) if ma.any() else -math.inf
    lb = float(logsumexp(table.log_mass[mb])) if mb.any() else -math.inf
    if la == -math.inf and lb == -math.inf:
        raise UndefinedOdds("both hypotheses have zero posterior mass")
    if la == -math.inf:
        return math.inf
    return math.exp(lb - la)


# ---------------------------------------------------------------------------
# MCMC
# ---------------------------------------------------------------------------

MOVE_KINDS = ("swap", "relabel", "jump")


def _relabel_neighbours(vec: tuple[int, ...]) -> set[tuple[int, ...]]:
    out = set()
    parts = list(vec)
    for a in range(len(parts)):
        for b in range(len(parts)):
            if a != b:
                new = parts.copy()
                new[a] -= 1
                new[b] += 1
                out.add(tuple(sorted(x for x in new if x > 0)))
        if parts[a] > 1:
            new = parts.copy()
            new[a] -= 1
            out.add(tuple(sorted(new + [1])))
    return out


def relabel_connected(family: ModelFamily) -> bool:
    """Whether single-vertex relabelling links every admissible size vector."""
    vecs = set(family.vectors())
    start = next(iter(vecs))
    seen = {start}
    queue = deque([start])
    while queue:
        v = queue.popleft()
        for w in _relabel_neighbours(v):
            if w in vecs and w not in seen:
                seen.add(w)
                queue.append(w)
    return seen == vecs


@dataclass
class McmcResult:
    """Post-burn-in samples and move statistics of one chain."""

    samples: np.ndarray
    accepted: dict
    proposed: dict
    seed: object
    warnings: list = field(default_factory=list)

    def labellings(self) -> list[Labelling]:
        return [Labelling(tuple(int(x) for x in row)) for row in self.samples]

    def acceptance_rate(self, kind: str) -> float:
        return self.accepted[kind] / self.proposed[kind] if self.proposed[kind] else math.nan

    def frequencies(self) -> dict[Labelling, float]:
        counts = Counter(map(bytes, self.samples.astype(np.int8)))
        T = self.samples.shape[0]
        n = self.samples.shape[1]
        return {Labelling(tuple(int(x) for x in np.frombuffer(k, dtype=np.int8, count=n))): c / T
                for k, c in counts.items()}

    def set_mass(self, S: SetSpec, batches: int = 50) -> tuple[float, float]:
        """Frequency of ``S`` with a batch-means standard error."""
        ind = self._indicator(S)
        T = ind.shape[0]
        nb = max(2, min(batches, T))
        size = T // nb
        means = ind[: nb * size].reshape(nb, size).mean(axis=1)
        return float(ind.mean()), float(means.std(ddof=1) / math.sqrt(nb))

    def _indicator(self, S: SetSpec) -> np.ndarray:
        uniq, inv = np.unique(self.samples, axis=0, return_inverse=True)
        return as_mask(uniq, S)[inv.ravel()].astype(np.float64)

    def total_variation(self, table: PosteriorTable) -> float:
        freq = self.frequencies()
        exact = dict(zip(table.labellings(), table.mass))
        keys = set(freq) | set(exact)
        return 0.5 * sum(abs(freq.get(k, 0.0) - exact.get(k, 0.0)) for k in keys)


class _Chain:
    # Mutable sampler state: raw labels in 0..n-1 plus class counts.

    def __init__(self, graph: Graph, prior: Prior, probs: EdgeProbs, start: Labelling):
        self.n = graph.n
        self.prior = prior
        self.family = prior.family
        n = self.n
        _, w = pair_weights(graph, probs)
        W = np.zeros((n, n))
        iu, ju = np.triu_indices(n, 1)
        W[iu, ju] = w
        self.W = W + W.T
        self.labels = np.array(start.labels, dtype=np.int64)
        self.counts = np.bincount(self.labels, minlength=n)
        self.loglik = self._full_loglik()
        self.logprior = prior.log_mass(start)
        vecs = self.family.vectors()
        self.log_jump_vec = -math.log(len(vecs))
        self.jump_vectors = vecs

    def _full_loglik(self) -> float:
        same = self.labels[:, None] == self.labels[None, :]
        return 0.5 * float((self.W * same).sum())

    def labelling(self, labels=None) -> Labelling:
        return Labelling(canonical_labels((self.labels if labels is None else labels).tolist()))

    def sizes(self, counts) -> tuple[int, ...]:
        return tuple(sorted(int(c) for c in counts if c > 0))

    def log_jump_density(self, sizes) -> float:
        return self.log_jump_vec - math.log(size_vector_count(sizes))

    def step(self, kind: str, rng: np.random.Generator) -> bool:
        lab, counts, n = self.labels, self.counts, self.n
        if kind == "swap":
            if np.count_nonzero(counts) < 2:
                return False
            while True:
                i, j = rng.choice(n, size=2, replace=False)
                if lab[i] != lab[j]:
                    break
            a, b = lab[i], lab[j]
            Wi, Wj = self.W[i], self.W[j]
            in_a, in_b = lab == a, lab == b
            delta = (Wi[in_b].sum() - Wi[j] - Wi[in_a].sum()) + (Wj[in_a].sum() - Wj[i] - Wj[in_b].sum())
            # swaps keep the size vector, hence the prior mass under uniform kinds
            new_lab = lab.copy()
            new_lab[i], new_lab[j] = b, a
            dprior = 0.0
            if self.prior.kind == "explicit-mass":
                dprior = self.prior.log_mass(self.labelling(new_lab)) - self.logprior
            if math.log(rng.random()) < delta + dprior:
                self.labels = new_lab
                self.loglik += delta
                self.logprior += dprior
                return True
            return False

        if kind == "relabel":
            v = int(rng.integers(n))
            a = lab[v]
            others = np.flatnonzero((counts > 0) & (np.arange(n) != a))
            options = list(others)
            if counts[a] > 1:
                options.append(int(np.flatnonzero(counts == 0)[0]))
            if not options:
                return False
            b = options[int(rng.integers(len(options)))]
            new_counts = counts.copy()
            new_counts[a] -= 1
            new_counts[b] += 1
            sizes = self.sizes(new_counts)
            if sizes not in self.family.vectors(len(sizes)):
                return False
            Wv = self.W[v]
            delta = Wv[lab == b].sum() - Wv[lab == a].sum()
            new_lab = lab.copy()
            new_lab[v] = b
            new_prior = self.prior.log_mass(self.labelling(new_lab))
            if math.log(rng.random()) < delta + new_prior - self.logprior:
                self.labels, self.counts = new_lab, new_counts
                self.loglik += delta
                self.logprior = new_prior
                return True
            return False

        if kind == "jump":
            vec = self.jump_vectors[int(rng.integers(len(self.jump_vectors)))]
            template = np.repeat(np.arange(len(vec)), vec)
            new_lab = rng.permutation(template)
            new_counts = np.bincount(new_lab, minlength=n)
            same = new_lab[:, None] == new_lab[None, :]
            new_loglik = 0.5 * float((self.W * same).sum())
            new_prior = self.prior.log_mass(self.labelling(new_lab))
            old_sizes = self.sizes(counts)
            log_ratio = (new_loglik + new_prior - self.loglik - self.logprior
                         + self.log_jump_density(old_sizes) - self.log_jump_density(vec))
            if math.log(rng.random()) < log_ratio:
                self.labels, self.counts = new_lab, new_counts
                self.loglik, self.logprior = new_loglik, new_prior
                return True
            return False

        raise ValueError(f"unknown move kind {kind!r}")


def default_move_weights(family: ModelFamily) -> dict[str, float]:
    if relabel_connected(family):
        return {"swap": 0.5, "relabel": 0.5, "jump": 0.0}
    return {"swap": 0.45, "relabel": 0.45, "jump": 0.1}


def mcmc_posterior(graph: Graph, prior: Prior, probs: EdgeProbs, steps: int, seed=None, *,
                   burn_in: float | int = 0.1, move_weights: dict | None = None,
                   start: Labelling | None = None, thin: int = 1) -> McmcResult:
    """Metropolis-Hastings over the family's labellings.

    Moves: ``swap`` exchanges two vertices in different classes (keeps the
    size vector), ``relabel`` moves one vertex to another or a fresh class
    (proposals leaving the family are rejected), ``jump`` draws a fresh
    labelling from a uniform size vector and is what links size vectors
    that single relabels cannot connect. All three satisfy detailed balance
    with respect to the posterior.
    """
    probs.check_open()
    family = prior.family
    if graph.n != family.n:
        raise ValueError("graph and family have different vertex counts")
    weights = dict(default_move_weights(family) if move_weights is None else move_weights)
    for k in weights:
        if k not in MOVE_KINDS:
            raise ValueError(f"unknown move kind {k!r}")
    kinds = [k for k in MOVE_KINDS if weights.get(k, 0) > 0]
    probs_k = np.array([weights[k] for k in kinds], dtype=float)
    probs_k /= probs_k.sum()
    notes = []
    if weights.get("jump", 0) == 0 and not relabel_connected(family):
        msg = "family has size vectors unreachable by single relabel moves; chain is reducible"
        notes.append(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)

    rng = make_rng(seed)
    if start is None:
        vecs = family.vectors()
        vec = vecs[int(rng.integers(len(vecs)))]
        start = Labelling.from_labels(rng.permutation(np.repeat(np.arange(len(vec)), vec)))
    elif start not in family:
        raise ValueError("start labelling is not in the family")
    chain = _Chain(graph, prior, probs, start)

    burn = int(burn_in * steps) if isinstance(burn_in, float) else int(burn_in)
    if steps <= burn:
        raise ValueError("steps must exceed the burn-in")
    accepted = {k: 0 for k in MOVE_KINDS}
    proposed = {k: 0 for k in MOVE_KINDS}
    draws = rng.choice(len(kinds), size=steps, p=probs_k)
    kept = []
    for t in range(steps):
        kind = kinds[draws[t]]
        proposed[kind] += 1
        accepted[kind] += chain.step(kind, rng)
        if t >= burn and (t - burn) % thin == 0:
            kept.append(chain.labels.copy())
    raw = np.asarray(kept)
    samples = np.array([canonical_labels(row.tolist()) for row in raw], dtype=np.int8)
    return McmcResult(samples, accepted, proposed, seed, notes)
