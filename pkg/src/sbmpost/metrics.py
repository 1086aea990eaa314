"""Combinatorics of the labelling space.

Enumeration of admissible labellings, the two permutation-invariant
distances between labellings (largest off-diagonal overlap ``r`` and
Hamming-modulo-permutation ``m``), rings and balls around a centre, and the
closed-form cardinality and separation bounds that feed the contraction
bounds.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import Labelling, ModelFamily
from .errors import AssumptionViolation, EnumerationInfeasible

#: Default caps; every function taking these accepts an override.
MAX_ENUM_N = 14
MAX_PERM_CLASSES = 8


# ---------------------------------------------------------------------------
# Enumeration
# ---------------------------------------------------------------------------


def _rgs(n: int, allowed: dict[int, set[tuple[int, ...]]]) -> Iterator[list[int]]:
    # Restricted-growth strings in lexicographic order, pruned by the largest
    # admissible class count and class size.
    max_ell = max(allowed)
    min_ell = min(allowed)
    max_size = max(v[-1] for vs in allowed.values() for v in vs)
    labels = [0] * n
    counts = [0] * (max_ell + 1)

    def rec(i: int, opened: int):
        if i == n:
            if opened in allowed and tuple(sorted(counts[:opened])) in allowed[opened]:
                yield labels
            return
        remaining = n - i
        if opened + remaining < min_ell:
            return
        for lab in range(opened):
            if counts[lab] < max_size:
                labels[i] = lab
                counts[lab] += 1
                yield from rec(i + 1, opened)
                counts[lab] -= 1
        if opened < max_ell:
            labels[i] = opened
            counts[opened] = 1
            yield from rec(i + 1, opened + 1)
            counts[opened] = 0

    if n == 0:
        return
    # the first vertex always opens class 0
    labels[0] = 0
    counts[0] = 1
    yield from rec(1, 1)


def _allowed_sets(family: ModelFamily, ell) -> dict[int, set[tuple[int, ...]]]:
    ells = family.ells if ell in (None, "all") else (ell,)
    allowed = {e: set(family.vectors(e)) for e in ells if family.vectors(e)}
    return allowed


def enumerate_space(family: ModelFamily, ell: int | str | None = None, *,
                    max_n: int = MAX_ENUM_N) -> Iterator[Labelling]:
    """Yield every labelling of ``Theta_{n, ell}`` (all class counts if ``ell`` is None).

    Order is lexicographic over restricted-growth strings.
    """
    if family.n > max_n:
        raise EnumerationInfeasible(f"n={family.n} exceeds the enumeration cap {max_n}")
    allowed = _allowed_sets(family, ell)
    if not allowed:
        return
    for labels in _rgs(family.n, allowed):
        yield Labelling(tuple(labels))


def enumerate_array(family: ModelFamily, ell: int | str | None = None, *,
                    max_n: int = MAX_ENUM_N) -> np.ndarray:
    """Same as :func:`enumerate_space` but materialised as an ``(N, n)`` int8 array."""
    if family.n > max_n:
        raise EnumerationInfeasible(f"n={family.n} exceeds the enumeration cap {max_n}")
    allowed = _allowed_sets(family, ell)
    if not allowed:
        return np.zeros((0, family.n), dtype=np.int8)
    rows = [list(lab) for lab in _rgs(family.n, allowed)]
    return np.asarray(rows, dtype=np.int8).reshape(len(rows), family.n)


# ---------------------------------------------------------------------------
# Distances
# ---------------------------------------------------------------------------


def confusion(theta: Labelling, eta: Labelling) -> np.ndarray:
    """Overlap counts ``C[a, b] = #{i : theta_i = a, eta_i = b}``."""
    if theta.n != eta.n:
        raise ValueError("labellings have different vertex counts")
    C = np.zeros((theta.ell, eta.ell), dtype=np.int64)
    np.add.at(C, (theta.array(), eta.array()), 1)
    return C


def r_distance(theta: Labelling, eta: Labelling, *, max_classes: int = MAX_PERM_CLASSES) -> int:
    """Smallest achievable largest off-diagonal overlap over relabellings.

    Searches every injection of the classes of the labelling with fewer
    classes into those of the other one.
    """
    C = confusion(theta, eta)
    if C.shape[0] > C.shape[1]:
        C = C.T
    small, big = C.shape
    if big > max_classes:
        raise EnumerationInfeasible(f"{big} classes exceed the permutation cap {max_classes}")
    if big == 1:
        return 0
    best = None
    rows = np.arange(small)
    for cols in itertools.permutations(range(big), small):
        off = C.copy()
        off[rows, list(cols)] = -1
        val = int(off.max())
        if best is None or val < best:
            best = val
            if best == 0:
                break
    return max(best, 0)


def m_distance(theta: Labelling, eta: Labelling) -> int:
    """Hamming distance minimised over relabellings (maximum-agreement assignment)."""
    C = confusion(theta, eta)
    rows, cols = linear_sum_assignment(C, maximize=True)
    return theta.n - int(C[rows, cols].sum())


# -- batched forms used by the verification harness ------------------------


def confusion_many(center: Labelling, etas: np.ndarray) -> np.ndarray:
    """``(N, ell_center, L)`` overlap counts of one centre against many labellings."""
    etas = np.asarray(etas, dtype=np.int64)
    L = int(etas.max()) + 1 if etas.size else 1
    onehot_c = np.eye(center.ell, dtype=np.int64)[center.array()]   # (n, lc)
    onehot_e = np.eye(L, dtype=np.int64)[etas]                      # (N, n, L)
    return np.einsum("ia,kib->kab", onehot_c, onehot_e)


def _second_largest(a: np.ndarray, axis: int) -> np.ndarray:
    if a.shape[axis] < 2:
        return np.zeros(np.delete(a.shape, axis), dtype=a.dtype)
    part = -np.partition(-a, 1, axis=axis)
    return np.take(part, 1, axis=axis)


def r_distance_many(center: Labelling, etas: np.ndarray) -> np.ndarray:
    """Vectorised ``r`` distances of ``center`` to each row of ``etas``.

    Uses the threshold characterisation: the optimum equals the largest
    second-largest entry over all rows and columns of the overlap matrix.
    (Cells above that level form a partial matching that can be put on the
    diagonal; every row or column contributes its runner-up off-diagonal.)
    """
    C = confusion_many(center, etas)
    rows = _second_largest(C, axis=2).max(axis=1)
    cols = _second_largest(C, axis=1).max(axis=1)
    return np.maximum(rows, cols)


def m_distance_many(center: Labelling, etas: np.ndarray) -> np.ndarray:
    C = confusion_many(center, etas)
    n = center.n
    N, lc, L = C.shape
    k = max(lc, L)
    if k <= 5:
        Cp = np.zeros((N, k, k), dtype=C.dtype)
        Cp[:, :lc, :L] = C
        best = np.zeros(N, dtype=np.int64)
        ar = np.arange(k)
        for perm in itertools.permutations(range(k)):
            best = np.maximum(best, Cp[:, ar, perm].sum(axis=1))
        return n - best
    out = np.empty(N, dtype=np.int64)
    for idx in range(N):
        r, c = linear_sum_assignment(C[idx], maximize=True)
        out[idx] = n - C[idx][r, c].sum()
    return out


def separation_counts_many(center: Labelling, etas: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``(|D1|, |D2|)`` for ``center`` against every row of ``etas``."""
    C = confusion_many(center, etas)
    both = (C * (C - 1) // 2).sum(axis=(1, 2))
    rows = C.sum(axis=2)
    cols = C.sum(axis=1)
    same_center = (rows * (rows - 1) // 2).sum(axis=1)
    same_eta = (cols * (cols - 1) // 2).sum(axis=1)
    return same_center - both, same_eta - both


# ---------------------------------------------------------------------------
# Rings and balls
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RingSpec:
    """Labellings with the centre's class count at ``r`` distance exactly ``k``."""

    center: Labelling
    k: int

    @property
    def ell0(self) -> int:
        return self.center.ell

    def check(self, family: ModelFamily) -> None:
        if self.center not in family:
            raise ValueError("ring centre is not in the model family")
        kmax = family.m_max(self.ell0) // 2
        if not 0 <= self.k <= kmax:
            raise ValueError(f"ring radius {self.k} outside 0..{kmax}")


@dataclass(frozen=True)
class BallSpec:
    """Hamming ball (``metric='hamming'``, whole family) or ``r``-ball (centre's class count)."""

    center: Labelling
    k: int
    metric: str = "hamming"

    def __post_init__(self):
        if self.k < 0:
            raise ValueError("ball radius must be nonnegative")
        if self.metric not in ("hamming", "r"):
            raise ValueError(f"unknown ball metric {self.metric!r}")

    def contains(self, eta: Labelling) -> bool:
        if self.metric == "hamming":
            return m_distance(self.center, eta) <= self.k
        return eta.ell == self.center.ell and r_distance(self.center, eta) <= self.k


def ring_members(spec: RingSpec, family: ModelFamily, *, max_n: int = MAX_ENUM_N) -> list[Labelling]:
    spec.check(family)
    if spec.k == 0:
        return [spec.center]
    arr = enumerate_array(family, spec.ell0, max_n=max_n)
    r = r_distance_many(spec.center, arr)
    return [Labelling(tuple(int(x) for x in row)) for row in arr[r == spec.k]]


def ring_sizes(center: Labelling, family: ModelFamily, *, max_n: int = MAX_ENUM_N) -> dict[int, int]:
    """``{k: |ring_k|}`` over the centre's class count; the rings partition it."""
    arr = enumerate_array(family, center.ell, max_n=max_n)
    r = r_distance_many(center, arr)
    ks, counts = np.unique(r, return_counts=True)
    return {int(k): int(c) for k, c in zip(ks, counts)}


def ball_members(spec: BallSpec, family: ModelFamily, *, max_n: int = MAX_ENUM_N) -> list[Labelling]:
    if spec.metric == "hamming":
        arr = enumerate_array(family, None, max_n=max_n)
        d = m_distance_many(spec.center, arr)
    else:
        arr = enumerate_array(family, spec.center.ell, max_n=max_n)
        d = r_distance_many(spec.center, arr)
    return [Labelling(tuple(int(x) for x in row)) for row in arr[d <= spec.k]]


# ---------------------------------------------------------------------------
# Closed-form counting bounds
# ---------------------------------------------------------------------------


def log_comb(a: int, b: int) -> float:
    if b < 0 or b > a:
        return -math.inf
    return math.lgamma(a + 1) - math.lgamma(b + 1) - math.lgamma(a - b + 1)


def stirling_second_kind(n: int, ell: int) -> int:
    """Number of partitions of ``n`` points into ``ell`` nonempty blocks."""
    if ell > n or ell < 0:
        return 0
    row = [1] + [0] * ell
    for i in range(1, n + 1):
        new = [0] * (ell + 1)
        for k in range(1, min(i, ell) + 1):
            new[k] = k * row[k] + row[k - 1]
        row = new
    return row[ell]


def stirling_upper_bound(n: int, ell: int) -> float:
    """Log of ``0.5 * C(n, ell) * ell**(n - ell)``.

    Note the bound is below the true count at ``ell == n`` (value 1/2).
    """
    if not 1 <= ell <= n:
        raise ValueError("need 1 <= ell <= n")
    return math.log(0.5) + log_comb(n, ell) + (n - ell) * math.log(ell)


def ring_cardinality_bound(n: int, ell: int, k: int) -> float:
    """Log of ``2**(k ell (ell-1)) * C(n (ell-1), ell (ell-1) k)``; needs ``k ell <= n``."""
    if k < 0 or k * ell > n:
        raise ValueError("ring cardinality bound needs 0 <= k and k * ell <= n")
    e = ell * (ell - 1)
    return k * e * math.log(2) + log_comb(n * (ell - 1), e * k)


def ring_cardinality_bound_loose(n: int, ell: int, k: int) -> float:
    """Log of ``(2 e n / (k ell))**(ell (ell-1) k)``, for ``k >= 1``."""
    if k < 1:
        raise ValueError("k must be positive")
    return ell * (ell - 1) * k * (math.log(2 * math.e * n) - math.log(k * ell))


def d_union_lower_bound(family: ModelFamily, ell0: int, ell: int) -> float:
    """``n/2 * (m_min(min class count) - m_max(max class count))``.

    Lower bound on the number of separating pairs between labellings with
    different class counts; requires the class-size ordering.
    """
    family.require_size_ordering()
    if ell0 == ell:
        raise ValueError("cross-model bound needs two different class counts")
    for e in (ell0, ell):
        if e not in family.ells:
            raise AssumptionViolation(f"class count {e} is not in the family")
    return 0.5 * family.n * family.size_gap(ell0, ell)


def ring_d_lower_bound(m_min: int, k: int) -> int:
    """``2 k (m_min - k)^+``: separating pairs at ``r`` distance ``k`` within a model."""
    return 2 * k * max(m_min - k, 0)
