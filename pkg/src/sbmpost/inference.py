"""Credible sets, their Hamming enlargements, and posterior-odds tests."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import Labelling, ModelFamily
from .metrics import MAX_ENUM_N, enumerate_array, m_distance_many
from .posterior import PosteriorTable, SetSpec, posterior_odds

# slack for rounding when cumulated masses should reach 1 - alpha exactly
_MASS_TOL = 1e-12


@dataclass(frozen=True)
class CredibleSet:
    members: frozenset
    level: float
    attained_mass: float
    construction: str = "hpd"

    def __post_init__(self):
        if not self.members:
            raise ValueError("credible set is empty")
        if self.construction not in ("hpd", "custom"):
            raise ValueError(f"unknown construction {self.construction!r}")

    def __contains__(self, theta: Labelling) -> bool:
        return theta in self.members

    def __len__(self) -> int:
        return len(self.members)

    def to_dict(self) -> dict:
        return {"level": self.level, "attained_mass": self.attained_mass, "construction": self.construction,
                "size": len(self.members), "members": sorted(str(t) for t in self.members)}


def hpd_credible_set(table: PosteriorTable, alpha: float) -> CredibleSet:
    """Shortest prefix, by posterior mass then label order, with mass at least ``1 - alpha``."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    order = table.order()
    cum = np.cumsum(np.exp(table.log_mass[order]))
    target = 1.0 - alpha
    k = int(np.searchsorted(cum, target - _MASS_TOL)) + 1
    k = min(k, len(order))
    rows = table.labels[order[:k]]
    members = frozenset(Labelling(tuple(int(x) for x in row)) for row in rows)
    return CredibleSet(members, target, float(min(1.0, cum[k - 1])), "hpd")


def custom_credible_set(table: PosteriorTable, members, alpha: float) -> CredibleSet:
    members = frozenset(members)
    mass = table.set_mass(members)
    if mass < 1.0 - alpha - _MASS_TOL:
        raise ValueError(f"set has posterior mass {mass:.6g} < {1 - alpha}")
    return CredibleSet(members, 1.0 - alpha, mass, "custom")


def enlarge(cs: CredibleSet | frozenset, k: int, family: ModelFamily, *, max_n: int = MAX_ENUM_N) -> frozenset:
    """Family labellings within Hamming-modulo-permutation distance ``k`` of the set."""
    if k < 0:
        raise ValueError("enlargement radius must be nonnegative")
    members = cs.members if isinstance(cs, CredibleSet) else frozenset(cs)
    if k == 0:
        return frozenset(members)
    arr = enumerate_array(family, max_n=max_n)
    if k >= family.n:
        keep = np.ones(arr.shape[0], dtype=bool)
    else:
        keep = np.zeros(arr.shape[0], dtype=bool)
        for eta in members:
            keep |= m_distance_many(eta, arr) <= k
    return frozenset(Labelling(tuple(int(x) for x in row)) for row in arr[keep])


@dataclass(frozen=True)
class ConfidenceStatement:
    """Frequentist coverage guaranteed by a credible set and a contraction input."""

    alpha: float
    x_n: float
    k_n: int = 0
    set_size: int | None = None

    @property
    def level(self) -> float:
        return 1.0 - self.x_n / (1.0 - self.alpha)

    @property
    def informative(self) -> bool:
        return self.level > 0.0

    def to_dict(self) -> dict:
        return {"level": self.level, "alpha": self.alpha, "x_n": self.x_n, "k_n": self.k_n,
                "set_size": self.set_size, "informative": self.informative}


def confidence_from_credible(alpha: float, x_n: float, k_n: int = 0, set_size: int | None = None) -> ConfidenceStatement:
    """Coverage ``1 - x_n / (1 - alpha)`` of a ``1 - alpha`` credible set.

    ``x_n`` bounds the expected posterior mass outside ``{theta0}`` when
    ``k_n == 0`` and outside the Hamming ball of radius ``k_n`` otherwise;
    in the latter case the statement is about the ``k_n``-enlargement.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if not 0.0 <= x_n <= 1.0:
        raise ValueError("x_n must lie in [0, 1]")
    if k_n < 0:
        raise ValueError("k_n must be nonnegative")
    return ConfidenceStatement(alpha, x_n, k_n, set_size)


def mass_event_bound(a: float, r: float) -> float:
    """Lower bound ``1 - a/r`` on ``P(Pi(B | X) >= 1 - r)`` when ``E Pi(B | X) >= 1 - a``.

    Values at or below zero carry no information but are returned as is.
    """
    if not 0.0 < r < 1.0:
        raise ValueError("r must lie in (0, 1)")
    if not 0.0 <= a <= 1.0:
        raise ValueError("a must lie in [0, 1]")
    return 1.0 - a / r


@dataclass(frozen=True)
class OddsDecision:
    reject: bool
    F: float
    r: float
    first_kind_bound: float | None = None
    odds_bound: float | None = None
    power_lower_bound: float | None = None
    notes: tuple = field(default_factory=tuple)

    @property
    def decision(self) -> str:
        return "reject-H0" if self.reject else "accept-H0"

    def to_dict(self) -> dict:
        F = self.F if math.isfinite(self.F) else "inf"
        return {"decision": self.decision, "F": F, "r": self.r, "first_kind_bound": self.first_kind_bound,
                "odds_bound": self.odds_bound, "power_lower_bound": self.power_lower_bound}


def odds_bounds(r: float, a: float | None = None, b: float | None = None,
                second_kind: float | None = None) -> tuple:
    """``(2a(1 + 1/r), 2a + 2b/r, 1 - 2(1 + r) second_kind)``; ``None`` where inputs are missing."""
    if r <= 0:
        raise ValueError("threshold r must be positive")
    first = 2 * a * (1 + 1 / r) if a is not None else None
    both = 2 * a + 2 * b / r if a is not None and b is not None else None
    power = 1 - 2 * (1 + r) * second_kind if second_kind is not None else None
    return first, both, power


def odds_test(table: PosteriorTable, A: SetSpec, B: SetSpec, r: float, *, a: float | None = None,
              b: float | None = None, second_kind: float | None = None) -> OddsDecision:
    """Reject ``H0: theta in A`` in favour of ``B`` when the posterior odds exceed ``r``."""
    if r <= 0:
        raise ValueError("threshold r must be positive")
    F = posterior_odds(table, A, B)
    first, both, power = odds_bounds(r, a, b, second_kind)
    return OddsDecision(F > r, F, r, first, both, power)
