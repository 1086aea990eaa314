"""Closed-form bounds on posterior mass, test errors and recovery.

Every bound is evaluated in log space and returned as a :class:`BoundReport`
that records its inputs and the premises it depends on. Values at or above
one are flagged vacuous rather than clamped.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .core import EdgeProbs, Labelling, ModelFamily, log_likelihood_many, make_rng
from .errors import AssumptionViolation, EnumerationInfeasible
from .metrics import (MAX_ENUM_N, enumerate_array, r_distance_many, ring_cardinality_bound)
from .posterior import Prior

LOG2 = math.log(2.0)
_EXP_MAX = 700.0


def hellinger_affinity(p: float, q: float) -> float:
    """``sqrt(p q) + sqrt((1-p)(1-q))`` for two Bernoulli laws."""
    for x in (p, q):
        if not 0.0 < x < 1.0:
            raise ValueError(f"edge probability {x} must lie in (0, 1)")
    if p == q:
        return 1.0
    return min(1.0, math.sqrt(p * q) + math.sqrt((1.0 - p) * (1.0 - q)))


def affinity_exponent(p: float, q: float) -> float:
    """``b = -log rho(p, q)``, zero when ``p == q``."""
    return -math.log(hellinger_affinity(p, q))


def test_power_bound(d1: int, d2: int, p: float, q: float) -> float:
    if d1 < 0 or d2 < 0:
        raise ValueError("pair counts must be nonnegative")
    return hellinger_affinity(p, q) ** (d1 + d2)


def lr_test_errors(theta0: Labelling, theta: Labelling, probs: EdgeProbs, *, max_pairs: int = 10) -> tuple[float, float]:
    """Exact type-I and type-II errors of the likelihood-ratio test.

    Sums over all ``2**C(n,2)`` graphs; the test rejects ``theta0`` when the
    likelihood under ``theta`` is strictly larger.
    """
    from .core import Graph

    n = theta0.n
    npairs = n * (n - 1) // 2
    if npairs > max_pairs:
        raise EnumerationInfeasible(f"{2 ** npairs} graphs exceeds the enumeration cap")
    probs.check_open()
    codes = np.arange(2 ** npairs, dtype=np.int64)
    bits = ((codes[:, None] >> np.arange(npairs)) & 1).astype(bool)
    labels = np.stack([theta0.array(), theta.array()])
    ll = np.empty((bits.shape[0], 2))
    for g, row in enumerate(bits):
        ll[g] = log_likelihood_many(Graph.from_upper(n, row), labels, probs)
    reject = ll[:, 1] > ll[:, 0]
    type1 = float(np.exp(ll[reject, 0]).sum())
    type2 = float(np.exp(ll[~reject, 1]).sum())
    return type1, type2


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


@dataclass
class BoundReport:
    """A bound value in log space with its inputs and checked premises."""

    name: str
    inputs: dict
    log_value: float
    assumptions_checked: list = field(default_factory=list)

    @property
    def value(self) -> float:
        if self.log_value == -math.inf:
            return 0.0
        return math.exp(self.log_value) if self.log_value < _EXP_MAX else math.inf

    @property
    def vacuous(self) -> bool:
        return self.log_value >= 0.0

    @property
    def guaranteed(self) -> bool:
        return all(ok for _, ok in self.assumptions_checked)

    def to_dict(self) -> dict:
        v = self.value
        lv = self.log_value
        return {
            "name": self.name,
            "inputs": self.inputs,
            "value": v if math.isfinite(v) else None,
            "log_value": lv if math.isfinite(lv) else ("-inf" if lv < 0 else "inf"),
            "vacuous": self.vacuous,
            "guaranteed": self.guaranteed,
            "assumptions_checked": [{"name": a, "pass": bool(ok)} for a, ok in self.assumptions_checked],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _log_rho(probs_or_pq) -> float:
    if isinstance(probs_or_pq, EdgeProbs):
        p, q = probs_or_pq.p, probs_or_pq.q
    else:
        p, q = probs_or_pq
    return math.log(hellinger_affinity(p, q))


def _check_theta0(family: ModelFamily, prior: Prior, theta0: Labelling) -> float:
    if theta0 not in family:
        raise ValueError("theta0 is not in the model family")
    lp = prior.log_mass(theta0)
    if lp == -math.inf:
        raise AssumptionViolation("prior puts zero mass on theta0")
    return lp


def model_prior_log_mass(prior: Prior, ell: int, *, max_n: int = MAX_ENUM_N) -> float:
    """Log prior mass of all labellings with ``ell`` classes."""
    fam = prior.family
    if ell not in fam.ells:
        return -math.inf
    if prior.kind == "hierarchical-uniform":
        return -math.log(len(fam.ells))
    if prior.kind == "flat-uniform":
        return math.log(fam.cardinality(ell)) - math.log(fam.cardinality())
    lm = prior.log_mass_many(enumerate_array(fam, ell, max_n=max_n))
    return float(np.logaddexp.reduce(lm))


def posterior_set_bound(prior: Prior, theta0: Labelling, S_card: int, S_prior_mass: float,
                        B_exponent: float, p: float, q: float) -> BoundReport:
    """``2 max(pi(S)/pi(theta0), |S|) rho**B`` for a set separated by at least ``B`` pairs."""
    lp0 = prior.log_mass(theta0)
    if lp0 == -math.inf:
        raise AssumptionViolation("prior puts zero mass on theta0")
    if S_card < 0 or S_prior_mass < 0:
        raise ValueError("set size and prior mass must be nonnegative")
    lratio = math.log(S_prior_mass) - lp0 if S_prior_mass > 0 else -math.inf
    lcard = math.log(S_card) if S_card > 0 else -math.inf
    lmax = max(lratio, lcard)
    log_value = -math.inf if lmax == -math.inf else LOG2 + lmax + B_exponent * _log_rho((p, q))
    return BoundReport(
        "prop-postconvset",
        {"n": theta0.n, "ell0": theta0.ell, "p": p, "q": q, "prior": prior.kind, "S_card": S_card,
         "S_prior_mass": S_prior_mass, "B_exponent": B_exponent},
        log_value,
        [("B_exponent >= 1", B_exponent >= 1), ("prior mass of theta0 > 0", True)],
    )


def model_selection_bound(family: ModelFamily, prior: Prior, theta0: Labelling, ell: int,
                          probs: EdgeProbs) -> BoundReport:
    """Expected posterior mass of the ``ell``-class model under ``theta0``."""
    lp0 = _check_theta0(family, prior, theta0)
    ell0 = theta0.ell
    if ell == ell0:
        raise ValueError("model selection bound needs ell != ell0")
    if ell not in family.ells:
        raise ValueError(f"class count {ell} is not in the family")
    family.require_size_ordering()
    exponent = 0.5 * family.n * family.size_gap(ell0, ell)
    lcard = math.log(family.cardinality(ell))
    lratio = model_prior_log_mass(prior, ell) - lp0
    log_value = LOG2 + max(lcard, lratio) + exponent * _log_rho(probs)
    return BoundReport(
        "prop-model-select",
        {"n": family.n, "ell0": ell0, "ell": ell, "p": probs.p, "q": probs.q, "prior": prior.kind,
         "card": family.cardinality(ell), "B_exponent": exponent},
        log_value,
        [("class-size ordering", True), ("B_exponent > 0", exponent > 0)],
    )


def model_selection_total(family: ModelFamily, prior: Prior, theta0: Labelling, probs: EdgeProbs) -> BoundReport:
    """Sum of :func:`model_selection_bound` over every wrong class count."""
    parts = [model_selection_bound(family, prior, theta0, ell, probs)
             for ell in family.ells if ell != theta0.ell]
    log_value = float(np.logaddexp.reduce([r.log_value for r in parts])) if parts else -math.inf
    return BoundReport(
        "prop-model-select-total",
        {"n": family.n, "ell0": theta0.ell, "p": probs.p, "q": probs.q, "prior": prior.kind,
         "ells": [r.inputs["ell"] for r in parts]},
        log_value,
        [("class-size ordering", True)],
    )


def ring_bound(family: ModelFamily, prior: Prior, theta0: Labelling, k: int, probs: EdgeProbs, *,
               max_n: int = MAX_ENUM_N) -> BoundReport:
    """Expected posterior mass of the ``r``-ring of radius ``k`` around ``theta0``.

    The ring size is exact when the class count is enumerable and falls
    back to the binomial upper bound otherwise.
    """
    lp0 = _check_theta0(family, prior, theta0)
    ell0 = theta0.ell
    if ell0 < 2:
        raise ValueError("rings need at least two classes")
    if k < 0:
        raise ValueError("ring radius must be nonnegative")
    n = family.n
    m_min = family.m_min(ell0)
    kmax = family.m_max(ell0) // 2
    try:
        arr = enumerate_array(family, ell0, max_n=max_n)
        members = arr[r_distance_many(theta0, arr) == k]
        card = members.shape[0]
        lcard = math.log(card) if card else -math.inf
        if prior.kind == "explicit-mass":
            lmass = float(np.logaddexp.reduce(prior.log_mass_many(members))) if card else -math.inf
        else:
            lmass = lcard + lp0
        exact = True
    except EnumerationInfeasible:
        lcard = ring_cardinality_bound(n, ell0, k)
        lmass = lcard + math.log(prior.max_ratio(ell0, max_n=max_n)) + lp0
        exact = False
    exponent = 2 * k * max(m_min - k, 0)
    lmax = max(lcard, lmass - lp0)
    log_value = -math.inf if lmax == -math.inf else LOG2 + lmax + exponent * _log_rho(probs)
    return BoundReport(
        "prop-ring",
        {"n": n, "ell0": ell0, "k": k, "p": probs.p, "q": probs.q, "prior": prior.kind,
         "m_min": m_min, "B_exponent": exponent, "card_exact": exact},
        log_value,
        [("ell0 > 1", True), ("0 <= k <= m_max/2", k <= kmax)],
    )


def point_bound(family: ModelFamily, prior: Prior, theta0: Labelling, probs: EdgeProbs, *,
                max_n: int = MAX_ENUM_N) -> BoundReport:
    """Expected posterior mass of the centre's model minus ``theta0`` itself."""
    _check_theta0(family, prior, theta0)
    ell0 = theta0.ell
    n = family.n
    if ell0 == 1:
        # the one-class model is a single labelling
        return BoundReport("cor-point", {"n": n, "ell0": 1, "p": probs.p, "q": probs.q, "prior": prior.kind},
                           -math.inf, [("ell0 > 1", False)])
    if not family.satisfies_balance():
        raise AssumptionViolation("balance premise m_min >= m_max/2 fails for some class count")
    m_min, m_max = family.m_min(ell0), family.m_max(ell0)
    e = ell0 * (ell0 - 1)
    K = prior.max_ratio(ell0, max_n=max_n)
    log_B = math.log(2 * n) + (2 * m_min - m_max) / e * _log_rho(probs)
    B = math.exp(log_B)
    log_value = LOG2 + math.log(K) + e * log_B + (ell0 - 1) * B
    return BoundReport(
        "cor-point",
        {"n": n, "ell0": ell0, "p": probs.p, "q": probs.q, "prior": prior.kind, "K": K,
         "m_min": m_min, "m_max": m_max, "B_n": B},
        log_value,
        [("ell0 > 1", True), ("m_min >= m_max/2", True), ("prior positive on the model", True)],
    )


def odds_test_bound(a: float, r: float, b: float | None = None) -> BoundReport:
    """Bound on ``P(F > r)`` from contraction inputs.

    ``a`` bounds the expected posterior mass outside the null set and ``b``
    the expected mass of the alternative. Without ``b`` the form
    ``2a(1 + 1/r)`` is returned, which uses ``b <= a``.
    """
    if r <= 0:
        raise ValueError("threshold r must be positive")
    if a < 0 or (b is not None and b < 0):
        raise ValueError("contraction inputs must be nonnegative")
    val = 2 * a * (1 + 1 / r) if b is None else 2 * a + 2 * b / r
    inputs = {"a": a, "r": r} if b is None else {"a": a, "b": b, "r": r}
    return BoundReport("thm-odds", inputs, math.log(val) if val > 0 else -math.inf, [("r > 0", True)])


# ---------------------------------------------------------------------------
# Phase examples
# ---------------------------------------------------------------------------


def _phase_strength(phase: str, n: int, params: dict) -> tuple[float, dict]:
    # Returns the separation parameter and the normalised inputs.
    if phase == "dense":
        if "b" in params:
            b = float(params["b"])
        else:
            b = affinity_exponent(float(params["p"]), float(params["q"]))
        return b, {**params, "b": b}
    if phase == "chernoff-hellinger":
        a, b = float(params["a"]), float(params["b"])
        return (math.sqrt(a) - math.sqrt(b)) ** 2, {"a": a, "b": b}
    if phase == "kesten-stigum":
        c, d = float(params["c"]), float(params["d"])
        return (math.sqrt(c) - math.sqrt(d)) ** 2, {"c": c, "d": d}
    raise ValueError(f"unknown phase {phase!r}")


def phase_example_bounds(phase: str, n: int, L: int, params: dict, r: float = 1.0) -> list[BoundReport]:
    """Aggregate recovery and testing bounds for the windowed-family examples.

    Premises are evaluated and recorded; a failed premise leaves the value
    in place but marks the report as not guaranteed.
    """
    if L < 2:
        raise ValueError("phase examples need L >= 2")
    if n < 2:
        raise ValueError("need n >= 2")
    if r <= 0:
        raise ValueError("threshold r must be positive")
    s, norm = _phase_strength(phase, n, params)
    base = {"phase": phase, "n": n, "L": L, **norm}
    logL, logn = math.log(L), math.log(n)
    out = []

    if phase == "dense":
        b = s
        sel_exp = -b * n * n / (12 * L * L)
        sel_prem = [("n b >= 12 L^2 log L", n * b >= 12 * L * L * logL)]
        out.append(BoundReport("example-dense", base, logL + sel_exp, sel_prem))
        out.append(BoundReport("example-dense-point", base, LOG2 + 0.5 - n * b / (8 * L),
                               [("n b >= 8 L^2 (L-1) log(2n)", n * b >= 8 * L * L * (L - 1) * math.log(2 * n))]))
        tag = "dense"
    elif phase == "chernoff-hellinger":
        a, bb = norm["a"], norm["b"]
        sel_exp = -s * n * logn / (48 * L * L)
        sel_prem = [("48 L^2 log L <= (sqrt a - sqrt b)^2 log n", 48 * L * L * logL <= s * logn),
                    ("a b log n / (4n) <= (sqrt a - sqrt b)^2 / 4", a * bb * logn / (4 * n) <= s / 4)]
        out.append(BoundReport("example-ch", base, logL + sel_exp, sel_prem))
        out.append(BoundReport("example-ch-point", base, LOG2 + 0.5 - s / (32 * L) * logn,
                               [("(sqrt a - sqrt b)^2 >= 32 L^2 (L-1) log(2n)/log n",
                                 s * logn >= 32 * L * L * (L - 1) * math.log(2 * n))]))
        tag = "ch"
    else:
        sel_exp = -s * n / (48 * L * L)
        sel_prem = [("(sqrt c - sqrt d)^2 >= 48 L^2 log L", s >= 48 * L * L * logL)]
        out.append(BoundReport("example-ks", base, logL + sel_exp, sel_prem))
        e = L * (L - 1)
        log_delta = LOG2 + math.log(L - 1) + 2 - s / (16 * L * L * (L - 1))
        delta = math.exp(log_delta)
        lhs = -1 - LOG2 + log_delta - math.log(L - 1) + s / (16 * L * L * (L - 1))
        rhs = math.sqrt(2 * e / (delta * n))
        ball_log = float(np.logaddexp(logL + sel_exp, LOG2 - delta * n / 4))
        out.append(BoundReport(
            "example-ks-ball", {**base, "delta": delta, "radius": delta * n}, ball_log,
            sel_prem + [("delta / (L(L-1)) in (0, 1)", 0 < delta / e < 1),
                        ("delta n / (L(L-1)) >= 2", delta * n / e >= 2),
                        ("ball exponent condition", lhs >= rhs)]))
        tag = "ks"

    test_in = {**base, "r": r}
    out.append(BoundReport(f"example-{tag}-test-first", test_in, LOG2 + logL + math.log1p(1 / r) + sel_exp, sel_prem))
    out.append(BoundReport(f"example-{tag}-test-second", test_in, LOG2 + math.log1p(r) + sel_exp, sel_prem))
    return out


def phase_bound(name: str, n: int, L: int, params: dict, r: float = 1.0) -> BoundReport:
    phase = {"dense": "dense", "ch": "chernoff-hellinger", "ks": "kesten-stigum"}[name.split("-")[1]]
    for rep in phase_example_bounds(phase, n, L, params, r):
        if rep.name == name:
            return rep
    raise KeyError(name)


# ---------------------------------------------------------------------------
# Auxiliary inequalities
# ---------------------------------------------------------------------------


def aux_inequalities_check(samples: int, seed=None, *, tol: float = 1e-12) -> dict:
    """Randomised check of three elementary inequalities on their domains.

    Returns ``{name: {"samples", "pass", "counterexample"}}``. Comparisons
    are made in log space with a relative tolerance for rounding at the
    equality points.
    """
    if samples < 1:
        raise ValueError("samples must be positive")
    rng = make_rng(seed)
    out = {}

    # e^{-Cx} / (1 - e^{-x}) <= e^{-Cx/4} for C >= 2, x >= sqrt(2/C)
    C = 2.0 * np.exp(rng.uniform(0, math.log(500), samples))
    x = np.sqrt(2 / C) * np.exp(rng.uniform(0, math.log(100), samples))
    lhs = -C * x - np.log(-np.expm1(-x))
    rhs = -C * x / 4
    bad = lhs > rhs + tol * np.maximum(1, np.abs(rhs))
    out["exp-ratio"] = _aux_result(samples, bad, {"C": C, "x": x})

    # sqrt(1-x) <= 1 - x/2 on [0, 1]
    x = rng.uniform(0, 1, samples)
    x[:2] = (0.0, 1.0)
    bad = np.sqrt(1 - x) > 1 - x / 2 + tol
    out["sqrt"] = _aux_result(samples, bad, {"x": x})

    # (1 + x/r)^r <= e^x for integers r >= 1 and x > -r
    r = rng.integers(1, 1001, samples).astype(float)
    x = -r + (4 * r + 10) * (1 - rng.random(samples))  # (1 - U) is in (0, 1]
    lhs = r * np.log1p(x / r)
    bad = lhs > x + tol * np.maximum(1, np.abs(x))
    out["power"] = _aux_result(samples, bad, {"r": r, "x": x})
    return out


def _aux_result(samples: int, bad: np.ndarray, arrays: dict) -> dict:
    idx = np.flatnonzero(bad)
    ce = None if idx.size == 0 else {k: float(v[idx[0]]) for k, v in arrays.items()}
    return {"samples": samples, "pass": ce is None, "counterexample": ce}
