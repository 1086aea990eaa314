"""Monte Carlo verification of the posterior-mass, coverage and testing bounds.

An experiment is described by one JSON document (see ``CONFIG_SCHEMA``).
Replicate ``i`` draws its graph from ``SeedSequence(seed, spawn_key=(1, i, 0))``
and its MCMC chain from ``(1, i, 1)``, so results do not depend on how
replicates are scheduled across workers.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .bounds import (BoundReport, model_selection_bound, model_selection_total, phase_example_bounds,
                     point_bound, ring_bound)
from .core import EdgeProbs, Labelling, ModelFamily, derive_seed, make_rng, sample_graph
from .errors import EnumerationInfeasible, UndefinedOdds
from .inference import hpd_credible_set
from .metrics import enumerate_array, m_distance_many, r_distance_many
from .posterior import (PosteriorTable, Prior, build_prior, mcmc_posterior, posterior_from_array,
                        posterior_odds)

EXPERIMENTS = ("contraction", "coverage", "testing")

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "sbmpost experiment configuration",
    "type": "object",
    "required": ["n", "family"],
    "additionalProperties": False,
    "properties": {
        "experiment": {"enum": list(EXPERIMENTS), "default": "contraction"},
        "n": {"type": "integer", "minimum": 1},
        "family": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "L": {"type": "integer", "minimum": 1},
                "sizes": {"type": "array", "minItems": 1,
                          "items": {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 1}}},
            },
            "anyOf": [{"required": ["L"]}, {"required": ["sizes"]}],
        },
        "phase": {"enum": ["dense", "chernoff-hellinger", "kesten-stigum", "explicit"], "default": "explicit"},
        "params": {"type": "object", "additionalProperties": {"type": "number"}},
        "prior": {"enum": ["hierarchical-uniform", "flat-uniform", "explicit-mass"], "default": "flat-uniform"},
        "prior_masses": {"type": "object", "additionalProperties": {"type": "number", "exclusiveMinimum": 0}},
        "theta0": {
            "default": "random",
            "oneOf": [
                {"const": "random"},
                {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 1}},
                {"type": "object", "required": ["sizes"], "additionalProperties": False,
                 "properties": {"sizes": {"type": "array", "items": {"type": "integer", "minimum": 1}}}},
            ],
        },
        "replicates": {"type": "integer", "minimum": 1, "default": 100},
        "seed": {"type": "integer", "minimum": 0, "default": 0},
        "engine": {"enum": ["exact", "mcmc"], "default": "exact"},
        "mcmc": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "steps": {"type": "integer", "minimum": 2},
                "burn_in": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                "weights": {"type": "object", "additionalProperties": False,
                            "properties": {k: {"type": "number", "minimum": 0} for k in ("swap", "relabel", "jump")}},
            },
        },
        "targets": {"type": "array", "items": {"type": "string",
                                               "pattern": r"^(wrong-models|point|not-theta0|model:\d+|ring:\d+|example-selection|example-point|example-ball)$"}},
        "alpha": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1, "default": 0.1},
        "k": {"type": "integer", "minimum": 0, "default": 0},
        "A": {"type": "array", "items": {"type": "integer", "minimum": 1}},
        "B": {"type": "array", "items": {"type": "integer", "minimum": 1}},
        "r": {"type": "number", "exclusiveMinimum": 0, "default": 1.0},
        "workers": {"type": "integer", "minimum": 1, "default": 1},
        "outputs": {"type": "array", "items": {"enum": ["json", "csv"]}, "default": ["json"]},
    },
}

_DEFAULT_MCMC = {"steps": 20000, "burn_in": 0.1}


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass
class ExperimentConfig:
    n: int
    family: dict
    experiment: str = "contraction"
    phase: str = "explicit"
    params: dict = field(default_factory=dict)
    prior: str = "flat-uniform"
    prior_masses: dict | None = None
    theta0: object = "random"
    replicates: int = 100
    seed: int = 0
    engine: str = "exact"
    mcmc: dict = field(default_factory=dict)
    targets: list | None = None
    alpha: float = 0.1
    k: int = 0
    A: list | None = None
    B: list | None = None
    r: float = 1.0
    workers: int = 1
    outputs: list = field(default_factory=lambda: ["json"])

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        import jsonschema

        try:
            jsonschema.validate(d, CONFIG_SCHEMA)
        except jsonschema.ValidationError as exc:
            raise ValueError(f"invalid config: {exc.message}") from None
        cfg = cls(**d)
        cfg.mcmc = {**_DEFAULT_MCMC, **cfg.mcmc}
        if cfg.targets is None and cfg.experiment == "contraction":
            cfg.targets = ["wrong-models", "point"]
        if cfg.experiment == "testing" and (cfg.A is None or cfg.B is None):
            raise ValueError("testing experiments need class-count lists A and B")
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        return {k: v for k, v in d.items() if v is not None}

    # -- derived objects --------------------------------------------------

    def model_family(self) -> ModelFamily:
        if "sizes" in self.family:
            return ModelFamily(self.n, self.family["sizes"], L=self.family.get("L"))
        return ModelFamily.windowed(self.n, self.family["L"])

    def edge_probs(self) -> EdgeProbs:
        p = self.params
        try:
            if self.phase == "dense":
                return EdgeProbs.dense(p["p"], p["q"])
            if self.phase == "chernoff-hellinger":
                return EdgeProbs.chernoff_hellinger(self.n, p["a"], p["b"])
            if self.phase == "kesten-stigum":
                return EdgeProbs.kesten_stigum(self.n, p["c"], p["d"])
            return EdgeProbs(p["p"], p["q"])
        except KeyError as exc:
            raise ValueError(f"phase {self.phase!r} needs parameter {exc.args[0]!r}") from None

    def make_prior(self, family: ModelFamily) -> Prior:
        masses = None
        if self.prior_masses is not None:
            masses = {Labelling.parse(k): v for k, v in self.prior_masses.items()}
        return build_prior(self.prior, family, masses)

    def true_labelling(self, family: ModelFamily) -> Labelling:
        spec = self.theta0
        if spec == "random":
            rng = make_rng(derive_seed(self.seed, 0))
            vecs = family.vectors()
            vec = vecs[int(rng.integers(len(vecs)))]
            theta = Labelling.from_labels(rng.permutation(np.repeat(np.arange(len(vec)), vec)))
        elif isinstance(spec, dict):
            theta = Labelling.blocks(spec["sizes"])
        else:
            theta = Labelling.from_labels(spec)
        if theta not in family:
            raise ValueError(f"theta0 {theta} is not in the model family")
        return theta


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


@dataclass
class ReportRow:
    """One checked target. ``kind`` is ``upper`` (mean <= bound) or ``lower``."""

    target: str
    bound_name: str
    kind: str
    mean: float
    se: float
    bound: float
    vacuous: bool
    guaranteed: bool

    @property
    def passed(self) -> bool:
        if self.kind == "upper":
            return self.mean <= self.bound + 3 * self.se
        return self.mean >= self.bound - 3 * self.se

    def to_dict(self) -> dict:
        b = self.bound if math.isfinite(self.bound) else None
        return {"target": self.target, "bound_name": self.bound_name, "kind": self.kind, "mean": self.mean,
                "se": self.se, "bound": b, "vacuous": self.vacuous, "guaranteed": self.guaranteed,
                "pass": self.passed}


@dataclass
class MonteCarloReport:
    experiment: str
    config: dict
    seed: int
    rows: list
    values: dict = field(default_factory=dict, repr=False)
    bounds: dict = field(default_factory=dict, repr=False)
    notes: list = field(default_factory=list)
    runtime: float | None = None

    @property
    def all_passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def row(self, target: str) -> ReportRow:
        for r in self.rows:
            if r.target == target:
                return r
        raise KeyError(target)

    def to_dict(self, include_runtime: bool = False) -> dict:
        d = {"experiment": self.experiment, "seed": self.seed, "config": self.config,
             "rows": [r.to_dict() for r in self.rows], "all_pass": self.all_passed, "notes": self.notes,
             "bounds": {k: v.to_dict() for k, v in self.bounds.items()}}
        if include_runtime and self.runtime is not None:
            d["runtime"] = self.runtime
        return d

    def to_json(self, include_runtime: bool = False) -> str:
        return json.dumps(self.to_dict(include_runtime), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        cols = ["target", "bound_name", "kind", "mean", "se", "bound", "vacuous", "guaranteed", "pass"]
        w = csv.DictWriter(buf, cols, lineterminator="\n")
        w.writeheader()
        for r in self.rows:
            w.writerow(r.to_dict())
        return buf.getvalue()


def _mean_se(x: np.ndarray) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        return float(x.mean()), 0.0
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))


# ---------------------------------------------------------------------------
# Replicates
# ---------------------------------------------------------------------------


@dataclass
class _Context:
    # Everything a replicate needs; must stay picklable for the worker pool.
    experiment: str
    theta0: Labelling
    prior: Prior
    probs: EdgeProbs
    seed: int
    engine: str
    mcmc: dict
    labels: np.ndarray | None
    log_prior: np.ndarray | None
    targets: list
    alpha: float = 0.1
    k: int = 0
    A: tuple = ()
    B: tuple = ()
    r: float = 1.0
    masks: dict | None = None


def target_mask(target: str, theta0: Labelling, labels: np.ndarray, *, radius: int | None = None) -> np.ndarray:
    """Rows of ``labels`` belonging to a named target set."""
    ells = labels.max(axis=1) + 1
    ell0 = theta0.ell
    if target in ("wrong-models", "example-selection"):
        return ells != ell0
    if target in ("point", "example-point"):
        return (ells == ell0) & ~(labels == theta0.array()).all(axis=1)
    if target == "not-theta0":
        return ~(labels == theta0.array()).all(axis=1)
    if target == "example-ball":
        return m_distance_many(theta0, labels) > radius
    kind, _, arg = target.partition(":")
    if kind == "model":
        return ells == int(arg)
    if kind == "ring":
        out = np.zeros(labels.shape[0], dtype=bool)
        same = ells == ell0
        out[same] = r_distance_many(theta0, labels[same]) == int(arg)
        return out
    if kind == "ball":
        return m_distance_many(theta0, labels) > int(arg)
    raise ValueError(f"unknown target {target!r}")


def _table(ctx: _Context, i: int) -> PosteriorTable:
    graph = sample_graph(ctx.theta0, ctx.probs, derive_seed(ctx.seed, 1, i, 0))
    if ctx.engine == "exact":
        return posterior_from_array(graph, ctx.prior, ctx.probs, ctx.labels, ctx.log_prior)
    res = mcmc_posterior(graph, ctx.prior, ctx.probs, ctx.mcmc["steps"], derive_seed(ctx.seed, 1, i, 1),
                         burn_in=float(ctx.mcmc["burn_in"]), move_weights=ctx.mcmc.get("weights"))
    uniq, counts = np.unique(res.samples, axis=0, return_counts=True)
    lm = np.log(counts / counts.sum())
    return PosteriorTable(uniq.astype(np.int8), lm, math.nan, graph, ctx.prior, ctx.probs)


def _masks(ctx: _Context, labels: np.ndarray) -> dict:
    if ctx.masks is not None:
        return ctx.masks
    return _build_masks(ctx, labels)


def _build_masks(ctx: _Context, labels: np.ndarray) -> dict:
    if ctx.experiment == "contraction":
        return {t: target_mask(t, ctx.theta0, labels, radius=radius) for t, radius in ctx.targets}
    if ctx.experiment == "coverage":
        t = "not-theta0" if ctx.k == 0 else f"ball:{ctx.k}"
        return {"deficit": target_mask(t, ctx.theta0, labels)}
    ells = labels.max(axis=1) + 1
    mA, mB = np.isin(ells, ctx.A), np.isin(ells, ctx.B)
    return {"A": mA, "B": mB, "not_A": ~mA, "not_B": ~mB}


def _replicate(ctx: _Context, i: int) -> dict:
    table = _table(ctx, i)
    masks = _masks(ctx, table.labels)
    mass = {t: table.set_mass(m) for t, m in masks.items()}
    if ctx.experiment == "contraction":
        return mass
    if ctx.experiment == "coverage":
        cs = hpd_credible_set(table, ctx.alpha)
        rows = np.array([t.labels for t in cs.members], dtype=np.int8)
        if ctx.k == 0:
            covered = ctx.theta0 in cs
        else:
            covered = bool((m_distance_many(ctx.theta0, rows) <= ctx.k).min(initial=ctx.theta0.n + 1) <= ctx.k)
        return {"covered": float(covered), "deficit": mass["deficit"], "size": float(len(cs))}
    # testing
    try:
        F = posterior_odds(table, masks["A"], masks["B"])
        reject = F > ctx.r
        undefined = 0.0
    except UndefinedOdds:
        reject, undefined = False, 1.0
    return {"reject": float(reject), "undefined": undefined, "not_A": mass["not_A"], "B": mass["B"],
            "not_B": mass["not_B"]}


def _run_replicates(ctx: _Context, replicates: int, workers: int) -> dict:
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_replicate, [ctx] * replicates, range(replicates),
                                  chunksize=max(1, replicates // (4 * workers))))
    else:
        results = [_replicate(ctx, i) for i in range(replicates)]
    keys = results[0].keys()
    return {k: np.array([r[k] for r in results]) for k in keys}


def _setup(cfg: ExperimentConfig):
    family = cfg.model_family()
    probs = cfg.edge_probs()
    probs.check_open()
    prior = cfg.make_prior(family)
    theta0 = cfg.true_labelling(family)
    labels = log_prior = None
    if cfg.engine == "exact":
        try:
            labels = enumerate_array(family)
        except EnumerationInfeasible as exc:
            raise EnumerationInfeasible(f"{exc}; use engine 'mcmc'") from None
        log_prior = prior.log_mass_many(labels)
    return family, probs, prior, theta0, labels, log_prior


def _make_context(cfg, experiment, theta0, prior, probs, labels, log_prior, targets=(), **kw) -> _Context:
    ctx = _Context(experiment, theta0, prior, probs, cfg.seed, cfg.engine, cfg.mcmc, labels, log_prior,
                   list(targets), **kw)
    if labels is not None:
        # exact engine: the table rows are the same in every replicate
        ctx.masks = _build_masks(ctx, labels)
    return ctx


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------


def _bound_for(target: str, family, prior, theta0, probs, cfg) -> tuple[BoundReport, int | None]:
    if target == "wrong-models":
        return model_selection_total(family, prior, theta0, probs), None
    if target == "point":
        return point_bound(family, prior, theta0, probs), None
    if target == "not-theta0":
        a = model_selection_total(family, prior, theta0, probs)
        b = point_bound(family, prior, theta0, probs)
        lv = float(np.logaddexp(a.log_value, b.log_value))
        return BoundReport(f"{b.name}+{a.name}", {**b.inputs}, lv,
                           a.assumptions_checked + b.assumptions_checked), None
    if target.startswith("model:"):
        return model_selection_bound(family, prior, theta0, int(target[6:]), probs), None
    if target.startswith("ring:"):
        return ring_bound(family, prior, theta0, int(target[5:]), probs), None
    if target.startswith("example-"):
        if cfg.phase == "explicit":
            raise ValueError("example targets need a dense, chernoff-hellinger or kesten-stigum phase")
        reps = {r.name.split("-", 2)[-1]: r for r in phase_example_bounds(cfg.phase, family.n, family.L, cfg.params)}
        tag = {"dense": "dense", "chernoff-hellinger": "ch", "kesten-stigum": "ks"}[cfg.phase]
        if target == "example-selection":
            return reps[tag], None
        if target == "example-point":
            if tag == "ks":
                raise ValueError("the Kesten-Stigum example has no point bound; use example-ball")
            return reps["point"], None
        if tag != "ks":
            raise ValueError("example-ball is only defined for the Kesten-Stigum phase")
        rep = reps["ball"]
        return rep, int(math.floor(rep.inputs["radius"]))
    raise ValueError(f"unknown target {target!r}")


def run_contraction_experiment(cfg: ExperimentConfig) -> MonteCarloReport:
    """Average posterior mass of each target set against its bound."""
    t0 = time.perf_counter()
    family, probs, prior, theta0, labels, log_prior = _setup(cfg)
    bounds, specs = {}, []
    for t in cfg.targets:
        rep, radius = _bound_for(t, family, prior, theta0, probs, cfg)
        bounds[t] = rep
        specs.append((t, radius))
    ctx = _make_context(cfg, "contraction", theta0, prior, probs, labels, log_prior, specs)
    values = _run_replicates(ctx, cfg.replicates, cfg.workers)
    rows = []
    for t in cfg.targets:
        mean, se = _mean_se(values[t])
        b = bounds[t]
        rows.append(ReportRow(t, b.name, "upper", mean, se, b.value, b.vacuous, b.guaranteed))
    return _finish(cfg, "contraction", theta0, rows, values, bounds, t0)


def run_coverage_experiment(cfg: ExperimentConfig, alpha: float | None = None, k: int | None = None) -> MonteCarloReport:
    """Frequency with which the HPD set (or its enlargement) contains ``theta0``.

    The bound ``1 - x/(1 - alpha)`` uses the in-run mean deficit ``x``; the
    standard error is that of the per-replicate difference, so estimation
    error in ``x`` is accounted for.
    """
    t0 = time.perf_counter()
    alpha = cfg.alpha if alpha is None else alpha
    k = cfg.k if k is None else k
    family, probs, prior, theta0, labels, log_prior = _setup(cfg)
    ctx = _make_context(cfg, "coverage", theta0, prior, probs, labels, log_prior, alpha=alpha, k=k)
    values = _run_replicates(ctx, cfg.replicates, cfg.workers)
    cov = values["covered"]
    x_hat = float(values["deficit"].mean())
    z = cov + values["deficit"] / (1 - alpha)
    _, se = _mean_se(z)
    bound = 1 - x_hat / (1 - alpha)
    name = "credible-to-confidence" if k == 0 else "enlarged-credible-to-confidence"
    rep = BoundReport(name, {"alpha": alpha, "k": k, "x_hat": x_hat}, math.log(bound) if bound > 0 else -math.inf,
                      [("confidence level positive", bound > 0)])
    rows = [ReportRow("coverage", name, "lower", float(cov.mean()), se, bound, False, bound > 0)]
    return _finish(cfg, "coverage", theta0, rows, values, {"coverage": rep}, t0)


def run_testing_experiment(cfg: ExperimentConfig, A=None, B=None, r: float | None = None) -> MonteCarloReport:
    """Rejection frequency of the posterior-odds test of ``A`` against ``B``.

    With ``theta0`` in ``A`` the first-kind error is checked; with ``theta0``
    in ``B`` the second-kind error and the power.
    """
    t0 = time.perf_counter()
    A = tuple(cfg.A if A is None else A)
    B = tuple(cfg.B if B is None else B)
    r = cfg.r if r is None else r
    if set(A) & set(B):
        raise ValueError("hypotheses A and B share a class count")
    family, probs, prior, theta0, labels, log_prior = _setup(cfg)
    if theta0.ell not in A + B:
        raise ValueError("theta0 must lie in A or in B")
    ctx = _make_context(cfg, "testing", theta0, prior, probs, labels, log_prior, A=A, B=B, r=r)
    values = _run_replicates(ctx, cfg.replicates, cfg.workers)
    rej = values["reject"]
    rows, bounds = [], {}
    if theta0.ell in A:
        a_i, b_i = values["not_A"], values["B"]
        a_hat, b_hat = float(a_i.mean()), float(b_i.mean())
        c = 2 * (1 + 1 / r)
        first = BoundReport("thm-odds", {"a": a_hat, "r": r}, _log(c * a_hat), [("r > 0", True)])
        full = BoundReport("thm-odds", {"a": a_hat, "b": b_hat, "r": r}, _log(2 * a_hat + 2 * b_hat / r),
                           [("r > 0", True)])
        _, se1 = _mean_se(rej - c * a_i)
        _, se2 = _mean_se(rej - 2 * a_i - 2 * b_i / r)
        rows.append(ReportRow("first-kind", "thm-odds", "upper", float(rej.mean()), se1, first.value,
                              first.vacuous, True))
        rows.append(ReportRow("first-kind-ab", "thm-odds", "upper", float(rej.mean()), se2, full.value,
                              full.vacuous, True))
        bounds = {"first-kind": first, "first-kind-ab": full}
    else:
        b_i = values["not_B"]
        b_hat = float(b_i.mean())
        c = 2 * (1 + r)
        second = BoundReport("thm-odds", {"b": b_hat, "r": r, "roles": "reversed"}, _log(c * b_hat), [("r > 0", True)])
        power = 1 - c * b_hat
        _, se = _mean_se(rej + c * b_i)
        rows.append(ReportRow("second-kind", "thm-odds", "upper", float(1 - rej.mean()), se, second.value,
                              second.vacuous, True))
        rows.append(ReportRow("power", "thm-odds", "lower", float(rej.mean()), se, power, False, power > 0))
        bounds = {"second-kind": second}
    report = _finish(cfg, "testing", theta0, rows, values, bounds, t0)
    if values["undefined"].any():
        report.notes.append(f"{int(values['undefined'].sum())} replicates had zero mass on both hypotheses")
    return report


def _log(x: float) -> float:
    return math.log(x) if x > 0 else -math.inf


def _finish(cfg, experiment, theta0, rows, values, bounds, t0) -> MonteCarloReport:
    config = cfg.to_dict()
    config["theta0_resolved"] = str(theta0)
    return MonteCarloReport(experiment, config, cfg.seed, rows, values, bounds,
                            runtime=time.perf_counter() - t0)


def run_experiment(cfg: ExperimentConfig) -> MonteCarloReport:
    if cfg.experiment == "contraction":
        return run_contraction_experiment(cfg)
    if cfg.experiment == "coverage":
        return run_coverage_experiment(cfg)
    return run_testing_experiment(cfg)
