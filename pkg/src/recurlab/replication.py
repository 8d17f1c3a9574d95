"""Many-replica experiments, deterministic aggregation and rate checks.

Replica ``r`` always uses stream ``(master_seed, r)``.  Per-replica results are
folded in index order into sums kept as exact integers and Fractions, so an
aggregate is the same bit for bit whatever the worker count, block size or
interruption points were.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.special import ndtri

from recurlab import __version__
from recurlab.errors import (IncompatibleTarget, InconsistentGrid, InsufficientData,
                             InsufficientReplicas, InvalidSpec, WrongDimension)
from recurlab.estimators import BOX_TOL, Form, box_limit_value, limit_value
from recurlab.hits import HIT_RTOL, TargetMode, TargetSpec, box_hits, lattice_hits, window_hits
from recurlab.oracle import CONSTANTS
from recurlab.schedule import Schedule, ScheduleSpec, build_schedule, normalizer_value
from recurlab.stepdist import StepDistribution, from_dict as dist_from_dict, whitening
from recurlab.streams import GENERATOR, RngStream
from recurlab.walker import run_checkpoints, run_min_tracker, run_weighted_box

AGGREGATE_SCHEMA = "recurlab.aggregate/1"
HIST_WIDTH = Fraction(1, 100)
HIST_BINS = 500            # [0, 5) in steps of 0.01, plus one overflow bin
BLOCK = 250
WORKERS_ENV = "RECURLAB_WORKERS"

_MODE_FOR_FORM = {
    Form.T1_LATTICE: (TargetMode.LATTICE_POINT, 2),
    Form.T2A_WINDOW: (TargetMode.ALPHA_WINDOW, 1),
    Form.T2B_WINDOW: (TargetMode.ALPHA_WINDOW, 2),
    Form.T3_BOX: (TargetMode.SCALED_BOX, None),
    Form.C3_WEIGHTED: (TargetMode.SCALED_BOX, None),
}


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


@dataclass(frozen=True)
class ExperimentConfig:
    dist: dict
    schedule: ScheduleSpec
    target: TargetSpec
    form: Form
    replicas: int
    master_seed: int
    epsilon_grid: tuple[float, ...] = (0.25, 0.5, 1.0)
    c_be: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "form", Form(self.form))
        object.__setattr__(self, "epsilon_grid", tuple(float(e) for e in self.epsilon_grid))
        if int(self.replicas) != self.replicas or self.replicas < 1:
            raise InvalidSpec(f"replicas must be a positive integer, got {self.replicas}")
        if not (0 <= self.master_seed < 2**64):
            raise InvalidSpec("master_seed must fit in 64 bits")
        if any(not e > 0 for e in self.epsilon_grid):
            raise InvalidSpec("epsilon_grid entries must be > 0")
        mode, d = _MODE_FOR_FORM[self.form]
        if self.target.mode is not mode:
            raise IncompatibleTarget(
                f"{self.form.value} needs target mode {mode.value!r}, got {self.target.mode.value!r}")
        if d is not None and self.target.dimension != d:
            raise WrongDimension(f"{self.form.value} is stated for d = {d}")

    def to_dict(self) -> dict:
        d = {"dist": self.dist, "schedule": self.schedule.to_dict(), "target": self.target.to_dict(),
             "form": self.form.value, "replicas": self.replicas, "master_seed": self.master_seed,
             "epsilon_grid": list(self.epsilon_grid)}
        if self.c_be is not None:
            d["c_be"] = self.c_be
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        return cls(dist=d["dist"], schedule=ScheduleSpec.from_dict(d["schedule"]),
                   target=TargetSpec.from_dict(d["target"]), form=d["form"],
                   replicas=int(d["replicas"]), master_seed=int(d["master_seed"]),
                   epsilon_grid=tuple(d.get("epsilon_grid", (0.25, 0.5, 1.0))), c_be=d.get("c_be"))

    def config_hash(self) -> str:
        return hashlib.sha256(canonical_json(self.to_dict()).encode()).hexdigest()


class Resolved:
    """Everything a replica needs, built once per process."""

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.dist: StepDistribution = dist_from_dict(config.dist)
        if self.dist.dimension != config.target.dimension:
            raise WrongDimension(
                f"target has dimension {config.target.dimension}, walk has {self.dist.dimension}")
        if config.form is Form.T1_LATTICE and not self.dist.is_lattice:
            raise IncompatibleTarget("T1Lattice needs a lattice step law")
        self.schedule: Schedule = build_schedule(config.schedule)
        self.terms = np.asarray(self.schedule.terms, dtype=np.int64)
        self.targets = [np.asarray(t, dtype=np.float64) for t in config.target.targets()]
        form = config.form
        if form is Form.C3_WEIGHTED:
            if self.schedule.n_last < 2:
                raise InvalidSpec("the weighted form needs n_last >= 2")
            self.normalizer = math.log(self.schedule.n_last)
        else:
            self.normalizer = self.schedule.normalizer()
        self.limits = [self._limit(a) for a in self.targets]
        self.W = whitening(self.dist.sigma) if config.target.mode is TargetMode.ALPHA_WINDOW else None

    def _limit(self, a) -> float:
        form, t = self.config.form, self.config.target
        if form is Form.T1_LATTICE:
            return limit_value(a, self.dist.sigma, form, self.dist.lattice.covolume)
        if form in (Form.T2A_WINDOW, Form.T2B_WINDOW):
            return limit_value(a, None, form)
        return box_limit_value(a, t.eps, self.dist.sigma)

    def replica(self, r: int) -> list:
        """[(hit score, delta)] per target; the score is an int except for the weighted form."""
        cfg = self.config
        if cfg.form is Form.C3_WEIGHTED:
            out = []
            for a, lim in zip(self.targets, self.limits):
                s, _ = run_weighted_box(self.dist, a, cfg.target.eps, self.schedule.n_last,
                                        RngStream(cfg.master_seed, r))
                out.append((s, s / self.normalizer / lim))
            return out
        walk = run_checkpoints(self.dist, self.schedule, RngStream(cfg.master_seed, r))
        out = []
        for a, lim in zip(self.targets, self.limits):
            mode = cfg.target.mode
            if mode is TargetMode.LATTICE_POINT:
                h = lattice_hits(walk.coords, a, self.terms, self.dist.lattice)
            elif mode is TargetMode.ALPHA_WINDOW:
                h = window_hits(self.W(walk.positions), a, self.terms, cfg.target.alpha)
            else:
                h = box_hits(walk.positions, a, cfg.target.eps, self.terms)
            k = int(np.count_nonzero(h))
            out.append((k, k / self.normalizer / lim))
        return out


# -- aggregate ----------------------------------------------------------------------------

def _frac_str(f: Fraction) -> str:
    return f"{f.numerator}/{f.denominator}"


def _hist_bin(delta: float) -> int:
    b = int(Fraction(delta) / HIST_WIDTH)
    return min(b, HIST_BINS)


@dataclass
class TargetAggregate:
    a: tuple
    limit: float
    hit_hist: dict = field(default_factory=dict)       # integer hit count -> replicas
    sum_score: Fraction = Fraction(0)
    sum_score2: Fraction = Fraction(0)
    sum_delta: Fraction = Fraction(0)
    sum_delta2: Fraction = Fraction(0)
    delta_hist: list = field(default_factory=lambda: [0] * (HIST_BINS + 1))
    exceed: list = field(default_factory=list)          # per eps in the grid

    def add(self, score, delta: float, eps_grid):
        if isinstance(score, int):
            self.hit_hist[score] = self.hit_hist.get(score, 0) + 1
        s = Fraction(score)
        self.sum_score += s
        self.sum_score2 += s * s
        dl = Fraction(delta)
        self.sum_delta += dl
        self.sum_delta2 += dl * dl
        self.delta_hist[_hist_bin(delta)] += 1
        dev = abs(delta - 1.0)
        for j, e in enumerate(eps_grid):
            if dev > e:
                self.exceed[j] += 1

    def merge(self, other: "TargetAggregate"):
        for k, v in other.hit_hist.items():
            self.hit_hist[k] = self.hit_hist.get(k, 0) + v
        self.sum_score += other.sum_score
        self.sum_score2 += other.sum_score2
        self.sum_delta += other.sum_delta
        self.sum_delta2 += other.sum_delta2
        self.delta_hist = [x + y for x, y in zip(self.delta_hist, other.delta_hist)]
        self.exceed = [x + y for x, y in zip(self.exceed, other.exceed)]

    def to_dict(self) -> dict:
        return {"a": list(self.a), "limit": self.limit,
                "hit_hist": {str(k): v for k, v in sorted(self.hit_hist.items())},
                "sum_score": _frac_str(self.sum_score), "sum_score2": _frac_str(self.sum_score2),
                "sum_delta": _frac_str(self.sum_delta), "sum_delta2": _frac_str(self.sum_delta2),
                "delta_hist": self.delta_hist, "exceed": self.exceed}

    @classmethod
    def from_dict(cls, d: dict) -> "TargetAggregate":
        return cls(a=tuple(d["a"]), limit=d["limit"],
                   hit_hist={int(k): v for k, v in d["hit_hist"].items()},
                   sum_score=Fraction(d["sum_score"]), sum_score2=Fraction(d["sum_score2"]),
                   sum_delta=Fraction(d["sum_delta"]), sum_delta2=Fraction(d["sum_delta2"]),
                   delta_hist=list(d["delta_hist"]), exceed=list(d["exceed"]))


@dataclass
class ReplicaAggregate:
    config: dict
    config_hash: str
    count: int
    normalizer: float
    normalizer_n_last: float
    epsilon_grid: tuple
    targets: list
    replicas: int = 0
    next_replica: int = 0
    meta: dict = field(default_factory=dict)

    @classmethod
    def empty(cls, res: Resolved) -> "ReplicaAggregate":
        cfg = res.config
        n_last = res.schedule.n_last
        norm_last = normalizer_value(res.schedule.normalizer_kind, n_last)
        meta = {"generator": GENERATOR, "master_seed": cfg.master_seed, "version": __version__,
                "hit_rtol": HIT_RTOL, "box_tol": BOX_TOL, "oracle_constants": CONSTANTS,
                "normalizer_kind": res.schedule.normalizer_kind.value, "n_last": n_last,
                "form": cfg.form.value}
        targets = [TargetAggregate(tuple(float(v) for v in a), lim, exceed=[0] * len(cfg.epsilon_grid))
                   for a, lim in zip(res.targets, res.limits)]
        return cls(cfg.to_dict(), cfg.config_hash(), res.schedule.count, res.normalizer,
                   norm_last, cfg.epsilon_grid, targets, meta=meta)

    @property
    def form(self) -> Form:
        return Form(self.config["form"])

    def add_replica(self, r: int, results):
        if r != self.next_replica:
            raise ValueError(f"replica {r} folded out of order (expected {self.next_replica})")
        for t, (score, delta) in zip(self.targets, results):
            t.add(score, delta, self.epsilon_grid)
        self.replicas += 1
        self.next_replica += 1

    def merge(self, other: "ReplicaAggregate") -> "ReplicaAggregate":
        """Field-wise sum of two aggregates of the same experiment (disjoint replicas)."""
        if other.config_hash != self.config_hash:
            raise ValueError("cannot merge aggregates of different experiments")
        out = ReplicaAggregate.from_dict(self.to_dict())
        for t, o in zip(out.targets, other.targets):
            t.merge(o)
        out.replicas += other.replicas
        out.next_replica = max(self.next_replica, other.next_replica)
        return out

    def target_index(self, a) -> int:
        a = tuple(float(v) for v in np.atleast_1d(a))
        for i, t in enumerate(self.targets):
            if t.a == a:
                return i
        raise KeyError(f"target {a} not in aggregate")

    def to_dict(self) -> dict:
        return {"schema": AGGREGATE_SCHEMA, "config": self.config, "config_hash": self.config_hash,
                "count": self.count, "normalizer": self.normalizer,
                "normalizer_n_last": self.normalizer_n_last, "epsilon_grid": list(self.epsilon_grid),
                "replicas": self.replicas, "next_replica": self.next_replica, "meta": self.meta,
                "targets": [t.to_dict() for t in self.targets]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "ReplicaAggregate":
        if d.get("schema") != AGGREGATE_SCHEMA:
            raise InvalidSpec(f"not a {AGGREGATE_SCHEMA} document (schema = {d.get('schema')!r})")
        return cls(d["config"], d["config_hash"], d["count"], d["normalizer"],
                   d["normalizer_n_last"], tuple(d["epsilon_grid"]),
                   [TargetAggregate.from_dict(t) for t in d["targets"]],
                   d["replicas"], d["next_replica"], d["meta"])

    @classmethod
    def from_json(cls, text: str) -> "ReplicaAggregate":
        return cls.from_dict(json.loads(text))

    def save(self, path):
        tmp = f"{path}.tmp"
        with open(tmp, "w") as fh:
            fh.write(self.to_json())
        os.replace(tmp, path)

    @classmethod
    def load(cls, path) -> "ReplicaAggregate":
        with open(path) as fh:
            return cls.from_json(fh.read())


# -- running -------------------------------------------------------------------------------

_WORKER: Resolved | None = None


def _init_worker(config_dict):
    global _WORKER
    _WORKER = Resolved(ExperimentConfig.from_dict(config_dict))


def _run_block(bounds):
    start, stop = bounds
    return [_WORKER.replica(r) for r in range(start, stop)]


def default_workers() -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        return max(1, int(env))
    return 1


def run_experiment(config: ExperimentConfig, workers: int | None = None, checkpoint=None,
                   stop_after: int | None = None, on_replica=None) -> ReplicaAggregate:
    """Run replicas 0..replicas-1 (resuming from ``checkpoint`` if it exists).

    ``stop_after`` ends the run early after that many new replicas, leaving a
    resumable checkpoint; ``on_replica(r, results)`` sees each replica in order.
    """
    workers = default_workers() if workers is None else max(1, int(workers))
    res = Resolved(config)
    agg = None
    if checkpoint is not None and os.path.exists(checkpoint):
        agg = ReplicaAggregate.load(checkpoint)
        if agg.config_hash != config.config_hash():
            raise InvalidSpec(f"checkpoint {checkpoint} belongs to a different config")
    if agg is None:
        agg = ReplicaAggregate.empty(res)
    end = config.replicas
    if stop_after is not None:
        end = min(end, agg.next_replica + stop_after)
    blocks = [(s, min(s + BLOCK, end)) for s in range(agg.next_replica, end, BLOCK)]

    def fold(bounds, results):
        for r, rr in zip(range(*bounds), results):
            agg.add_replica(r, rr)
            if on_replica is not None:
                on_replica(r, rr)
        if checkpoint is not None:
            agg.save(checkpoint)

    if workers == 1 or len(blocks) <= 1:
        for b in blocks:
            fold(b, [res.replica(r) for r in range(*b)])
    else:
        with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker,
                                 initargs=(config.to_dict(),)) as ex:
            for b, results in zip(blocks, ex.map(_run_block, blocks)):
                fold(b, results)
    return agg


# -- summaries -------------------------------------------------------------------------------

@dataclass(frozen=True)
class DeltaSummary:
    a: tuple
    replicas: int
    mean: float
    variance: float
    quantiles: dict
    exceedance: dict
    mean_score: float
    mean_delta_n_last: float


def delta_distribution(agg: ReplicaAggregate, a=None, quantiles=(0.05, 0.25, 0.5, 0.75, 0.95)) -> DeltaSummary:
    if agg.replicas < 2:
        raise InsufficientReplicas(f"need >= 2 replicas for a variance, have {agg.replicas}")
    t = agg.targets[0 if a is None else agg.target_index(a)]
    R = agg.replicas
    mean = t.sum_delta / R
    var = (t.sum_delta2 - t.sum_delta * t.sum_delta / R) / (R - 1)
    cum = np.cumsum(t.delta_hist)
    qs = {}
    for q in quantiles:
        target = q * R
        b = int(np.searchsorted(cum, target))
        if b >= HIST_BINS:
            qs[q] = float("inf")
            continue
        below = cum[b - 1] if b else 0
        frac = (target - below) / t.delta_hist[b] if t.delta_hist[b] else 0.0
        qs[q] = float((b + frac) * HIST_WIDTH)
    exc = {e: c / R for e, c in zip(agg.epsilon_grid, t.exceed)}
    scale = agg.normalizer / agg.normalizer_n_last
    return DeltaSummary(t.a, R, float(mean), float(var), qs, exc, float(t.sum_score / R),
                        float(mean) * scale)


def wilson_interval(k: int, N: int, z: float) -> tuple[float, float]:
    if N == 0:
        return 0.0, 1.0
    p = k / N
    den = 1 + z * z / N
    c = (p + z * z / (2 * N)) / den
    h = z * math.sqrt(p * (1 - p) / N + z * z / (4 * N * N)) / den
    return max(0.0, c - h), min(1.0, c + h)


def rate_function(form: Form | str, n: int, alpha: float | None = None, d: int | None = None) -> float:
    form = Form(form)
    if n < 3:
        raise InvalidSpec("rate functions need n >= 3")
    if form is Form.T1_LATTICE:
        return 1.0 / math.log(math.log(n))
    if form in (Form.T2A_WINDOW, Form.T3_BOX) and alpha is None:
        raise InvalidSpec(f"{form.value} rate needs alpha (set [rates] alpha or pass --alpha)")
    if form is Form.T2A_WINDOW:
        return math.log(n) ** (-4 * alpha / (10 * alpha + 1))
    if form is Form.T2B_WINDOW:
        return math.log(math.log(n)) ** -0.2
    if form is Form.T3_BOX:
        # growth exponent of n_{i+1}/n_i >= 1 + A i^-alpha
        top = 1.0 if d <= 2 else 1.0 / (d / 2 - 1)
        if not 0 < alpha < top:
            raise InvalidSpec(f"T3Box growth exponent alpha must lie in (0, {top:g}) for d = {d}, got {alpha}")
        return n ** (alpha * (d / 2 - 1) - 1) * math.log(n)
    raise InvalidSpec(f"no rate function for {form.value}")


@dataclass(frozen=True)
class RateRow:
    form: str
    n: int
    a: tuple
    epsilon: float
    freq: float
    wilson_lo: float
    wilson_hi: float
    bound: float
    rate: float
    replicas: int
    passed: bool


@dataclass(frozen=True)
class RateCheckReport:
    form: str
    C: float
    z: float
    rows: tuple
    grid: dict

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)


def chebyshev_rate_check(aggs, form: Form | str | None = None, alpha: float | None = None,
                         d: int | None = None, false_fail: float = 1e-3) -> RateCheckReport:
    """Fit C at the smallest count, then test freq <= C eps^-2 r(n) at larger counts.

    A row passes unless its whole Wilson interval lies above the bound; z is
    Bonferroni-corrected over all tested rows for a one-sided ``false_fail``.
    """
    aggs = sorted(aggs, key=lambda g: g.count)
    if len({g.count for g in aggs}) < 2 or len(aggs) != len({g.count for g in aggs}):
        raise InsufficientData("need aggregates at two or more distinct counts")
    form = Form(form) if form is not None else aggs[0].form
    eps_grid = tuple(aggs[0].epsilon_grid)
    a_grid = [t.a for t in aggs[0].targets]
    for g in aggs[1:]:
        if tuple(g.epsilon_grid) != eps_grid or [t.a for t in g.targets] != a_grid:
            raise InconsistentGrid("aggregates do not share the eps grid and target grid")
    if alpha is None:
        alpha = aggs[0].config.get("target", {}).get("alpha")
    if d is None:
        d = len(a_grid[0])
    m = (len(aggs) - 1) * len(eps_grid) * len(a_grid)
    z = float(ndtri(1 - false_fail / m))
    g0 = aggs[0]
    r0 = rate_function(form, g0.count, alpha, d)
    C = max(t.exceed[j] / g0.replicas * e * e / r0
            for t in g0.targets for j, e in enumerate(eps_grid))
    rows = []
    for g in aggs:
        r = rate_function(form, g.count, alpha, d)
        for t in g.targets:
            for j, e in enumerate(eps_grid):
                k = t.exceed[j]
                lo, hi = wilson_interval(k, g.replicas, z)
                bound = C * r / (e * e)
                ok = True if g is g0 else lo <= bound
                rows.append(RateRow(form.value, g.count, t.a, e, k / g.replicas, lo, hi, bound, r,
                                    g.replicas, ok))
    grid = {"a": [list(a) for a in a_grid], "epsilon": list(eps_grid), "counts": [g.count for g in aggs]}
    return RateCheckReport(form.value, C, z, tuple(rows), grid)


# -- path minima ---------------------------------------------------------------------------------

def run_liminf(dist: StepDistribution, a, gamma: float, n_max: int, replicas: int, master_seed: int,
               milestones=()):
    """Min trackers for replicas 0..replicas-1 (stream (master_seed, r))."""
    return [run_min_tracker(dist, a, gamma, n_max, RngStream(master_seed, r), milestones)
            for r in range(replicas)]
