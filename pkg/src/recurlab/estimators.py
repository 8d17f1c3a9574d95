"""Normalized hit statistics and their gaussian limits.

``Delta = (hit_count / normalizer) / limit``: the ratio of the empirical
normalized hit average to its theoretical limit.  Delta is 0 (not NaN) when
nothing is hit.
"""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import integrate
from scipy.special import ndtr

from recurlab.errors import LengthMismatch, NotPositiveDefinite, WrongDimension
from recurlab.schedule import Schedule

BOX_TOL = 1e-10


class Form(str, enum.Enum):
    T1_LATTICE = "T1Lattice"
    T2A_WINDOW = "T2aWindow"
    T2B_WINDOW = "T2bWindow"
    T3_BOX = "T3Box"
    C3_WEIGHTED = "C3Weighted"


@dataclass(frozen=True)
class EstimatorResult:
    hit_count: float          # integer, except the weighted sum for C3Weighted
    count: int
    normalizer: float
    empirical: float
    limit: float
    delta: float
    theorem_form: Form | None = None
    meta: dict = field(default_factory=dict)

    def to_row(self) -> dict:
        row = asdict(self)
        row["theorem_form"] = self.theorem_form.value if self.theorem_form else ""
        row.update(row.pop("meta"))
        return row


def _spd(sigma) -> np.ndarray:
    s = np.atleast_2d(np.asarray(sigma, dtype=np.float64))
    if s.shape[0] != s.shape[1] or not np.allclose(s, s.T, atol=1e-12):
        raise NotPositiveDefinite("covariance must be a symmetric square matrix")
    try:
        np.linalg.cholesky(s)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite("covariance is not positive definite") from exc
    return s


def limit_value(a, sigma=None, form: Form | str = Form.T1_LATTICE, covolume: float = 1.0) -> float:
    """Right-hand side of the almost-sure limit for the lattice and window forms.

    ``covolume`` is |det H| of the lattice basis; the lattice-point limit is the
    gaussian density at ``a`` times the cell volume (1 for Z^d).
    """
    form = Form(form)
    a = np.atleast_1d(np.asarray(a, dtype=np.float64))
    if form is Form.T1_LATTICE:
        if a.size != 2:
            raise WrongDimension(f"T1Lattice is a planar statement; got d = {a.size}")
        s = _spd(sigma)
        if s.shape != (2, 2):
            raise WrongDimension("sigma must be 2 x 2 for T1Lattice")
        q = float(a @ np.linalg.solve(s, a))
        return covolume * math.exp(-0.5 * q) / (2.0 * math.pi * math.sqrt(np.linalg.det(s)))
    r2 = float(a @ a)
    if form is Form.T2A_WINDOW:
        if a.size != 1:
            raise WrongDimension(f"T2aWindow is one-dimensional; got d = {a.size}")
        return math.sqrt(2.0 / math.pi) * math.exp(-0.5 * r2)
    if form is Form.T2B_WINDOW:
        if a.size != 2:
            raise WrongDimension(f"T2bWindow is two-dimensional; got d = {a.size}")
        return 2.0 / math.pi * math.exp(-0.5 * r2)
    raise ValueError(f"limit_value does not cover {form.value}; use box_limit_value")


def _box_general(lo, hi, L) -> float:
    """P(L Z in [lo, hi]) for Z standard normal; nested quad, ndtr in the last coordinate."""
    d = len(lo)

    def inner(k, z):
        # bounds on z_k given z_0..z_{k-1}: lo_k <= L[k,:k] z + L[k,k] z_k <= hi_k
        shift = float(L[k, :k] @ z) if k else 0.0
        zl = (lo[k] - shift) / L[k, k]
        zh = (hi[k] - shift) / L[k, k]
        if k == d - 1:
            return float(ndtr(zh) - ndtr(zl))
        f = lambda t: math.exp(-0.5 * t * t) / math.sqrt(2 * math.pi) * inner(k + 1, np.append(z, t))
        v, _ = integrate.quad(f, zl, zh, epsabs=BOX_TOL / (4 * d), epsrel=0.0, limit=200)
        return v

    return inner(0, np.empty(0))


def box_limit_value(a, eps: float, sigma) -> float:
    """Gaussian N(0, sigma) measure of the closed box a + [-eps, eps]^d (abs. error <= 1e-10)."""
    s = _spd(sigma)
    a = np.atleast_1d(np.asarray(a, dtype=np.float64))
    if a.size != s.shape[0]:
        raise WrongDimension("target and covariance dimensions differ")
    if not eps > 0:
        raise ValueError("eps must be > 0")
    lo, hi = a - eps, a + eps
    if np.count_nonzero(s - np.diag(np.diag(s))) == 0:
        sd = np.sqrt(np.diag(s))
        return float(np.prod(ndtr(hi / sd) - ndtr(lo / sd)))
    return min(1.0, max(0.0, _box_general(lo, hi, np.linalg.cholesky(s))))


def gaussian_density(a, sigma) -> float:
    s = _spd(sigma)
    a = np.atleast_1d(np.asarray(a, dtype=np.float64))
    d = a.size
    q = float(a @ np.linalg.solve(s, a))
    return math.exp(-0.5 * q) / math.sqrt((2 * math.pi) ** d * np.linalg.det(s))


def delta_statistic(hits, schedule: Schedule, limit: float, form: Form | str | None = None,
                    **meta) -> EstimatorResult:
    """Delta from one replica's per-checkpoint hit indicators."""
    hits = np.asarray(hits, dtype=bool)
    if hits.shape != (schedule.count,):
        raise LengthMismatch(f"{hits.size} hit flags for a schedule of {schedule.count} terms")
    if not limit > 0:
        raise ValueError("limit must be > 0")
    h = int(np.count_nonzero(hits))
    norm = schedule.normalizer()
    emp = h / norm
    return EstimatorResult(h, schedule.count, norm, emp, float(limit), emp / limit,
                           Form(form) if form else None, dict(meta))


def weighted_delta(weighted_sum: float, n: int, limit: float, **meta) -> EstimatorResult:
    """Harmonic-weighted form from a precomputed sum of 1{hit_k}/k over k <= n."""
    if n < 2:
        raise ValueError("need n >= 2 for the log normalizer")
    if not limit > 0:
        raise ValueError("limit must be > 0")
    norm = math.log(n)
    emp = weighted_sum / norm
    return EstimatorResult(float(weighted_sum), int(n), norm, emp, float(limit), emp / limit,
                           Form.C3_WEIGHTED, dict(meta))


def corollary3_weighted(hits, limit: float, **meta) -> EstimatorResult:
    """hits[k-1] is the indicator at step k = 1..n."""
    hits = np.asarray(hits, dtype=bool)
    k = np.flatnonzero(hits) + 1
    s = math.fsum(1.0 / k) if k.size else 0.0
    return weighted_delta(s, hits.size, limit, **meta)


@dataclass(frozen=True)
class LiminfReport:
    running_min: float
    argmin_n: int
    n_max: int
    gamma: float
    bound: float | None
    status: str          # "pass", "fail" or "info"

    def to_dict(self) -> dict:
        return asdict(self)


def liminf_report(tracker, bound: float | None = None) -> LiminfReport:
    """pass/fail against a finite bound when one applies, otherwise an info record."""
    if bound is None:
        status = "info"
    else:
        status = "pass" if tracker.running_min <= bound else "fail"
    return LiminfReport(float(tracker.running_min), int(tracker.argmin_n), int(tracker.n_max),
                        float(tracker.gamma), bound, status)
