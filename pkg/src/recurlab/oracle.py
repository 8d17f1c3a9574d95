"""Exact and asymptotic probabilities used as ground truth and as predictions.

Binomial point masses are exact rationals for n <= 64.  Above that they are
evaluated in log space with Loader's saddle-point decomposition (Stirling
remainders plus the deviance ``bd0``), which keeps the relative error near
machine precision for n up to 1e7 and beyond; the log terms are combined with
``math.fsum``.

Rate constants ``K`` of the asymptotic estimates were calibrated once against
the exact oracles and are frozen in :data:`CONSTANTS`.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import integrate

from recurlab.errors import (DomainViolation, IncompatibleTarget, OutOfRange, ParityViolation, WrongDimension)
from recurlab.estimators import _spd, box_limit_value, limit_value
from recurlab.hits import TargetMode, TargetSpec, box_hits, window_hits
from recurlab.schedule import Schedule
from recurlab.stepdist import Family, StepDistribution, third_moment_whitened_bound, whitening

EXACT_CUTOVER = 64

# Berry-Esseen constants.  d = 1: a box is a difference of two CDF values, so
# twice the i.i.d. constant 0.4748 (Shevtsova 2011).  d >= 2: the convex-set
# constant 42 d^(1/4) + 16 (Raic 2019), applied to E|W X|^3.
BE_CONSTANT_1D = 2 * 0.4748


def be_constant(d: int) -> float:
    return BE_CONSTANT_1D if d == 1 else 42.0 * d ** 0.25 + 16.0


CONSTANTS = {
    # max over a in {0, 0.5, 1}, n in {1e2, 1e3, 1e4, 1e5} of
    # |exact/asym - 1| / (|a|^3/sqrt(n) + 1/n), rounded up
    "K_simple1d": 5.5,
    # same calibration for the planar walk, n in {1e3, 1e4, 1e5},
    # a in {(0, 0), (0.5, 0), (0.5, 0.5), (1, 0), (0.6, 0.8)}
    "K_simple2d": 11.2,
    # general lattices: modeled relative error K / sqrt(n); no calibration data exists
    "K_lattice": 1.0,
    "C_BE_1d": BE_CONSTANT_1D,
    "C_BE_d": "42 d^(1/4) + 16",
    "box_quadrature_tol": 1e-10,
}


class Kind(str, enum.Enum):
    EXACT = "Exact"
    ASYMPTOTIC = "AsymptoticWithRate"
    BERRY_ESSEEN = "BerryEsseenInterval"


@dataclass(frozen=True)
class ProbEstimate:
    value: float
    half_width: float
    kind: Kind
    exact: Fraction | None = None
    inputs: dict = field(default_factory=dict)

    @property
    def lo(self) -> float:
        return self.value - self.half_width

    @property
    def hi(self) -> float:
        return self.value + self.half_width

    def to_dict(self) -> dict:
        d = {"value": self.value, "half_width": self.half_width, "kind": self.kind.value,
             "inputs": self.inputs}
        if self.exact is not None:
            d["exact"] = f"{self.exact.numerator}/{self.exact.denominator}"
        return d


# -- log-space binomial -------------------------------------------------------------

_LN_SQRT_2PI = 0.5 * math.log(2 * math.pi)


def _stirlerr_exact(k: int) -> float:
    # log(k!) - (k + 1/2) log k + k - log sqrt(2 pi), from an exact factorial
    if k == 0:
        return 0.0
    lf = math.log(math.factorial(k)) if k < 170 else math.lgamma(k + 1)
    return math.fsum([lf, -(k + 0.5) * math.log(k), k, -_LN_SQRT_2PI])


_STIRLERR_TABLE = np.array([_stirlerr_exact(k) for k in range(16)])


def _stirlerr(n):
    """Stirling remainder log(n!) - log(sqrt(2 pi n) (n/e)^n) for integer n >= 0."""
    n = np.asarray(n, dtype=np.float64)
    out = np.empty_like(n)
    small = n <= 15
    out[small] = _STIRLERR_TABLE[n[small].astype(np.int64)]
    m = n[~small]
    m2 = m * m
    s0, s1, s2, s3, s4 = 1 / 12, 1 / 360, 1 / 1260, 1 / 1680, 1 / 1188
    out[~small] = np.where(
        m > 500, (s0 - s1 / m2) / m,
        np.where(m > 80, (s0 - (s1 - s2 / m2) / m2) / m,
                 np.where(m > 35, (s0 - (s1 - (s2 - s3 / m2) / m2) / m2) / m,
                          (s0 - (s1 - (s2 - (s3 - s4 / m2) / m2) / m2) / m2) / m)))
    return out


def _bd0(x, m):
    """x log(x/m) + m - x, without cancellation when x is close to m."""
    x = np.asarray(x, dtype=np.float64)
    m = np.broadcast_to(np.asarray(m, dtype=np.float64), x.shape)
    out = np.empty_like(x)
    close = np.abs(x - m) < 0.1 * (x + m)
    xc, mc = x[close], m[close]
    v = (xc - mc) / (xc + mc)
    s = (xc - mc) * v
    ej = 2 * xc * v
    v2 = v * v
    acc = s.copy()
    for j in range(1, 200):
        ej = ej * v2
        s1 = acc + ej / (2 * j + 1)
        if np.all(s1 == acc):
            break
        acc = s1
    out[close] = acc
    xf, mf = x[~close], m[~close]
    with np.errstate(divide="ignore", invalid="ignore"):
        out[~close] = np.where(xf > 0, xf * np.log(xf / mf), 0.0) + mf - xf
    return out


def binom_half_pmf(n: int, k) -> np.ndarray:
    """C(n, k) 2^{-n} as floats for an array of k (0 outside [0, n])."""
    k = np.asarray(k, dtype=np.int64)
    out = np.zeros(k.shape, dtype=np.float64)
    inside = (k >= 0) & (k <= n)
    if n == 0:
        out[inside] = 1.0
        return out
    if n <= EXACT_CUTOVER:
        out[inside] = [math.comb(n, int(j)) / 2.0**n for j in k[inside]]
        return out
    kk = k[inside]
    edge = (kk == 0) | (kk == n)
    mid = kk[~edge]
    half = n / 2.0
    lg = (_stirlerr(np.full(mid.shape, n)) - _stirlerr(mid) - _stirlerr(n - mid)
          - _bd0(mid, half) - _bd0(n - mid, half))
    lg = lg + 0.5 * np.log(n / (2 * math.pi * mid * (n - mid)))
    vals = np.empty(kk.shape)
    vals[~edge] = np.exp(lg)
    vals[edge] = math.exp(-n * math.log(2))
    out[inside] = vals
    return out


def _log_binom_half(n: int, k: int) -> float:
    """log(C(n, k) 2^{-n}) for 0 < k < n, n > 64, summed with fsum."""
    half = n / 2.0
    st = _stirlerr(np.array([n, k, n - k], dtype=np.float64))
    bd = _bd0(np.array([k, n - k], dtype=np.float64), half)
    return math.fsum([st[0], -st[1], -st[2], -bd[0], -bd[1],
                      0.5 * math.log(n / (2 * math.pi * k * (n - k)))])


def exact_binomial_prob(n: int, k: int) -> ProbEstimate:
    """P(Bin(n, 1/2) = k) = C(n, k) 2^{-n}."""
    if int(n) != n or int(k) != k or n < 0 or not (0 <= k <= n):
        raise OutOfRange(f"need integers 0 <= k <= n, got n={n}, k={k}")
    n, k = int(n), int(k)
    inputs = {"n": n, "k": k}
    if n <= EXACT_CUTOVER:
        fr = Fraction(math.comb(n, k), 2**n)
        return ProbEstimate(float(fr), 0.0, Kind.EXACT, fr, inputs)
    if k in (0, n):
        return ProbEstimate(math.exp(-n * math.log(2)), 0.0, Kind.EXACT, None, inputs)
    return ProbEstimate(math.exp(_log_binom_half(n, k)), 0.0, Kind.EXACT, None, inputs)


def _rep1d(n: int, a: float) -> int:
    return int(2 * math.floor(a * math.sqrt(n) / 2))


def _simple1d_mass(n: int, x: int) -> ProbEstimate:
    # P(T_n = x) for the +-1 walk; x must have the parity of n
    if abs(x) > n:
        z = Fraction(0) if n <= EXACT_CUTOVER else None
        return ProbEstimate(0.0, 0.0, Kind.EXACT, z, {"n": n, "x": x})
    return exact_binomial_prob(n, (n + x) // 2)


def exact_simple1d_point(n: int, a: float) -> ProbEstimate:
    """P(T_n = 2 floor(a sqrt(n) / 2)) for the one-dimensional simple walk."""
    if n % 2 or n < 2:
        raise ParityViolation(f"n must be even and >= 2, got {n}")
    x = _rep1d(n, a)
    p = _simple1d_mass(n, x)
    return ProbEstimate(p.value, 0.0, Kind.EXACT, p.exact, {"n": n, "a": a, "x": x})


def exact_simple2d_point(n: int, a) -> ProbEstimate:
    """Planar simple walk at its lattice representative, via the 45-degree rotation.

    (X + Y, Y - X) for the planar walk is a pair of independent +-1 walks, so
    P(S_n = x) = P(T_n = x_1 + x_2) P(T_n = x_2 - x_1).
    """
    if n % 2 or n < 2:
        raise ParityViolation(f"n must be even and >= 2, got {n}")
    a = np.atleast_1d(np.asarray(a, dtype=np.float64))
    if a.size != 2:
        raise WrongDimension("planar point probability needs a 2-vector")
    x1, x2 = _rep1d(n, a[0]), _rep1d(n, a[1])
    p = _simple1d_mass(n, x1 + x2)
    q = _simple1d_mass(n, x2 - x1)
    fr = p.exact * q.exact if p.exact is not None and q.exact is not None else None
    value = float(fr) if fr is not None else p.value * q.value
    return ProbEstimate(value, 0.0, Kind.EXACT, fr, {"n": n, "a": a.tolist(), "x": [x1, x2]})


# -- asymptotic point masses -----------------------------------------------------------

def lclt_simple1d_asym(n: int, a: float, K: float | None = None) -> ProbEstimate:
    """sqrt(2/pi) n^{-1/2} e^{-a^2/2}, valid for even n > 64 max(1, a)^6."""
    if n % 2:
        raise ParityViolation(f"n must be even, got {n}")
    if not n > 64 * max(1.0, a) ** 6:
        raise DomainViolation(f"need even n > 64 max(1, a)^6 = {64 * max(1.0, a) ** 6:g}, got n = {n}")
    K = CONSTANTS["K_simple1d"] if K is None else K
    v = math.sqrt(2 / math.pi) / math.sqrt(n) * math.exp(-0.5 * a * a)
    rate = abs(a) ** 3 / math.sqrt(n) + 1.0 / n
    return ProbEstimate(v, v * K * rate, Kind.ASYMPTOTIC, None, {"n": n, "a": a, "K": K})


def lclt_simple2d_asym(n: int, a, K: float | None = None, strict: bool = True) -> ProbEstimate:
    """(2/pi) n^{-1} e^{-|a|^2}, valid for even n > 512 max(1, |a|)^6.

    ``strict=False`` evaluates the leading term outside its domain of validity.
    """
    a = np.atleast_1d(np.asarray(a, dtype=np.float64))
    if a.size != 2:
        raise WrongDimension("planar estimate needs a 2-vector")
    if n % 2:
        raise ParityViolation(f"n must be even, got {n}")
    r = float(np.linalg.norm(a))
    bound = 512 * max(1.0, r) ** 6
    if strict and not n > bound:
        raise DomainViolation(f"need even n > 512 max(1, |a|)^6 = {bound:g}, got n = {n}")
    K = CONSTANTS["K_simple2d"] if K is None else K
    v = 2 / math.pi / n * math.exp(-r * r)
    rate = r**3 / math.sqrt(n) + 1.0 / n
    return ProbEstimate(v, v * K * rate, Kind.ASYMPTOTIC, None, {"n": n, "a": a.tolist(), "K": K})


def lclt_lattice_asym(n: int, a, sigma, covolume: float = 1.0, K: float | None = None) -> ProbEstimate:
    """Leading local-CLT term covolume * n^{-d/2} * N(0, sigma) density at a."""
    s = _spd(sigma)
    a = np.atleast_1d(np.asarray(a, dtype=np.float64))
    d = s.shape[0]
    if a.size != d:
        raise WrongDimension("target and covariance dimensions differ")
    K = CONSTANTS["K_lattice"] if K is None else K
    if d == 2:
        v = limit_value(a, s, "T1Lattice", covolume) / n
    else:
        q = float(a @ np.linalg.solve(s, a))
        v = covolume * math.exp(-0.5 * q) / math.sqrt((2 * math.pi * n) ** d * np.linalg.det(s))
    return ProbEstimate(v, v * K / math.sqrt(n), Kind.ASYMPTOTIC, None,
                        {"n": n, "a": a.tolist(), "covolume": covolume, "K": K})


# -- boxes -----------------------------------------------------------------------------

def be_box_prob(n: int, a, eps: float, sigma, rho: float, c_be: float | None = None) -> ProbEstimate:
    """Gaussian box measure with a Berry-Esseen half width C rho_w / sqrt(n).

    ``rho`` is E|X|^3; it is converted to the whitened scale with
    lambda_min(sigma)^{-3/2} (exact in d = 1).
    """
    s = _spd(sigma)
    d = s.shape[0]
    c = be_constant(d) if c_be is None else c_be
    rho_w = rho * float(np.linalg.eigvalsh(s)[0]) ** -1.5
    v = box_limit_value(a, eps, s)
    return ProbEstimate(v, c * rho_w / math.sqrt(n), Kind.BERRY_ESSEEN, None,
                        {"n": n, "a": np.atleast_1d(a).tolist(), "eps": eps, "C_BE": c, "rho": rho})


def phi_n(a, n: int, alpha: float, d: int | None = None) -> float:
    """Box average of e^{-|x|^2/2} over a + [-w, w]^d with w = n^{alpha - 1/2}."""
    a = np.atleast_1d(np.asarray(a, dtype=np.float64))
    if d is not None and a.size != d:
        raise WrongDimension("a must have d coordinates")
    if not (0 < alpha < 0.5) or n < 1:
        raise ValueError("need 0 < alpha < 1/2 and n >= 1")
    return phi_width(a, n ** (alpha - 0.5))


def phi_width(a, w: float) -> float:
    a = np.atleast_1d(np.asarray(a, dtype=np.float64))
    out = 1.0
    for ak in a:
        # integrate the shifted kernel over [-w, w] so the quadrature is centred
        v, _ = integrate.quad(lambda s: math.exp(-0.5 * (ak + s) ** 2), -w, w,
                              epsabs=1e-14, epsrel=1e-13)
        out *= v / (2 * w)
    return out


# -- simple-walk events and returns ----------------------------------------------------

def simple2d_no_return(n: int) -> float:
    """P(planar simple walk has not revisited 0 by step n), by the renewal identity.

    With U(s) = sum_m u_m s^m, u_m = (C(2m, m) 4^{-m})^2, the generating
    function of P(no return by step 2m) is 1 / ((1 - s) U(s)).  The reciprocal
    series is computed by Newton iteration with FFT products.
    """
    M = n // 2
    m = np.arange(1, M + 1, dtype=np.float64)
    u = np.concatenate(([1.0], np.cumprod(((2 * m - 1) / (2 * m)) ** 2)))
    g = np.array([1.0])
    while len(g) < M + 1:
        L = min(2 * len(g), M + 1)
        prod = _conv(u[:L], g, L)
        corr = -prod
        corr[0] += 2.0
        g = _conv(g, corr, L)
    # sum_{m<=M} of the coefficients of 1/U equals P(T > 2M)
    return float(math.fsum(g[: M + 1]))


def _conv(x, y, L):
    size = 1 << (len(x) + len(y) - 1).bit_length()
    return np.fft.irfft(np.fft.rfft(x, size) * np.fft.rfft(y, size), size)[:L]


def simple_event_prob(n: int, d: int, lo, hi, predicate) -> ProbEstimate:
    """Exact P(predicate(S_n)) for the simple walk in d = 1, 2.

    Candidates are all reachable points of the box [lo - 2, hi + 2]; the
    predicate (one of the vectorised hit functions) then decides, so the oracle
    and the simulation share one boundary rule.
    """
    lo = np.atleast_1d(lo) - 2
    hi = np.atleast_1d(hi) + 2
    axes = [np.arange(max(-n, math.ceil(l)), min(n, math.floor(h)) + 1) for l, h in zip(lo, hi)]
    if any(ax.size == 0 for ax in axes):
        return ProbEstimate(0.0, 0.0, Kind.EXACT, Fraction(0) if n <= EXACT_CUTOVER else None, {"n": n})
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    grid = grid[(grid.sum(axis=1) + n) % 2 == 0]
    grid = grid[predicate(grid.astype(np.float64))]
    if d == 1:
        ks = (n + grid[:, 0]) // 2
        if n <= EXACT_CUTOVER:
            fr = Fraction(sum(math.comb(n, int(k)) for k in ks), 2**n)
            return ProbEstimate(float(fr), 0.0, Kind.EXACT, fr, {"n": n})
        return ProbEstimate(math.fsum(binom_half_pmf(n, ks)), 0.0, Kind.EXACT, None, {"n": n})
    if d == 2:
        u = grid[:, 0] + grid[:, 1]
        v = grid[:, 1] - grid[:, 0]
        ok = (np.abs(u) <= n) & (np.abs(v) <= n)
        pu = binom_half_pmf(n, np.where(ok, (n + u) // 2, -1))
        pv = binom_half_pmf(n, np.where(ok, (n + v) // 2, -1))
        return ProbEstimate(math.fsum(pu * pv), 0.0, Kind.EXACT, None, {"n": n})
    raise WrongDimension("exact event probabilities are implemented for d = 1, 2")


# -- expected hit counts ---------------------------------------------------------------

@dataclass(frozen=True)
class ExpectedHits:
    terms: tuple[ProbEstimate, ...]
    total: float
    half_width: float
    kind: Kind

    @property
    def values(self) -> np.ndarray:
        return np.array([t.value for t in self.terms])


_KIND_ORDER = [Kind.EXACT, Kind.BERRY_ESSEEN, Kind.ASYMPTOTIC]


def expected_hits(schedule: Schedule, target: TargetSpec, dist: StepDistribution,
                  c_be: float | None = None) -> ExpectedHits:
    """Per-checkpoint P(hit) with the sharpest available oracle, and their sum.

    Simple walks in d = 1, 2 get exact masses; other lattice laws get the
    local-CLT leading term for point targets; everything else gets the gaussian
    box measure with a Berry-Esseen interval.  Window targets live in whitened
    coordinates.
    """
    d = dist.dimension
    a = np.asarray(target.a, dtype=np.float64)
    if a.size != d:
        raise WrongDimension(f"target has dimension {a.size}, walk has {d}")
    simple = dist.family is Family.SIMPLE and d <= 2
    terms = []
    if target.mode is TargetMode.LATTICE_POINT:
        if not dist.is_lattice:
            raise IncompatibleTarget("lattice-point targets need a lattice step law")
        for n in schedule.terms:
            if simple:
                if n % 2:
                    terms.append(ProbEstimate(0.0, 0.0, Kind.EXACT, None, {"n": n}))
                else:
                    terms.append(exact_simple1d_point(n, a[0]) if d == 1 else exact_simple2d_point(n, a))
            else:
                terms.append(lclt_lattice_asym(n, a, dist.sigma, dist.lattice.covolume))
    elif target.mode is TargetMode.SCALED_BOX:
        for n in schedule.terms:
            if simple:
                pred = lambda x, n=n: box_hits(x, a, target.eps, np.full(len(x), n))
                rn = math.sqrt(n)
                terms.append(simple_event_prob(n, d, (a - target.eps) * rn, (a + target.eps) * rn, pred))
            else:
                terms.append(be_box_prob(n, a, target.eps, dist.sigma, dist.rho, c_be))
    else:
        W = whitening(dist.sigma)
        c = be_constant(d) if c_be is None else c_be
        rho_w = third_moment_whitened_bound(dist)
        diag = np.allclose(W.matrix, np.diag(np.diag(W.matrix)))
        for n in schedule.terms:
            w = n ** (target.alpha - 0.5)
            if simple and diag:
                rn = math.sqrt(n)
                scale = np.diag(W.matrix)
                pred = lambda x, n=n: window_hits(W(x), a, np.full(len(x), n), target.alpha)
                terms.append(simple_event_prob(n, d, (a - w) * rn / scale, (a + w) * rn / scale, pred))
            else:
                v = box_limit_value(a, w, np.eye(d))
                terms.append(ProbEstimate(v, c * rho_w / math.sqrt(n), Kind.BERRY_ESSEEN, None,
                                          {"n": n, "eps": w, "C_BE": c}))
    total = math.fsum(t.value for t in terms)
    half = math.fsum(t.half_width for t in terms)
    kind = max((t.kind for t in terms), key=_KIND_ORDER.index)
    return ExpectedHits(tuple(terms), total, half, kind)
