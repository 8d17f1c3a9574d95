import itertools
import math
from fractions import Fraction

import mpmath
import numpy as np
import pytest

from recurlab import oracle
from recurlab.errors import (DomainViolation, IncompatibleTarget, OutOfRange, ParityViolation)
from recurlab.hits import TargetSpec
from recurlab.oracle import (Kind, be_box_prob, exact_binomial_prob, exact_simple1d_point,
                             exact_simple2d_point, expected_hits, lclt_lattice_asym, lclt_simple1d_asym,
                             lclt_simple2d_asym, phi_n, phi_width, simple2d_no_return)
from recurlab.schedule import ScheduleSpec, build_schedule
from recurlab.stepdist import gaussian, simple_walk

# mpmath references (30 digits)
CENTRAL_100 = 0.079589237387178761        # C(100, 50) / 2^100
PLANAR_ORIGIN_100 = 0.0063344467078726936  # P(S_100 = 0), planar simple walk
ERF_BOX_1 = 0.68268949213708590
PHI_W01 = 0.99833583036003401             # box average of e^{-x^2/2} over [-0.1, 0.1]
# sum over i = 2..100 of P(|T_{i^3}| <= i^{1/2}), computed below with exact integer tests
WINDOW_TOTAL_CUBIC = 3.3870796875942747


def test_binomial_examples():
    p = exact_binomial_prob(4, 2)
    assert p.exact == Fraction(3, 8) and p.value == 0.375 and p.kind is Kind.EXACT
    assert exact_binomial_prob(100, 50).value == pytest.approx(CENTRAL_100, rel=1e-13)
    with pytest.raises(OutOfRange):
        exact_binomial_prob(4, 5)
    with pytest.raises(OutOfRange):
        exact_binomial_prob(4, -1)


def test_binomial_against_exact_integers():
    rng = np.random.default_rng(0)
    for n in list(range(65, 400)) + [1000, 4097, 10**4]:
        for k in {0, 1, n // 2, n, *rng.integers(0, n + 1, 5).tolist()}:
            exact = Fraction(math.comb(n, k), 2**n)
            got = exact_binomial_prob(n, k).value
            if float(exact) == 0.0:
                assert got == 0.0
            else:
                assert abs(got / float(exact) - 1) < 1e-12, (n, k)


def test_binomial_large_n_against_mpmath():
    mpmath.mp.dps = 30
    n = 10**7
    for k in (n // 2, n // 2 + 1000, n // 2 + 7000, n // 2 - 12345):
        ref = mpmath.binomial(n, k) / mpmath.mpf(2) ** n
        assert abs(exact_binomial_prob(n, k).value / float(ref) - 1) < 1e-12


def test_cutover_is_seamless():
    for n in (63, 64, 65, 66):
        for k in range(n + 1):
            lg = oracle._log_binom_half(n, k) if 0 < k < n else -n * math.log(2)
            assert math.exp(lg) == pytest.approx(math.comb(n, k) / 2**n, rel=1e-13)


def test_simple1d_point():
    assert exact_simple1d_point(100, 0.0).value == pytest.approx(CENTRAL_100, rel=1e-13)
    with pytest.raises(ParityViolation):
        exact_simple1d_point(101, 0.0)


def test_simple2d_point():
    assert exact_simple2d_point(100, [0, 0]).value == pytest.approx(PLANAR_ORIGIN_100, rel=1e-13)
    with pytest.raises(ParityViolation):
        exact_simple2d_point(99, [0, 0])


@pytest.mark.parametrize("n", [2, 4, 6, 8])
def test_simple2d_against_enumeration(n):
    steps = [(1, 0), (-1, 0), (0, 1), (0, -1)]
    counts = {}
    for path in itertools.product(steps, repeat=n):
        x = (sum(s[0] for s in path), sum(s[1] for s in path))
        counts[x] = counts.get(x, 0) + 1
    for a in ([0, 0], [0.5, 0], [1, 1], [-0.6, 0.9]):
        p = exact_simple2d_point(n, a)
        assert p.exact == Fraction(counts.get(tuple(p.inputs["x"]), 0), 4**n)


def test_rotation_identity_against_convolution():
    # independent check: evolve the planar distribution step by step
    n_max = 200
    size = 2 * n_max + 1
    P = np.zeros((size, size))
    P[n_max, n_max] = 1.0
    for n in range(1, n_max + 1):
        P = 0.25 * (np.roll(P, 1, 0) + np.roll(P, -1, 0) + np.roll(P, 1, 1) + np.roll(P, -1, 1))
        if n % 40 == 0:
            for x in [(0, 0), (2, 0), (4, 2), (-6, 6)]:
                p = exact_simple2d_point(n, np.array(x) / math.sqrt(n) + 1e-12).value
                assert p == pytest.approx(P[n_max + x[0], n_max + x[1]], rel=1e-10)


def test_lclt1d():
    p = lclt_simple1d_asym(10**4, 0.0)
    assert p.value == pytest.approx(0.0079788456080286535, rel=1e-14)
    assert p.kind is Kind.ASYMPTOTIC
    with pytest.raises(DomainViolation):
        lclt_simple1d_asym(64, 1.0)
    with pytest.raises(ParityViolation):
        lclt_simple1d_asym(10**4 + 1, 0.0)


def test_lclt1d_error_inside_interval():
    for n in (10**2, 10**3, 10**4, 10**5):
        for a in (0.0, 0.5):
            e = exact_simple1d_point(n, a).value
            est = lclt_simple1d_asym(n, a)
            assert est.lo <= e <= est.hi


def test_lclt2d():
    p = lclt_simple2d_asym(100, [0, 0], strict=False)
    assert p.value == pytest.approx(0.006366197723675814, rel=1e-14)
    assert p.value / exact_simple2d_point(100, [0, 0]).value == pytest.approx(1.0050, abs=1e-4)
    with pytest.raises(DomainViolation):
        lclt_simple2d_asym(100, [0, 0])


def test_lclt_lattice_matches_simple_walk():
    d = simple_walk(2)
    est = lclt_lattice_asym(1000, [0, 0], d.sigma, d.lattice.covolume)
    assert est.value == pytest.approx(exact_simple2d_point(1000, [0, 0]).value, rel=0.01)
    assert est.value == pytest.approx(2 / (math.pi * 1000), rel=1e-14)


def test_be_box():
    p = be_box_prob(10**4, [0.0], 1.0, [[1.0]], 1.0)
    assert p.value == pytest.approx(ERF_BOX_1, abs=1e-15)
    assert p.half_width == pytest.approx(0.9496 / 100, rel=1e-14)
    assert p.kind is Kind.BERRY_ESSEEN
    # simple walk exact box mass sits inside the interval
    t = TargetSpec((0.0,), "box", eps=1.0)
    ex = expected_hits(build_schedule(ScheduleSpec("explicit", explicit_terms=(10**4,))), t,
                       simple_walk(1))
    assert ex.terms[0].value == pytest.approx(0.68750, abs=5e-6)
    assert p.lo <= ex.terms[0].value <= p.hi


def test_phi():
    assert phi_width([0.0], 0.1) == pytest.approx(PHI_W01, rel=1e-13)
    vals = [phi_n([0.0], n, 1 / 6) for n in (10**2, 10**3, 10**4, 10**5, 10**6)]
    assert all(x < y <= 1 for x, y in zip(vals, vals[1:]))
    # expansion 1 - w^2 / 6 at a = 0
    for w in (1e-2, 1e-3):
        assert phi_width([0.0], w) == pytest.approx(1 - w * w / 6, abs=w**4)
    # Richardson: (1 - phi) / w^2 tends to (1 - a^2) / 6
    a = 0.7
    r = [(math.exp(-0.5 * a * a) - phi_width([a], w)) / w**2 for w in (1e-2, 5e-3)]
    assert (4 * r[1] - r[0]) / 3 == pytest.approx(math.exp(-0.5 * a * a) * (1 - a * a) / 6, rel=1e-4)


def test_no_return_against_dynamic_programming():
    n = 120
    size = 2 * n + 1
    P = np.zeros((size, size))
    P[n, n] = 1.0
    alive = []
    for k in range(1, n + 1):
        P = 0.25 * (np.roll(P, 1, 0) + np.roll(P, -1, 0) + np.roll(P, 1, 1) + np.roll(P, -1, 1))
        P[n, n] = 0.0          # absorb returns
        alive.append(P.sum())
    for m in (2, 10, 50, 120):
        assert simple2d_no_return(m) == pytest.approx(alive[m - 1], rel=1e-12)


def test_no_return_large_n():
    q = simple2d_no_return(10**5)
    assert 0.2 < q < 0.23
    # P(no return by n) ~ pi / ln n asymptotically, slowly
    assert q * math.log(10**5) / math.pi == pytest.approx(1, abs=0.25)


def test_window_total_independent():
    # exact integer arithmetic: x is inside [-n^(1/6), n^(1/6)] iff x^6 <= n
    mpmath.mp.dps = 30
    total = mpmath.mpf(0)
    for i in range(2, 101):
        n = i**3
        r = math.isqrt(math.isqrt(n)) + 2
        for x in range(-r, r + 1):
            if (x + n) % 2 == 0 and x**6 <= n:
                k = (n + x) // 2
                total += mpmath.binomial(n, k) / mpmath.mpf(2) ** n
    assert float(total) == pytest.approx(WINDOW_TOTAL_CUBIC, rel=1e-14)
    s = build_schedule(ScheduleSpec("power", count=99, beta=3))
    ex = expected_hits(s, TargetSpec((0.0,), "window", alpha=1 / 6), simple_walk(1))
    assert ex.kind is Kind.EXACT
    assert ex.total == pytest.approx(WINDOW_TOTAL_CUBIC, rel=1e-12)


def test_expected_hits_wide_box():
    s = build_schedule(ScheduleSpec("geometric", count=10, ratio=2))
    t = TargetSpec((0.0,), "box", eps=1e6)
    assert expected_hits(s, t, simple_walk(1)).total == pytest.approx(10, abs=1e-12)
    assert expected_hits(s, t, gaussian([[1.0]])).total == pytest.approx(10, abs=1e-12)


def test_expected_hits_lattice_planar():
    s = build_schedule(ScheduleSpec("iterlog", count=999, parity="even"))
    ex = expected_hits(s, TargetSpec((0.0, 0.0), "lattice"), simple_walk(2))
    assert ex.kind is Kind.EXACT
    n = s.terms[-1]
    assert ex.terms[-1].value * n == pytest.approx(2 / math.pi, rel=0.01)
    with pytest.raises(IncompatibleTarget):
        expected_hits(s, TargetSpec((0.0, 0.0), "lattice"), gaussian(np.eye(2)))


def test_prob_estimate_dict():
    d = exact_binomial_prob(4, 2).to_dict()
    assert d["exact"] == "3/8" and d["kind"] == "Exact"
