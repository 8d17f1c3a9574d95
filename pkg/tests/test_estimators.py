import math

import numpy as np
import pytest

from recurlab.errors import LengthMismatch, NotPositiveDefinite, WrongDimension
from recurlab.estimators import (Form, box_limit_value, corollary3_weighted, delta_statistic,
                                 gaussian_density, limit_value, liminf_report, weighted_delta)
from recurlab.schedule import ScheduleSpec, build_schedule
from recurlab.walker import MinTracker

# mpmath references (30 digits)
ERF_BOX_1 = 0.68268949213708590        # P(|Z| <= 1)
ERF_BOX_HALF = 0.38292492254802621     # P(|Z| <= 0.5)
CORRELATED_BOX = 0.35711384039091094   # Sigma [[1,.5],[.5,2]], a (0.3, 0.2), eps 1
H_OVER_LOG_1E6 = 1.0417802992136762    # H_{10^6} / ln 10^6


def test_lattice_limit_values():
    assert limit_value([0, 0], np.eye(2) / 2, Form.T1_LATTICE) == pytest.approx(1 / math.pi, rel=1e-15)
    assert limit_value([0, 0], np.eye(2) / 2, Form.T1_LATTICE, covolume=2) == pytest.approx(
        2 / math.pi, rel=1e-15)
    assert limit_value([0, 0], np.eye(2), "T1Lattice") == pytest.approx(1 / (2 * math.pi), rel=1e-15)
    v = limit_value([1.0, 0.5], [[2.0, 0.3], [0.3, 1.0]], "T1Lattice")
    assert v == pytest.approx(gaussian_density([1.0, 0.5], [[2.0, 0.3], [0.3, 1.0]]), rel=1e-14)


def test_window_limit_values():
    assert limit_value([0.0], form="T2aWindow") == pytest.approx(math.sqrt(2 / math.pi), rel=1e-15)
    assert limit_value([1.0], form="T2aWindow") == pytest.approx(
        math.sqrt(2 / math.pi) * math.exp(-0.5), rel=1e-15)
    assert limit_value([0.6, 0.8], form="T2bWindow") == pytest.approx(2 / math.pi * math.exp(-0.5),
                                                                      rel=1e-15)


def test_limit_dimension_errors():
    with pytest.raises(WrongDimension):
        limit_value([0.0], np.eye(1), "T1Lattice")
    with pytest.raises(WrongDimension):
        limit_value([0.0, 0.0], form="T2aWindow")
    with pytest.raises(WrongDimension):
        limit_value([0.0], form="T2bWindow")
    with pytest.raises(NotPositiveDefinite):
        limit_value([0, 0], [[1, 2], [2, 1]], "T1Lattice")


def test_box_limit_values():
    assert box_limit_value([0.0], 1.0, [[1.0]]) == pytest.approx(ERF_BOX_1, abs=1e-15)
    assert box_limit_value([0.0], 0.5, [[1.0]]) == pytest.approx(ERF_BOX_HALF, abs=1e-15)
    assert box_limit_value([1.0], 0.5, [[1.0]]) == pytest.approx(
        0.5 * (math.erf(1.5 / 2**0.5) - math.erf(0.5 / 2**0.5)), abs=1e-15)
    assert box_limit_value([0.0, 0.0], 1.0, np.eye(2)) == pytest.approx(ERF_BOX_1**2, abs=1e-15)


def test_box_limit_correlated():
    v = box_limit_value([0.3, 0.2], 1.0, [[1.0, 0.5], [0.5, 2.0]])
    assert abs(v - CORRELATED_BOX) <= 1e-10


def test_box_limit_diag_product():
    s = np.diag([4.0, 0.25])
    lo, hi = np.array([0.1, -0.3]) - 0.4, np.array([0.1, -0.3]) + 0.4
    prod = np.prod([0.5 * (math.erf(h / math.sqrt(2 * v)) - math.erf(l / math.sqrt(2 * v)))
                    for l, h, v in zip(lo, hi, np.diag(s))])
    assert box_limit_value([0.1, -0.3], 0.4, s) == pytest.approx(prod, abs=1e-15)


def test_box_limit_shrinks_to_density():
    s = [[1.0, 0.4], [0.4, 1.5]]
    a, eps = np.array([0.2, -0.5]), 1e-3
    v = box_limit_value(a, eps, s)
    assert v / (2 * eps) ** 2 == pytest.approx(gaussian_density(a, s), rel=1e-5)


def test_box_limit_monotone_in_eps():
    s = [[1.0, 0.5], [0.5, 2.0]]
    vals = [box_limit_value([0.3, 0.2], e, s) for e in (0.1, 0.25, 0.5, 1.0, 2.0)]
    assert all(x < y for x, y in zip(vals, vals[1:]))


def test_delta_examples():
    # 100 checkpoints with a count normalizer (2^i would pass the int64 step limit)
    s = build_schedule(ScheduleSpec("explicit", explicit_terms=tuple(range(1, 101))))
    hits = np.zeros(100, dtype=bool)
    hits[:50] = True
    r = delta_statistic(hits, s, 0.5)
    assert r.empirical == 0.5 and r.delta == 1.0
    hits[47:] = False
    r = delta_statistic(hits, s, 0.466065)
    assert r.delta == pytest.approx(47 / (100 * 0.466065), rel=1e-15)
    assert r.delta == pytest.approx(1.00845, abs=1e-5)   # printed value, last digit off
    r0 = delta_statistic(np.zeros(100, dtype=bool), s, 0.5)
    assert r0.delta == 0.0 and not math.isnan(r0.delta)
    with pytest.raises(LengthMismatch):
        delta_statistic(hits[:99], s, 0.5)


def test_delta_scale_consistency():
    s = build_schedule(ScheduleSpec("geometric", count=40, ratio=2))
    hits = np.random.default_rng(0).random(40) < 0.3
    r1, r2 = delta_statistic(hits, s, 0.2), delta_statistic(hits, s, 0.4)
    assert r1.delta == pytest.approx(2 * r2.delta, rel=1e-15)


def test_weighted_examples():
    n = 10**6
    r = corollary3_weighted(np.ones(n, dtype=bool), 1.0)
    assert r.empirical == pytest.approx(H_OVER_LOG_1E6, rel=1e-13)
    # hits only at powers of two: sum of 1/2^j is below 2
    hits = np.zeros(n, dtype=bool)
    hits[[2**j - 1 for j in range(20)]] = True
    r = corollary3_weighted(hits, 1.0)
    assert r.empirical <= 2 / math.log(n)
    assert weighted_delta(0.0, 10, 0.5).delta == 0.0


def test_liminf_report():
    t = MinTracker(a=np.zeros(2), gamma=0.5, running_min=0.0, argmin_n=6, n_max=100)
    assert liminf_report(t, 1.0).status == "pass"
    assert liminf_report(t).status == "info"
    t.running_min = 2.0
    assert liminf_report(t, 1.0).status == "fail"
