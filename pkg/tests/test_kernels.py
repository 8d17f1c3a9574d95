import os
import subprocess
import sys

import numpy as np
import pytest

from recurlab import _kernels_py as py

cy = pytest.importorskip("recurlab._kernels")


@pytest.fixture
def words():
    return np.random.Generator(np.random.Philox(5)).integers(0, 2**64, 4000, dtype=np.uint64)


@pytest.mark.parametrize("bits", [1, 2, 3, 4])
def test_packed_counts(words, bits):
    spw = 64 // bits
    targets = np.array([1, 7, spw, spw + 1, 1000, len(words) * spw], dtype=np.int64)
    a = cy.packed_counts(words, bits, 1 << bits, targets)
    b = py.packed_counts(words, bits, 1 << bits, targets)
    np.testing.assert_array_equal(a, b)
    assert a[-1].sum() == targets[-1]


@pytest.mark.parametrize("bits", [1, 2, 3, 4])
def test_decode_packed_matches_counts(words, bits):
    n = 3000
    idx = cy.decode_packed(words, bits, n)
    np.testing.assert_array_equal(idx, py.decode_packed(words, bits, n))
    counts = py.packed_counts(words, bits, 1 << bits, np.array([n], dtype=np.int64))[0]
    np.testing.assert_array_equal(np.bincount(idx, minlength=1 << bits), counts)


def test_table_kernels(words):
    cdf = np.cumsum([0.1, 0.25, 0.3, 0.35])[:-1]
    targets = np.array([5, 100, 4000], dtype=np.int64)
    np.testing.assert_array_equal(cy.table_counts(words, cdf, targets), py.table_counts(words, cdf, targets))
    np.testing.assert_array_equal(cy.decode_table(words, cdf, 4000), py.decode_table(words, cdf, 4000))


def test_scans():
    rng = np.random.default_rng(1)
    pos = np.cumsum(rng.standard_normal((5000, 2)), axis=0)
    a = np.array([0.3, -0.2])
    assert cy.scan_min(pos, 17, a, 0.4) == py.scan_min(pos, 17, a, 0.4)
    acc_c = cy.scan_box_weighted(pos, 17, a, 0.5, 0.25)
    acc_p = py.scan_box_weighted(pos, 17, a, 0.5, 0.25)
    assert acc_c == acc_p


@pytest.mark.parametrize("value,expected", [("python", "python"), ("", "cython")])
def test_backend_selection(value, expected):
    env = dict(os.environ, RECURLAB_BACKEND=value)
    out = subprocess.run([sys.executable, "-c", "import recurlab; print(recurlab.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == expected


AGG_SCRIPT = """
import sys
from recurlab.replication import ExperimentConfig, run_experiment
from recurlab.hits import TargetSpec
from recurlab.schedule import ScheduleSpec
cfgs = [
    ExperimentConfig({"family": "simple", "dimension": 2}, ScheduleSpec("iterlog", count=40, parity="even"),
                     TargetSpec((0.0, 0.0), "lattice"), "T1Lattice", 50, 1),
    ExperimentConfig({"family": "atoms", "basis": [[1.0]], "offset": [0.0], "atoms": [[1.0], [0.0], [-1.0]],
                      "probs": [0.25, 0.5, 0.25]}, ScheduleSpec("power", count=20, beta=3),
                     TargetSpec((0.5,), "window", alpha=0.25), "T2aWindow", 50, 2),
    ExperimentConfig({"family": "simple", "dimension": 1}, ScheduleSpec("geometric", count=12, ratio=2),
                     TargetSpec((0.3,), "box", eps=0.5), "C3Weighted", 20, 3),
]
for c in cfgs:
    sys.stdout.write(run_experiment(c).to_json())
"""


def test_aggregates_identical_across_backends():
    outs = []
    for backend in ("python", "cython"):
        env = dict(os.environ, RECURLAB_BACKEND=backend)
        outs.append(subprocess.run([sys.executable, "-c", AGG_SCRIPT], env=env, capture_output=True,
                                   text=True, check=True).stdout)
    assert outs[0] == outs[1]
