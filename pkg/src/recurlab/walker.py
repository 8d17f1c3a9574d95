"""Single-replica walks.

Only checkpoint positions S_{n_i} are kept; path functionals (running minima,
the harmonic box sum) are streamed chunk by chunk, so memory stays
O(schedule length + chunk) regardless of n.

Step ``t`` (0-based) of a lattice law with packed encoding always comes from
field ``t % spw`` of word ``t // spw`` of the replica stream, and from word
``t`` otherwise.  Continuous laws draw through a single sequential numpy
primitive.  Either way the step sequence never depends on chunking, which is
what makes prefixes of a schedule reproduce exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from recurlab._backend import kernels
from recurlab.errors import WrongDimension
from recurlab.hits import box_eps
from recurlab.schedule import Schedule
from recurlab.stepdist import StepDistribution, sample
from recurlab.streams import RngStream

CHUNK_STEPS = 1 << 16
CHUNK_WORDS = 1 << 14


@dataclass(frozen=True, eq=False)
class WalkCheckpoints:
    schedule: Schedule
    replica_index: int
    positions: np.ndarray                 # (count, d) ambient coordinates
    coords: np.ndarray | None = None      # (count, d) int64 lattice coordinates of S - n b


@dataclass
class MinTracker:
    a: np.ndarray
    gamma: float
    running_min: float = math.inf
    argmin_n: int = -1
    n_max: int = 0
    history: list = field(default_factory=list)   # (n, running_min) at requested milestones

    def update(self, value: float, n: int):
        if value < self.running_min:
            self.running_min = value
            self.argmin_n = n


def _lattice_counts(dist: StepDistribution, stream: RngStream, terms: np.ndarray) -> np.ndarray:
    """Per-atom step counts up to each term, drawing words chunk by chunk."""
    bits = dist.packed_bits
    K = len(dist.atoms)
    spw = 64 // bits if bits else 1
    n_last = int(terms[-1])
    total_words = -(-n_last // spw)
    out = np.empty((len(terms), K), dtype=np.int64)
    base = np.zeros(K, dtype=np.int64)
    done_words = 0
    j = 0
    while done_words < total_words:
        nw = min(CHUNK_WORDS, total_words - done_words)
        words = stream.raw(nw)
        start = done_words * spw
        stop = (done_words + nw) * spw
        k = j
        while k < len(terms) and terms[k] <= stop:
            k += 1
        last = done_words + nw >= total_words
        local = terms[j:k] - start
        if not last:
            local = np.append(local, nw * spw)  # chunk total, carried into the next chunk
        local = np.ascontiguousarray(local, dtype=np.int64)
        if bits:
            c = kernels.packed_counts(words, bits, K, local)
        else:
            c = kernels.table_counts(words, dist.cdf, local)
        out[j:k] = c[: k - j] + base
        if not last:
            base = base + c[-1]
        j = k
        done_words += nw
    return out


def run_checkpoints(dist: StepDistribution, schedule: Schedule, stream: RngStream,
                    replica_index: int | None = None) -> WalkCheckpoints:
    """Positions S_{n_i} of one walk at every schedule term (one pass, n_last draws)."""
    terms = np.asarray(schedule.terms, dtype=np.int64)
    rep = stream.replica_index if replica_index is None else replica_index
    if dist.is_lattice:
        counts = _lattice_counts(dist, stream, terms)
        coords = counts @ dist.atom_coords
        positions = dist.lattice.point(coords, terms)
        return WalkCheckpoints(schedule, rep, positions, coords)
    d = dist.dimension
    positions = np.empty((len(terms), d))
    base = np.zeros(d)
    done = 0
    j = 0
    n_last = int(terms[-1])
    while done < n_last:
        L = min(CHUNK_STEPS, n_last - done)
        cs = np.cumsum(sample(dist, stream, L), axis=0) + base
        k = j
        while k < len(terms) and terms[k] <= done + L:
            k += 1
        positions[j:k] = cs[terms[j:k] - done - 1]
        base = cs[-1]
        done += L
        j = k
    return WalkCheckpoints(schedule, rep, positions, None)


class _LatticeSteps:
    """Sequential atom indices with leftover fields of a packed word buffered."""

    def __init__(self, dist, stream):
        self.dist = dist
        self.stream = stream
        self.bits = dist.packed_bits
        self.spw = 64 // self.bits if self.bits else 1
        self._pending = np.empty(0, dtype=np.intp)

    def take(self, L: int) -> np.ndarray:
        need = L - len(self._pending)
        if need <= 0:
            out, self._pending = self._pending[:L], self._pending[L:]
            return out
        if self.bits:
            nw = -(-need // self.spw)
            fresh = kernels.decode_packed(self.stream.raw(nw), self.bits, nw * self.spw)
        else:
            fresh = kernels.decode_table(self.stream.raw(need), self.dist.cdf, need)
        allidx = np.concatenate((self._pending, fresh))
        out, self._pending = allidx[:L], allidx[L:]
        return out


def _position_chunks(dist: StepDistribution, stream: RngStream, n_max: int, breaks=()):
    """Yield (n0, positions) with positions[k] = S_{n0 + k}, covering n = 1..n_max.

    Chunks never straddle a value in ``breaks``.
    """
    stops = sorted({int(b) for b in breaks if 0 < b < n_max} | {int(n_max)})
    d = dist.dimension
    done = 0
    if dist.is_lattice:
        src = _LatticeSteps(dist, stream)
        base = np.zeros(d, dtype=np.int64)
        basis, offset = dist.lattice.basis, dist.lattice.offset
    else:
        base = np.zeros(d)
    for stop in stops:
        while done < stop:
            L = min(CHUNK_STEPS, stop - done)
            if dist.is_lattice:
                coords = np.cumsum(dist.atom_coords[src.take(L)], axis=0) + base
                base = coords[-1].copy()
                n = np.arange(done + 1, done + L + 1, dtype=np.float64)
                pos = coords @ basis + n[:, None] * offset
            else:
                pos = np.cumsum(sample(dist, stream, L), axis=0) + base
                base = pos[-1].copy()
            yield done + 1, np.ascontiguousarray(pos, dtype=np.float64)
            done += L


def run_min_tracker(dist: StepDistribution, a, gamma: float, n_max: int, stream: RngStream,
                    milestones=()) -> MinTracker:
    """Stream n = 1..n_max tracking min_n n^gamma |S_n / sqrt(n) - a| and its argmin."""
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    a = np.atleast_1d(np.asarray(a, dtype=np.float64))
    if a.shape != (dist.dimension,):
        raise WrongDimension(f"target has dimension {a.size}, walk has {dist.dimension}")
    tracker = MinTracker(a=a, gamma=float(gamma), n_max=int(n_max))
    marks = sorted(int(m) for m in milestones if 0 < m <= n_max)
    mi = 0
    for n0, pos in _position_chunks(dist, stream, n_max, marks):
        v, n = kernels.scan_min(pos, n0, a, tracker.gamma)
        tracker.update(v, n)
        end = n0 + len(pos) - 1
        while mi < len(marks) and marks[mi] == end:
            tracker.history.append((end, tracker.running_min))
            mi += 1
    return tracker


def run_weighted_box(dist: StepDistribution, a, eps: float, n: int, stream: RngStream):
    """(sum over k <= n of 1{|S_k/sqrt(k) - a|_inf <= eps} / k, number of hitting k)."""
    a = np.atleast_1d(np.asarray(a, dtype=np.float64))
    if a.shape != (dist.dimension,):
        raise WrongDimension(f"target has dimension {a.size}, walk has {dist.dimension}")
    acc, hits = 0.0, 0
    e = box_eps(eps, a)
    for n0, pos in _position_chunks(dist, stream, n):
        acc, h = kernels.scan_box_weighted(pos, n0, a, e, acc)
        hits += h
    return acc, hits
