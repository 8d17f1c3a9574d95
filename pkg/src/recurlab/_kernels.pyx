# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops for the walker.

Signatures and outputs mirror ``recurlab._kernels_py`` exactly; integer
outputs are bit-identical and the float reductions use the same operation
order.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, pow, fabs, INFINITY
from libc.stdint cimport uint64_t, int64_t

cnp.import_array()

cdef inline int _popcount(uint64_t x) noexcept nogil:
    # SWAR popcount: the builtin becomes a libgcc call unless the target ISA has popcnt
    x = x - ((x >> 1) & 0x5555555555555555ULL)
    x = (x & 0x3333333333333333ULL) + ((x >> 2) & 0x3333333333333333ULL)
    x = (x + (x >> 4)) & 0x0F0F0F0F0F0F0F0FULL
    return <int>((x * 0x0101010101010101ULL) >> 56)


cdef inline uint64_t _field_mask(int bits, int nfields) noexcept nogil:
    cdef uint64_t m = 0
    cdef int f
    for f in range(nfields):
        m |= (<uint64_t>1) << (f * bits)
    return m


cdef inline void _word_counts(uint64_t w, int bits, int n_atoms, uint64_t fm,
                              int64_t* out) noexcept nogil:
    # adds the number of occurrences of each atom index among the fields selected by fm
    cdef uint64_t planes[8]
    cdef uint64_t sel
    cdef int b, j
    for b in range(bits):
        planes[b] = (w >> b) & fm
    for j in range(n_atoms):
        sel = fm
        for b in range(bits):
            if (j >> b) & 1:
                sel &= planes[b]
            else:
                sel &= ~planes[b]
        out[j] += _popcount(sel)


def packed_counts(const uint64_t[::1] words, int bits, int n_atoms, const int64_t[::1] targets):
    """Per-atom counts over the first t steps, for each t in ``targets`` (nondecreasing)."""
    if bits < 1 or bits > 8 or n_atoms > (1 << bits):
        raise ValueError("bad packing")
    cdef int spw = 64 // bits
    cdef uint64_t fm = _field_mask(bits, spw)
    cdef Py_ssize_t T = targets.shape[0]
    out_arr = np.zeros((T, n_atoms), dtype=np.int64)
    cdef int64_t[:, ::1] out = out_arr
    cdef int64_t[64] cum
    cdef int64_t[64] part
    cdef Py_ssize_t done = 0, i, q, nw = words.shape[0]
    cdef int64_t t
    cdef int r, j
    for j in range(n_atoms):
        cum[j] = 0
    with nogil:
        for i in range(T):
            t = targets[i]
            q = t // spw
            r = t % spw
            if q > nw or (q == nw and r > 0):
                with gil:
                    raise ValueError("target beyond supplied words")
            while done < q:
                _word_counts(words[done], bits, n_atoms, fm, cum)
                done += 1
            for j in range(n_atoms):
                part[j] = 0
            if r > 0:
                _word_counts(words[q], bits, n_atoms,
                             fm & (((<uint64_t>1) << (r * bits)) - 1), part)
            for j in range(n_atoms):
                out[i, j] = cum[j] + part[j]
    return out_arr


def table_counts(const uint64_t[::1] words, const double[::1] cdf, const int64_t[::1] targets):
    """Per-atom counts for one-word-per-step inverse-CDF sampling."""
    cdef Py_ssize_t K = cdf.shape[0] + 1
    cdef Py_ssize_t T = targets.shape[0]
    out_arr = np.zeros((T, K), dtype=np.int64)
    cdef int64_t[:, ::1] out = out_arr
    cum_arr = np.zeros(K, dtype=np.int64)
    cdef int64_t[::1] cum = cum_arr
    cdef Py_ssize_t s = 0, i, j, idx, lo, hi, mid
    cdef double u
    if T and targets[T - 1] > words.shape[0]:
        raise ValueError("target beyond supplied words")
    with nogil:
        for i in range(T):
            while s < targets[i]:
                u = <double>(words[s] >> 11) * (1.0 / 9007199254740992.0)
                lo = 0
                hi = K - 1
                while lo < hi:
                    mid = (lo + hi) >> 1
                    if cdf[mid] <= u:
                        lo = mid + 1
                    else:
                        hi = mid
                cum[lo] += 1
                s += 1
            for j in range(K):
                out[i, j] = cum[j]
    return out_arr


def decode_packed(const uint64_t[::1] words, int bits, Py_ssize_t n_steps):
    cdef int spw = 64 // bits
    cdef uint64_t mask = ((<uint64_t>1) << bits) - 1
    if n_steps > words.shape[0] * spw:
        raise ValueError("n_steps beyond supplied words")
    out_arr = np.empty(n_steps, dtype=np.intp)
    cdef Py_ssize_t[::1] out = out_arr
    cdef Py_ssize_t s
    with nogil:
        for s in range(n_steps):
            out[s] = <Py_ssize_t>((words[s // spw] >> ((s % spw) * bits)) & mask)
    return out_arr


def decode_table(const uint64_t[::1] words, const double[::1] cdf, Py_ssize_t n_steps):
    cdef Py_ssize_t K = cdf.shape[0] + 1
    if n_steps > words.shape[0]:
        raise ValueError("n_steps beyond supplied words")
    out_arr = np.empty(n_steps, dtype=np.intp)
    cdef Py_ssize_t[::1] out = out_arr
    cdef Py_ssize_t s, lo, hi, mid
    cdef double u
    with nogil:
        for s in range(n_steps):
            u = <double>(words[s] >> 11) * (1.0 / 9007199254740992.0)
            lo = 0
            hi = K - 1
            while lo < hi:
                mid = (lo + hi) >> 1
                if cdf[mid] <= u:
                    lo = mid + 1
                else:
                    hi = mid
            out[s] = lo
    return out_arr


def scan_min(const double[:, ::1] pos, int64_t n0, const double[::1] a, double gamma):
    """min over rows of n^gamma |x_n / sqrt(n) - a|, row k holding S_{n0 + k}."""
    cdef Py_ssize_t L = pos.shape[0], d = pos.shape[1], k, j
    cdef double best = INFINITY, acc, diff, rn, val
    cdef int64_t best_n = -1, n
    with nogil:
        for k in range(L):
            n = n0 + k
            rn = sqrt(<double>n)
            acc = 0.0
            for j in range(d):
                diff = pos[k, j] - a[j] * rn
                acc = acc + diff * diff
            val = sqrt(acc) * pow(<double>n, gamma - 0.5)
            if val < best:
                best = val
                best_n = n
    return best, best_n


def scan_box_weighted(const double[:, ::1] pos, int64_t n0, const double[::1] a,
                      double eps, double acc):
    """Accumulate sum of 1/k over rows with |x_k/sqrt(k) - a|_inf <= eps."""
    cdef Py_ssize_t L = pos.shape[0], d = pos.shape[1], k, j
    cdef int64_t n, hits = 0
    cdef double rn
    cdef bint inside
    with nogil:
        for k in range(L):
            n = n0 + k
            rn = sqrt(<double>n)
            inside = True
            for j in range(d):
                if not (fabs(pos[k, j] / rn - a[j]) <= eps):
                    inside = False
                    break
            if inside:
                acc = acc + 1.0 / <double>n
                hits += 1
    return acc, hits
