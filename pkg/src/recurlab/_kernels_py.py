"""Pure-numpy versions of the compiled kernels in ``_kernels.pyx``.

Same signatures, same outputs (integer results bit-identical; float
reductions follow the same left-to-right order).
"""

import numpy as np

_U53 = 1.0 / 9007199254740992.0


def _field_mask(bits, nfields):
    m = 0
    for f in range(nfields):
        m |= 1 << (f * bits)
    return np.uint64(m)


def _counts(words, bits, n_atoms, fm):
    """(len(words), n_atoms) per-word atom counts under per-word field masks ``fm``."""
    planes = [(words >> np.uint64(b)) & fm for b in range(bits)]
    out = np.empty((words.shape[0], n_atoms), dtype=np.int64)
    for j in range(n_atoms):
        sel = fm.copy() if isinstance(fm, np.ndarray) else np.full(words.shape, fm)
        for b in range(bits):
            sel &= planes[b] if (j >> b) & 1 else ~planes[b]
        out[:, j] = np.bitwise_count(sel)
    return out


def packed_counts(words, bits, n_atoms, targets):
    words = np.asarray(words, dtype=np.uint64)
    targets = np.asarray(targets, dtype=np.int64)
    if bits < 1 or bits > 8 or n_atoms > (1 << bits):
        raise ValueError("bad packing")
    spw = 64 // bits
    fm = _field_mask(bits, spw)
    q = targets // spw
    r = targets % spw
    nw = words.shape[0]
    if np.any((q > nw) | ((q == nw) & (r > 0))):
        raise ValueError("target beyond supplied words")
    prefix = np.zeros((nw + 1, n_atoms), dtype=np.int64)
    if nw:
        np.cumsum(_counts(words, bits, n_atoms, fm), axis=0, out=prefix[1:])
    out = prefix[q]
    has_part = r > 0
    if np.any(has_part):
        pw = words[q[has_part]]
        pmask = ((np.uint64(1) << (r[has_part].astype(np.uint64) * np.uint64(bits)))
                 - np.uint64(1)) & fm
        out[has_part] += _counts(pw, bits, n_atoms, pmask)
    return out


def table_counts(words, cdf, targets):
    words = np.asarray(words, dtype=np.uint64)
    targets = np.asarray(targets, dtype=np.int64)
    K = len(cdf) + 1
    if targets.size and targets[-1] > words.shape[0]:
        raise ValueError("target beyond supplied words")
    n = int(targets[-1]) if targets.size else 0
    idx = decode_table(words, cdf, n)
    prefix = np.zeros((n + 1, K), dtype=np.int64)
    onehot = np.zeros((n, K), dtype=np.int64)
    onehot[np.arange(n), idx] = 1
    np.cumsum(onehot, axis=0, out=prefix[1:])
    return prefix[targets]


def decode_packed(words, bits, n_steps):
    words = np.asarray(words, dtype=np.uint64)
    spw = 64 // bits
    if n_steps > words.shape[0] * spw:
        raise ValueError("n_steps beyond supplied words")
    nw = -(-n_steps // spw)
    shifts = (np.arange(spw, dtype=np.uint64) * np.uint64(bits))
    fields = (words[:nw, None] >> shifts[None, :]) & np.uint64((1 << bits) - 1)
    return fields.ravel()[:n_steps].astype(np.intp)


def decode_table(words, cdf, n_steps):
    words = np.asarray(words, dtype=np.uint64)
    if n_steps > words.shape[0]:
        raise ValueError("n_steps beyond supplied words")
    u = (words[:n_steps] >> np.uint64(11)).astype(np.float64) * _U53
    return np.searchsorted(np.asarray(cdf, dtype=np.float64), u, side="right").astype(np.intp)


def scan_min(pos, n0, a, gamma):
    pos = np.asarray(pos, dtype=np.float64)
    L, d = pos.shape
    if L == 0:
        return float("inf"), -1
    n = np.arange(n0, n0 + L, dtype=np.int64)
    rn = np.sqrt(n.astype(np.float64))
    acc = np.zeros(L)
    for j in range(d):
        diff = pos[:, j] - a[j] * rn
        acc = acc + diff * diff
    val = np.sqrt(acc) * np.power(n.astype(np.float64), gamma - 0.5)
    k = int(np.argmin(val))
    return float(val[k]), int(n[k])


def scan_box_weighted(pos, n0, a, eps, acc):
    pos = np.asarray(pos, dtype=np.float64)
    L = pos.shape[0]
    n = np.arange(n0, n0 + L, dtype=np.int64)
    rn = np.sqrt(n.astype(np.float64))
    inside = np.all(np.abs(pos / rn[:, None] - np.asarray(a)[None, :]) <= eps, axis=1)
    w = np.where(inside, 1.0 / n.astype(np.float64), 0.0)
    # cumsum is strictly sequential, matching the compiled loop
    total = np.cumsum(np.concatenate(([acc], w)))[-1]
    return float(total), int(inside.sum())
