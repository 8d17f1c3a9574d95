"""Hit predicates: when does S_n count as a visit to the target?

All boxes are closed, so boundary points are hits.  Half-widths get a
relative slack of ``HIT_RTOL`` so that points exactly on a boundary (say
x = 4 for n^(1/6) with n = 4096) are not lost to floating-point rounding.  Lattice targets use a
single representative point per (a, n): floor of the basis coordinates of
``a sqrt(n) - n b`` in general, ``2 floor(a_k sqrt(n) / 2)`` for the simple
walk.  The vectorised ``*_hits`` helpers take positions as a (count, d) array
and the matching step numbers; the scalar functions wrap them.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass

import numpy as np

from recurlab.errors import InvalidSpec, OffLattice, WrongDimension
from recurlab.stepdist import LATTICE_TOL, LatticeSpec


class TargetMode(str, enum.Enum):
    LATTICE_POINT = "lattice"
    ALPHA_WINDOW = "window"
    SCALED_BOX = "box"


ALPHA_RANGE = {1: (1 / 6, 1 / 2), 2: (2 / 5, 1 / 2)}
HIT_RTOL = 1e-12


def _vec(a) -> tuple[float, ...]:
    return tuple(float(v) for v in np.atleast_1d(np.asarray(a, dtype=np.float64)))


@dataclass(frozen=True)
class TargetSpec:
    """Target point(s) and hit mode.

    ``points`` lists explicit targets; otherwise, when ``N`` and ``grid_step``
    are set, the targets are the grid over [-N, N]^d; otherwise just ``a``.
    """

    a: tuple[float, ...]
    mode: TargetMode
    alpha: float | None = None
    eps: float | None = None
    N: float | None = None
    grid_step: float | None = None
    points: tuple[tuple[float, ...], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "a", _vec(self.a))
        object.__setattr__(self, "mode", TargetMode(self.mode))
        object.__setattr__(self, "points", tuple(_vec(p) for p in self.points))
        d = len(self.a)
        if any(len(p) != d for p in self.points):
            raise WrongDimension("all target points must share one dimension")
        if self.mode is TargetMode.ALPHA_WINDOW:
            if d not in ALPHA_RANGE:
                raise InvalidSpec(f"n^alpha windows are defined for d = 1, 2 only (got d = {d})")
            lo, hi = ALPHA_RANGE[d]
            if self.alpha is None or not (lo <= self.alpha < hi):
                raise InvalidSpec(
                    f"alpha = {self.alpha} outside the valid range [{_frac(lo)}, {_frac(hi)}) for d = {d}")
        if self.mode is TargetMode.SCALED_BOX and (self.eps is None or not self.eps > 0):
            raise InvalidSpec(f"scaled box needs eps > 0, got {self.eps}")
        if (self.N is None) != (self.grid_step is None):
            raise InvalidSpec("grid targets need both N and grid_step")
        if self.grid_step is not None and not self.grid_step > 0:
            raise InvalidSpec("grid_step must be > 0")
        if self.N is not None and not self.N >= 0:
            raise InvalidSpec("N must be >= 0")

    @property
    def dimension(self) -> int:
        return len(self.a)

    def targets(self) -> list[tuple[float, ...]]:
        if self.points:
            return list(self.points)
        if self.N is not None:
            k = int(np.floor(self.N / self.grid_step + 1e-9))
            axis = [round(i * self.grid_step, 12) for i in range(-k, k + 1)]
            return [tuple(p) for p in itertools.product(axis, repeat=self.dimension)]
        return [self.a]

    def to_dict(self) -> dict:
        d = {"a": list(self.a), "mode": self.mode.value}
        for key in ("alpha", "eps", "N", "grid_step"):
            v = getattr(self, key)
            if v is not None:
                d[key] = v
        if self.points:
            d["points"] = [list(p) for p in self.points]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TargetSpec":
        return cls(a=tuple(d["a"]), mode=d["mode"], alpha=d.get("alpha"), eps=d.get("eps"),
                   N=d.get("N"), grid_step=d.get("grid_step"),
                   points=tuple(tuple(p) for p in d.get("points", ())))


def _frac(x: float) -> str:
    from fractions import Fraction
    return str(Fraction(x).limit_denominator(12))


# -- lattice targets ------------------------------------------------------------

def representative_coords(a, n, lattice: LatticeSpec) -> np.ndarray:
    """Integer basis coordinates of the representative of a sqrt(n); n may be an array."""
    a = np.asarray(a, dtype=np.float64)
    n = np.asarray(n, dtype=np.int64)
    rn = np.sqrt(n.astype(np.float64))[..., None]
    if lattice.convention == "simple":
        # lattice is Z^d with b = 0, so coordinates are the point itself
        return (2 * np.floor(a * rn / 2)).astype(np.int64)
    c = lattice.coords(a * rn, n)
    return np.floor(c + LATTICE_TOL).astype(np.int64)


def lattice_representative(a, n: int, lattice: LatticeSpec) -> np.ndarray:
    """The lattice point of Lambda + n b that stands for a sqrt(n)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    a = np.atleast_1d(np.asarray(a, dtype=np.float64))
    if a.shape != (lattice.dimension,):
        raise WrongDimension("target and lattice dimensions differ")
    k = representative_coords(a, n, lattice)
    return lattice.point(k, n)


def lattice_hits(coords, a, ns, lattice: LatticeSpec) -> np.ndarray:
    """Vectorised: coords (m, d) integer basis coordinates of S_n - n b."""
    rep = representative_coords(a, ns, lattice)
    return np.all(np.asarray(coords) == rep, axis=-1)


def lattice_hit(x, a, n: int, lattice: LatticeSpec) -> bool:
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    c = lattice.coords(x, n)
    k = np.round(c)
    if np.any(np.abs(c - k) > LATTICE_TOL):
        raise OffLattice(f"{x.tolist()} is not on Lambda + {n} b")
    return bool(lattice_hits(k.astype(np.int64)[None, :], a, np.array([n]), lattice)[0])


# -- window and box targets -------------------------------------------------------

def window_hits(x, a, ns, alpha: float) -> np.ndarray:
    """Vectorised: every coordinate of x - a sqrt(n) within [-n^alpha, n^alpha]."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    nf = np.asarray(ns, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    rn = np.sqrt(nf)[:, None]
    half = np.power(nf, alpha)[:, None]
    half = half + HIT_RTOL * (half + np.max(np.abs(a)) * rn)
    return np.all(np.abs(x - a * rn) <= half, axis=1)


def alpha_window_hit(x, a, n: int, alpha: float) -> bool:
    if n < 1:
        raise ValueError("n must be >= 1")
    return bool(window_hits(np.atleast_1d(x)[None, :], np.atleast_1d(a), [n], alpha)[0])


def box_hits(x, a, eps: float, ns) -> np.ndarray:
    """Vectorised: every coordinate of x / sqrt(n) - a within [-eps, eps]."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    rn = np.sqrt(np.asarray(ns, dtype=np.float64))[:, None]
    a = np.asarray(a, dtype=np.float64)
    return np.all(np.abs(x / rn - a) <= box_eps(eps, a), axis=1)


def box_eps(eps: float, a) -> float:
    """Half-width actually compared against, including the rounding slack."""
    return eps + HIT_RTOL * (eps + float(np.max(np.abs(a))))


def scaled_box_hit(x, a, eps: float, n: int) -> bool:
    if n < 1 or not eps > 0:
        raise ValueError("need n >= 1 and eps > 0")
    return bool(box_hits(np.atleast_1d(x)[None, :], np.atleast_1d(a), eps, [n])[0])
