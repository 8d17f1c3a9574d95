"""Step laws: built-in families with exact moments, sampling and whitening.

Lattice families (``simple``, ``atoms``) are described by a :class:`LatticeSpec`
and a finite atom table; walkers accumulate their positions as exact integer
coordinates in the lattice basis.  Continuous families (``uniform``,
``gaussian``, ``mixture``) have closed-form covariance, and their third
absolute moment ``rho = E|X|^3`` is obtained from a one-dimensional integral
identity rather than by sampling.

Norms are Euclidean everywhere (``|a| = (a_1^2 + ... + a_d^2)^{1/2}``).
"""

from __future__ import annotations

import enum
import functools
import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import integrate

from recurlab._backend import kernels
from recurlab.errors import InvalidSpec, NotPositiveDefinite, UnsupportedFamily

MEAN_TOL = 1e-12
PROB_TOL = 1e-12
LATTICE_TOL = 1e-9
DET_TOL = 1e-12
WHITENING_TOL = 1e-10


class Family(str, enum.Enum):
    SIMPLE = "simple"
    ATOMS = "atoms"
    UNIFORM = "uniform"
    GAUSSIAN = "gaussian"
    MIXTURE = "mixture"

    @property
    def is_lattice(self) -> bool:
        return self in (Family.SIMPLE, Family.ATOMS)


@dataclass(frozen=True, eq=False)
class LatticeSpec:
    """Translated lattice ``Lambda + b``; rows of ``basis`` are h_1..h_d.

    ``convention`` selects the lattice representative of ``a sqrt(n)``:
    ``"floor"`` floors basis coordinates, ``"simple"`` is the simple-walk rule
    ``2 * floor(a_k sqrt(n) / 2)`` per coordinate.  Under the simple convention
    points are stored in Z^d coordinates, but the walk lives on the checkerboard
    coset {x : sum(x) = n mod 2}, whose cell volume is 2.
    """

    basis: np.ndarray
    offset: np.ndarray
    convention: str = "floor"

    def __post_init__(self):
        basis = np.atleast_2d(np.asarray(self.basis, dtype=np.float64))
        offset = np.atleast_1d(np.asarray(self.offset, dtype=np.float64))
        d = basis.shape[0]
        if basis.shape != (d, d) or offset.shape != (d,):
            raise InvalidSpec("lattice basis must be d x d and offset a d-vector")
        if abs(np.linalg.det(basis)) <= DET_TOL:
            raise InvalidSpec("lattice basis vectors are not linearly independent")
        if self.convention not in ("floor", "simple"):
            raise InvalidSpec(f"unknown lattice convention {self.convention!r}")
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "offset", offset)
        object.__setattr__(self, "_inverse", np.linalg.inv(basis))

    @property
    def dimension(self) -> int:
        return self.basis.shape[0]

    @property
    def basis_norms(self) -> np.ndarray:
        return np.linalg.norm(self.basis, axis=1)

    @property
    def covolume(self) -> float:
        det = abs(float(np.linalg.det(self.basis)))
        return 2.0 * det if self.convention == "simple" else det

    def coords(self, x, n) -> np.ndarray:
        """Real basis coordinates of ``x - n b`` (integers iff x lies on Lambda + n b)."""
        x = np.asarray(x, dtype=np.float64)
        n = np.asarray(n, dtype=np.float64)
        return (x - n[..., None] * self.offset) @ self._inverse

    def point(self, k, n) -> np.ndarray:
        k = np.asarray(k, dtype=np.float64)
        n = np.asarray(n, dtype=np.float64)
        return k @ self.basis + n[..., None] * self.offset

    def contains(self, x, n, tol=LATTICE_TOL) -> bool:
        c = self.coords(x, n)
        return bool(np.all(np.abs(c - np.round(c)) <= tol))

    def to_dict(self) -> dict:
        return {"basis": self.basis.tolist(), "offset": self.offset.tolist(),
                "convention": self.convention}


@dataclass(frozen=True)
class WhiteningMap:
    matrix: np.ndarray
    inverse: np.ndarray

    def __call__(self, x):
        return np.asarray(x, dtype=np.float64) @ self.matrix.T


@dataclass(frozen=True, eq=False)
class StepDistribution:
    family: Family
    dimension: int
    mean: np.ndarray
    sigma: np.ndarray
    sigma_det: float
    rho: float
    params: dict = field(default_factory=dict)
    lattice: LatticeSpec | None = None
    atoms: np.ndarray | None = None         # K x d ambient step vectors
    atom_coords: np.ndarray | None = None   # K x d int64 basis coordinates of atom - b
    probs: np.ndarray | None = None

    @property
    def is_lattice(self) -> bool:
        return self.family.is_lattice

    @property
    def packed_bits(self) -> int:
        """Bits per step when the atoms are 2^m equally likely values (m <= 4), else 0."""
        if self.atoms is None:
            return 0
        K = len(self.atoms)
        m = K.bit_length() - 1
        if K < 2 or K != 1 << m or m > 4:
            return 0
        if np.any(np.abs(self.probs - 1.0 / K) > 1e-15):
            return 0
        return m

    @property
    def cdf(self) -> np.ndarray:
        return np.cumsum(self.probs)[:-1]

    def to_dict(self) -> dict:
        d = {"family": self.family.value, "dimension": self.dimension}
        d.update(self.params)
        return d


def _as_matrix(sigma) -> np.ndarray:
    s = np.atleast_2d(np.asarray(sigma, dtype=np.float64))
    if s.shape[0] != s.shape[1]:
        raise NotPositiveDefinite("covariance must be square")
    return s


def _check_spd(s: np.ndarray):
    if not np.allclose(s, s.T, rtol=0, atol=1e-12 * max(1.0, np.abs(s).max())):
        raise NotPositiveDefinite("covariance is not symmetric")
    try:
        np.linalg.cholesky(s)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite("covariance is not positive definite") from exc


# -- third absolute moment ---------------------------------------------------
#
# For s in (1, 2):  x^s = s(s-1)/Gamma(2-s) * int_0^inf (e^{-tx} - 1 + tx) t^{-s-1} dt.
# With Q = |X|^2 and s = 3/2:  rho = E Q^{3/2} = 3/(4 sqrt(pi)) int_0^inf G(t) t^{-5/2} dt,
# G(t) = E[e^{-tQ}] - 1 + t E[Q].  Every built-in family has a stable expression for G.

def _phi(y):
    """e^{-y} - 1 + y, accurate for small y >= 0."""
    y = np.asarray(y, dtype=np.float64)
    out = np.empty_like(y)
    small = y < 0.1
    ys = y[small]
    term = ys * ys / 2.0
    acc = np.zeros_like(ys)
    for k in range(3, 20):
        acc += term
        term = term * (-ys) / k
    out[small] = acc
    out[~small] = np.expm1(-y[~small]) + y[~small]
    return out


def _x_minus_log1p(x):
    """x - log(1 + x), accurate for small x >= 0."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    small = x < 0.1
    xs = x[small]
    acc = np.zeros_like(xs)
    p = xs * xs
    for k in range(2, 30):
        acc += (p / k) if k % 2 == 0 else (-p / k)
        p = p * xs
    out[small] = acc
    out[~small] = x[~small] - np.log1p(x[~small])
    return out


def _rho_from_G(G) -> float:
    c = 3.0 / (4.0 * math.sqrt(math.pi))
    val, _ = integrate.quad(lambda u: G(u * u) / u**4 if u > 0 else 0.0, 0.0, 1.0,
                            epsabs=0.0, epsrel=1e-12, limit=400)
    tail, _ = integrate.quad(lambda u: G(u * u) / u**4, 1.0, np.inf,
                             epsabs=0.0, epsrel=1e-12, limit=400)
    return 2.0 * c * (val + tail)


def _G_gaussian(eigs):
    eigs = np.asarray(eigs, dtype=np.float64)

    def G(t):
        delta = 0.5 * float(np.sum(_x_minus_log1p(2.0 * t * eigs)))
        L = -t * float(np.sum(eigs)) + delta
        return float(_phi(np.array([-L]))[0]) + delta
    return G


def _psi_uniform(t, lo, hi):
    """E phi(t X^2) for X uniform on [lo, hi]."""
    v, _ = integrate.quad(lambda x: float(_phi(np.array([t * x * x]))[0]), lo, hi,
                          epsabs=0.0, epsrel=1e-13, limit=200)
    return v / (hi - lo)


def _G_uniform_products(components):
    """components: list of (weight, [(lo_k, hi_k) per coordinate])."""

    def G(t):
        total = 0.0
        for w, box in components:
            psis = [_psi_uniform(t, lo, hi) for lo, hi in box]
            ys = [p - t * (lo * lo + lo * hi + hi * hi) / 3.0 for p, (lo, hi) in zip(psis, box)]
            e = [1.0] + [0.0] * len(ys)
            for y in ys:
                for r in range(len(ys), 0, -1):
                    e[r] += e[r - 1] * y
            total += w * (sum(psis) + sum(e[2:]))
        return total
    return G


@functools.lru_cache(maxsize=None)
def _unit_box_rho(d: int) -> float:
    if d == 1:
        return 0.25
    return _rho_from_G(_G_uniform_products([(1.0, [(-1.0, 1.0)] * d)]))


def _abs_cube_uniform_1d(lo, hi):
    F = lambda x: x**3 * abs(x) / 4.0  # antiderivative of |x|^3
    return (F(hi) - F(lo)) / (hi - lo)


# -- minimal lattice check ---------------------------------------------------

def _int_det(m) -> int:
    m = [[Fraction(v) for v in row] for row in m]
    n = len(m)
    det = Fraction(1)
    for c in range(n):
        piv = next((r for r in range(c, n) if m[r][c] != 0), None)
        if piv is None:
            return 0
        if piv != c:
            m[c], m[piv] = m[piv], m[c]
            det = -det
        det *= m[c][c]
        for r in range(c + 1, n):
            f = m[r][c] / m[c][c]
            for k in range(c, n):
                m[r][k] -= f * m[c][k]
    return int(det)


def _generates_full_lattice(coords: np.ndarray) -> bool:
    """True iff the atom differences generate Z^d (gcd of all d x d minors is 1)."""
    diffs = [tuple(int(v) for v in row - coords[0]) for row in coords[1:]]
    d = coords.shape[1]
    g = 0
    for rows in itertools.combinations(diffs, d):
        g = math.gcd(g, abs(_int_det(rows)))
        if g == 1:
            return True
    return False


# -- constructors --------------------------------------------------------------

def simple_walk(dimension: int) -> StepDistribution:
    """Uniform steps to the 2d nearest neighbours; atom order +e_1, -e_1, +e_2, ..."""
    d = int(dimension)
    if d < 1:
        raise InvalidSpec("dimension must be >= 1")
    eye = np.eye(d)
    atoms = np.empty((2 * d, d))
    atoms[0::2] = eye
    atoms[1::2] = -eye
    sigma = eye / d
    return StepDistribution(
        family=Family.SIMPLE, dimension=d, mean=np.zeros(d), sigma=sigma,
        sigma_det=float(d) ** (-d), rho=1.0, params={},
        lattice=LatticeSpec(np.eye(d), np.zeros(d), convention="simple"),
        atoms=atoms, atom_coords=atoms.astype(np.int64), probs=np.full(2 * d, 1.0 / (2 * d)))


def lattice_atoms(basis, offset, points, probs) -> StepDistribution:
    lattice = LatticeSpec(basis, offset)
    d = lattice.dimension
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    probs = np.asarray(probs, dtype=np.float64)
    if points.shape[1] != d or len(points) != len(probs):
        raise InvalidSpec("atom table shape does not match the lattice dimension")
    if len(points) < 2:
        raise InvalidSpec("need at least two atoms")
    if np.any(probs <= 0) or abs(math.fsum(probs) - 1.0) > PROB_TOL:
        raise InvalidSpec("atom probabilities must be positive and sum to 1 within 1e-12")
    mean = probs @ points
    if np.any(np.abs(mean) > MEAN_TOL):
        raise InvalidSpec(f"step law is not centered (mean = {mean.tolist()})")
    c = lattice.coords(points, np.ones(len(points)))
    if np.any(np.abs(c - np.round(c)) > LATTICE_TOL):
        raise InvalidSpec("an atom does not lie on Lambda + b")
    coords = np.round(c).astype(np.int64)
    if not _generates_full_lattice(coords):
        raise InvalidSpec("atoms are supported on a proper sub-lattice; choose the minimal lattice")
    sigma = (points * probs[:, None]).T @ points
    _check_spd(sigma)
    rho = float(probs @ np.linalg.norm(points, axis=1) ** 3)
    return StepDistribution(
        family=Family.ATOMS, dimension=d, mean=mean, sigma=sigma,
        sigma_det=float(np.linalg.det(sigma)), rho=rho,
        params={"basis": lattice.basis.tolist(), "offset": lattice.offset.tolist(),
                "atoms": points.tolist(), "probs": probs.tolist()},
        lattice=lattice, atoms=points, atom_coords=coords, probs=probs)


def uniform_box(dimension: int, half_width: float) -> StepDistribution:
    """Independent uniform coordinates on [-c, c]^d."""
    d, c = int(dimension), float(half_width)
    if d < 1 or not c > 0:
        raise InvalidSpec("uniform box needs d >= 1 and half_width > 0")
    sigma = np.eye(d) * c * c / 3.0
    rho = c**3 * _unit_box_rho(d)
    return StepDistribution(Family.UNIFORM, d, np.zeros(d), sigma, float(np.linalg.det(sigma)),
                            rho, params={"half_width": c})


def gaussian(covariance) -> StepDistribution:
    s = _as_matrix(covariance)
    _check_spd(s)
    d = s.shape[0]
    if d == 1:
        rho = 2.0 * math.sqrt(2.0 / math.pi) * s[0, 0] ** 1.5
    else:
        rho = _rho_from_G(_G_gaussian(np.linalg.eigvalsh(s)))
    return StepDistribution(Family.GAUSSIAN, d, np.zeros(d), s, float(np.linalg.det(s)), rho,
                            params={"covariance": s.tolist()})


def uniform_mixture(centers, half_widths, weights) -> StepDistribution:
    """Mixture of uniform cubes ``center_j + [-h_j, h_j]^d`` with weights w_j."""
    centers = np.asarray(centers, dtype=np.float64)
    if centers.ndim == 1:
        centers = centers[:, None]  # 1-d centers given as a flat list
    hw = np.asarray(half_widths, dtype=np.float64).ravel()
    w = np.asarray(weights, dtype=np.float64).ravel()
    J, d = centers.shape
    if len(hw) != J or len(w) != J:
        raise InvalidSpec("mixture: centers, half_widths and weights must have equal length")
    if np.any(hw <= 0) or np.any(w <= 0) or abs(math.fsum(w) - 1.0) > PROB_TOL:
        raise InvalidSpec("mixture: half widths and weights must be positive, weights sum to 1")
    mean = w @ centers
    if np.any(np.abs(mean) > MEAN_TOL):
        raise InvalidSpec(f"step law is not centered (mean = {mean.tolist()})")
    sigma = sum(wj * (np.outer(m, m) + np.eye(d) * h * h / 3.0) for wj, m, h in zip(w, centers, hw))
    _check_spd(sigma)
    if d == 1:
        rho = float(sum(wj * _abs_cube_uniform_1d(m[0] - h, m[0] + h)
                        for wj, m, h in zip(w, centers, hw)))
    else:
        comps = [(wj, [(mk - h, mk + h) for mk in m]) for wj, m, h in zip(w, centers, hw)]
        rho = _rho_from_G(_G_uniform_products(comps))
    return StepDistribution(Family.MIXTURE, d, mean, sigma, float(np.linalg.det(sigma)), rho,
                            params={"centers": centers.tolist(), "half_widths": hw.tolist(),
                                    "weights": w.tolist()})


def from_dict(d: dict) -> StepDistribution:
    family = Family(d["family"])
    if family is Family.SIMPLE:
        return simple_walk(d["dimension"])
    if family is Family.ATOMS:
        return lattice_atoms(d["basis"], d["offset"], d["atoms"], d["probs"])
    if family is Family.UNIFORM:
        return uniform_box(d["dimension"], d["half_width"])
    if family is Family.GAUSSIAN:
        return gaussian(d["covariance"])
    if family is Family.MIXTURE:
        return uniform_mixture(d["centers"], d["half_widths"], d["weights"])
    raise UnsupportedFamily(str(d.get("family")))


# -- operations ----------------------------------------------------------------

def moments(dist: StepDistribution):
    """(mean, covariance, E|X|^3), all exact for the built-in families."""
    if not isinstance(dist, StepDistribution) or not isinstance(dist.family, Family):
        raise UnsupportedFamily(f"not a built-in step law: {dist!r}")
    return dist.mean.copy(), dist.sigma.copy(), dist.rho


def whitening(sigma) -> WhiteningMap:
    """W = L^{-1} for the Cholesky factor Sigma = L L^T, so W Sigma W^T = I."""
    s = _as_matrix(sigma)
    if not np.allclose(s, s.T, rtol=0, atol=1e-12 * max(1.0, np.abs(s).max())):
        raise NotPositiveDefinite("covariance is not symmetric")
    try:
        L = np.linalg.cholesky(s)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite("covariance is not positive definite") from exc
    W = np.linalg.solve(L, np.eye(s.shape[0]))
    W = np.tril(W)
    return WhiteningMap(matrix=W, inverse=L)


def third_moment_whitened_bound(dist: StepDistribution) -> float:
    """Upper bound on E|W X|^3: exact in d = 1, rho * lambda_min^{-3/2} otherwise."""
    if dist.dimension == 1:
        return dist.rho / dist.sigma[0, 0] ** 1.5
    lam = float(np.linalg.eigvalsh(dist.sigma)[0])
    return dist.rho * lam ** -1.5


def step_indices(dist: StepDistribution, stream, size: int) -> np.ndarray:
    """Atom indices for ``size`` consecutive steps of a lattice law."""
    bits = dist.packed_bits
    if bits:
        spw = 64 // bits
        words = stream.raw(-(-size // spw))
        return kernels.decode_packed(words, bits, size)
    words = stream.raw(size)
    return kernels.decode_table(words, dist.cdf, size)


def sample(dist: StepDistribution, stream, size: int) -> np.ndarray:
    """``size`` consecutive steps as a (size, d) array.

    Every family draws through a single sequential primitive, so the first k
    rows never depend on ``size``.
    """
    d = dist.dimension
    if dist.is_lattice:
        return dist.atoms[step_indices(dist, stream, size)]
    g = stream.generator
    if dist.family is Family.UNIFORM:
        c = dist.params["half_width"]
        return (2.0 * g.random((size, d)) - 1.0) * c
    if dist.family is Family.GAUSSIAN:
        L = np.linalg.cholesky(dist.sigma)
        return g.standard_normal((size, d)) @ L.T
    if dist.family is Family.MIXTURE:
        u = g.random((size, d + 1))
        w = np.asarray(dist.params["weights"])
        j = np.searchsorted(np.cumsum(w)[:-1], u[:, 0], side="right")
        centers = np.asarray(dist.params["centers"])
        hw = np.asarray(dist.params["half_widths"])
        return centers[j] + (2.0 * u[:, 1:] - 1.0) * hw[j, None]
    raise UnsupportedFamily(dist.family)


def sample_step(dist: StepDistribution, stream) -> np.ndarray:
    return sample(dist, stream, 1)[0]
