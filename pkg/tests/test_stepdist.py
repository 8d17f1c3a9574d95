import math

import numpy as np
import pytest

from recurlab.errors import InvalidSpec, NotPositiveDefinite, UnsupportedFamily
from recurlab.stepdist import (from_dict, gaussian, lattice_atoms, moments, sample, simple_walk,
                               third_moment_whitened_bound, uniform_box, uniform_mixture, whitening)
from recurlab.streams import RngStream

# E|X|^3 reference values from mpmath quadrature at 30 digits
RHO_GAUSS_DIAG41 = 15.884357052742943
RHO_UNIT_SQUARE = 0.62718078488351472


def rademacher_atoms():
    # +-1 lives on the translated lattice 2Z + 1
    return lattice_atoms([[2.0]], [1.0], [[1.0], [-1.0]], [0.5, 0.5])


def test_rademacher_moments():
    for dist in (simple_walk(1), rademacher_atoms()):
        mean, cov, rho = moments(dist)
        assert mean[0] == 0 and cov[0, 0] == 1 and rho == 1


def test_planar_simple_moments():
    d = simple_walk(2)
    np.testing.assert_allclose(d.sigma, np.eye(2) / 2)
    assert d.sigma_det == 0.25 and d.rho == 1


def test_gaussian_third_moment():
    assert gaussian([[4, 0], [0, 1]]).rho == pytest.approx(RHO_GAUSS_DIAG41, rel=1e-12)
    # isotropic closed forms: E|Z|^3 = 2^{3/2} Gamma((d+3)/2) / Gamma(d/2)
    for d in (1, 2, 3):
        exact = 2**1.5 * math.gamma((d + 3) / 2) / math.gamma(d / 2)
        assert gaussian(np.eye(d)).rho == pytest.approx(exact, rel=1e-12)


def test_gaussian_third_moment_monte_carlo():
    dist = gaussian([[4, 0], [0, 1]])
    r3 = np.concatenate([np.linalg.norm(sample(dist, RngStream(11, k), 10**6), axis=1) ** 3
                         for k in range(10)])
    assert abs(r3.mean() - dist.rho) < 3 * r3.std() / math.sqrt(r3.size)


def test_uniform_third_moment():
    assert uniform_box(1, 2.0).rho == pytest.approx(2.0**3 / 4, rel=1e-14)
    assert uniform_box(2, 1.0).rho == pytest.approx(RHO_UNIT_SQUARE, rel=1e-12)
    assert uniform_box(2, 3.0).rho == pytest.approx(27 * RHO_UNIT_SQUARE, rel=1e-12)


def test_mixture_third_moment():
    # halves of [-1.5, -0.5] and [0.5, 1.5]: E|X|^3 = (1.5^4 - 0.5^4) / 4 = 1.25
    d = uniform_mixture([[-1.0], [1.0]], [0.5, 0.5], [0.5, 0.5])
    assert d.rho == pytest.approx(1.25, rel=1e-14)
    assert d.sigma[0, 0] == pytest.approx(1 + 0.25 / 3, rel=1e-14)


@pytest.mark.parametrize("sigma", [np.eye(2), np.diag([4.0, 1.0]), [[2.0, 1.0], [1.0, 2.0]],
                                   np.diag([1e6, 1.0])])
def test_whitening(sigma):
    s = np.asarray(sigma, dtype=float)
    W = whitening(s).matrix
    np.testing.assert_allclose(W @ s @ W.T, np.eye(len(s)), atol=1e-10)


def test_whitening_diag():
    np.testing.assert_allclose(whitening(np.diag([4.0, 1.0])).matrix, np.diag([0.5, 1.0]))


def test_whitened_third_moment_bound():
    assert third_moment_whitened_bound(uniform_box(1, 3**0.5)) == pytest.approx(
        (3**0.5) ** 3 / 4, rel=1e-14)
    d = gaussian([[4, 0], [0, 1]])
    assert third_moment_whitened_bound(d) == pytest.approx(d.rho, rel=1e-14)


@pytest.mark.parametrize("bad", [[[1, 2], [2, 1]], [[1, 0], [0, 0]], [[1, 0.5], [0.4, 1]]])
def test_not_positive_definite(bad):
    with pytest.raises(NotPositiveDefinite):
        whitening(bad)
    with pytest.raises((NotPositiveDefinite, InvalidSpec)):
        gaussian(bad)


def test_atom_validation():
    with pytest.raises(InvalidSpec, match="centered"):
        lattice_atoms([[1.0]], [0.0], [[1.0], [-1.0]], [0.6, 0.4])
    with pytest.raises(InvalidSpec):
        lattice_atoms([[1.0]], [0.0], [[1.0], [-1.0]], [0.5, 0.4])
    with pytest.raises(InvalidSpec, match="sub-lattice"):
        lattice_atoms([[1.0]], [0.0], [[2.0], [-2.0]], [0.5, 0.5])
    with pytest.raises(InvalidSpec, match="Lambda"):
        lattice_atoms([[1.0]], [0.0], [[0.5], [-0.5]], [0.5, 0.5])


def test_unknown_family():
    with pytest.raises((UnsupportedFamily, ValueError)):
        from_dict({"family": "cauchy"})


FAMILIES = {
    "simple1": simple_walk(1),
    "simple2": simple_walk(2),
    "simple3": simple_walk(3),
    "atoms3": lattice_atoms([[1.0]], [0.0], [[1.0], [0.0], [-1.0]], [0.25, 0.5, 0.25]),
    "hex": lattice_atoms([[1.0, 0.0], [0.5, 3**0.5 / 2]], [0.0, 0.0],
                         [[1, 0], [-1, 0], [0.5, 3**0.5 / 2], [-0.5, -(3**0.5) / 2],
                          [-0.5, 3**0.5 / 2], [0.5, -(3**0.5) / 2]], [1 / 6] * 6),
    "uniform": uniform_box(2, 3**0.5),
    "gauss": gaussian([[2.0, 0.5], [0.5, 1.0]]),
    "mixture": uniform_mixture([[-1.0, 0.0], [1.0, 0.0]], [0.5, 0.5], [0.5, 0.5]),
}


@pytest.mark.parametrize("name", sorted(FAMILIES))
def test_sample_moments(name):
    dist = FAMILIES[name]
    x = sample(dist, RngStream(2024), 10**6)
    se_mean = x.std(axis=0) / 1000
    assert np.all(np.abs(x.mean(axis=0)) <= 4 * se_mean + 1e-15)
    outer = x[:, :, None] * x[:, None, :]
    se_cov = outer.reshape(len(x), -1).std(axis=0).reshape(outer.shape[1:]) / 1000
    assert np.all(np.abs(outer.mean(axis=0) - dist.sigma) <= 4 * se_cov + 1e-15)


def test_uniform_identity_covariance():
    x = sample(uniform_box(2, 3**0.5), RngStream(8), 10**6)
    assert np.all(np.abs(x.T @ x / len(x) - np.eye(2)) <= 3 / 1000)


@pytest.mark.parametrize("name", sorted(FAMILIES))
def test_sample_prefix(name):
    dist = FAMILIES[name]
    a = sample(dist, RngStream(3, 4), 1000)
    b = sample(dist, RngStream(3, 4), 37)
    np.testing.assert_array_equal(a[:37], b)


def test_lattice_support():
    x = sample(FAMILIES["simple2"], RngStream(1), 5000)
    assert set(map(tuple, x.astype(int))) == {(1, 0), (-1, 0), (0, 1), (0, -1)}
    x = sample(rademacher_atoms(), RngStream(1), 5000)
    assert set(x[:, 0]) == {-1.0, 1.0}


def test_simple_walk_cell_volume():
    # checkerboard coset of Z^d
    assert simple_walk(1).lattice.covolume == 2.0
    assert simple_walk(2).lattice.covolume == 2.0
    assert rademacher_atoms().lattice.covolume == 2.0
