"""Scaled monomial bases, quadrature, Grams and L2 projections."""

import math

import numpy as np
import pytest

import oracles
from polydarcy import polymesh
from polydarcy.polybasis import (
    GkPerpBasis,
    cell_basis,
    edge_basis,
    edge_quadrature,
    gk_perp_basis,
    gk_perp_dimension,
    gradient_coefficient_matrix,
    l2_project_function,
    mass_matrix,
    monomial_exponents,
    monomial_index,
    n_monomials,
    polygon_quadrature,
    vector_mass_matrix,
)

UNIT_SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
PENTAGON = np.array([[0.0, 0.0], [1.1, -0.1], [1.4, 0.8], [0.6, 1.3], [-0.2, 0.9]])


def test_monomial_counts_and_order():
    assert [n_monomials(k) for k in range(-1, 5)] == [0, 1, 3, 6, 10, 15]
    assert monomial_exponents(2) == ((0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2))
    for i, (a, b) in enumerate(monomial_exponents(4)):
        assert monomial_index(a, b) == i


def test_cell_basis_scaling_on_unit_square():
    basis = cell_basis(UNIT_SQUARE, 3)
    assert len(basis) == 10
    assert basis.diameter == pytest.approx(math.sqrt(2.0))
    assert np.allclose(basis.center, [0.5, 0.5])
    # member (1, 0) at the corner (1, 1): (1 - 1/2) / sqrt(2)
    vals = basis.evaluate(np.array([[1.0, 1.0]]))
    assert vals[monomial_index(1, 0), 0] == pytest.approx(0.353553, abs=1e-6)
    assert vals[0, 0] == 1.0


def test_cell_basis_gradients_match_differences():
    basis = cell_basis(PENTAGON, 3)
    pts = np.array([[0.4, 0.3], [0.9, 0.7]])
    h = 1e-6
    grads = basis.evaluate_gradient(pts)
    for d, step in enumerate([np.array([h, 0.0]), np.array([0.0, h])]):
        fd = (basis.evaluate(pts + step) - basis.evaluate(pts - step)) / (2 * h)
        assert np.abs(grads[:, :, d] - fd).max() < 1e-8


def test_edge_basis_endpoint_value():
    eb = edge_basis([0.0, 0.0], [1.0, 0.0], 2)
    vals = eb.evaluate(np.array([[1.0, 0.0], [0.5, 0.0], [0.0, 0.0]]))
    assert vals[1] == pytest.approx([0.5, 0.0, -0.5])
    assert vals[0] == pytest.approx([1.0, 1.0, 1.0])
    assert vals[2] == pytest.approx([0.25, 0.0, 0.25])


def test_edge_mass_matrix_matches_quadrature():
    eb = edge_basis([0.2, -0.1], [0.9, 0.6], 3)
    pts, w = edge_quadrature([0.2, -0.1], [0.9, 0.6], 8)
    vals = eb.evaluate(pts)
    gram = (vals * w) @ vals.T
    assert np.abs(gram - eb.mass_matrix()).max() < 1e-14


def test_quadrature_integrates_xy_on_unit_square():
    quad = polygon_quadrature(UNIT_SQUARE, 2)
    val = float(quad.weights @ (quad.points[:, 0] * quad.points[:, 1]))
    assert val == pytest.approx(0.25, abs=1e-14)


@pytest.mark.parametrize("coords", [
    UNIT_SQUARE,
    PENTAGON,
    np.array([[0.0, 0.0], [1.0, 0.0], [0.3, 0.9]]),
])
@pytest.mark.parametrize("degree", [1, 3, 6])
def test_quadrature_exactness_against_closed_form(coords, degree):
    quad = polygon_quadrature(coords, degree)
    assert np.all(quad.weights > 0.0)
    area = abs(polymesh.polygon_area(coords))
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            num = float(quad.weights
                        @ (quad.points[:, 0] ** a * quad.points[:, 1] ** b))
            ref = oracles.polygon_monomial_integral(coords, a, b)
            assert abs(num - ref) < 1e-13 * max(area, 1.0), (a, b)


def test_mass_matrix_k0_is_area():
    assert mass_matrix(UNIT_SQUARE, 0) == pytest.approx(np.array([[1.0]]))


def test_mass_matrix_spd_and_matches_oracle():
    k = 3
    gram = mass_matrix(PENTAGON, k)
    assert np.abs(gram - gram.T).max() < 1e-15
    assert np.linalg.eigvalsh(gram).min() > 0.0
    basis = cell_basis(PENTAGON, k)
    pts, w = oracles.polygon_gauss(PENTAGON, n=10)
    vals = basis.evaluate(pts)
    ref = (vals * w) @ vals.T
    assert np.abs(gram - ref).max() < 1e-13


def test_gk_perp_dimensions():
    # complement of gradients inside (P_k)^2: 2 pi_k - pi_{k+1} + 1
    assert [gk_perp_dimension(k) for k in range(5)] == [0, 1, 3, 6, 10]


def test_gk_perp_k0_is_empty():
    gkp = gk_perp_basis(UNIT_SQUARE, 0)
    assert gkp.dim == 0


def test_gk_perp_k1_spans_rotation_on_square():
    square = np.array([[-0.5, -0.5], [0.5, -0.5], [0.5, 0.5], [-0.5, 0.5]])
    gkp = gk_perp_basis(square, 1)
    assert gkp.dim == 1
    pts = np.array([[0.1, 0.2], [-0.3, 0.25], [0.4, -0.1]])
    vals = gkp.evaluate(pts)[0]
    rot = np.column_stack([-pts[:, 1], pts[:, 0]])
    ratios = vals / rot
    assert np.abs(ratios - ratios[0, 0]).max() < 1e-12


@pytest.mark.parametrize("k", [1, 2, 3])
def test_gk_perp_orthogonal_to_gradients_and_orthonormal(k):
    gkp = gk_perp_basis(PENTAGON, k)
    assert gkp.dim == gk_perp_dimension(k)
    quad = polygon_quadrature(PENTAGON, 2 * k + 2)
    gvals = gkp.evaluate(quad.points)
    basis = cell_basis(PENTAGON, k + 1)
    mgrads = basis.evaluate_gradient(quad.points)
    area = abs(polymesh.polygon_area(PENTAGON))
    for i in range(gkp.dim):
        for j in range(1, len(basis)):
            pair = float(quad.weights @ (gvals[i] * mgrads[j]).sum(axis=1))
            assert abs(pair) < 1e-10 * area
    gram = np.einsum("q,iqd,jqd->ij", quad.weights, gvals, gvals)
    assert np.abs(gram - np.eye(gkp.dim)).max() < 1e-10


def test_gradient_coefficient_matrix_is_exact():
    basis = cell_basis(PENTAGON, 2)
    emat = gradient_coefficient_matrix(2, basis.diameter)
    pts = np.array([[0.3, 0.4], [0.8, 0.1], [0.5, 0.9]])
    lower = cell_basis(PENTAGON, 1)
    vals = lower.evaluate(pts)
    grads = basis.evaluate_gradient(pts)
    nk = len(lower)
    for j in range(len(basis)):
        gx = emat[:nk, j] @ vals
        gy = emat[nk:, j] @ vals
        assert np.abs(np.column_stack([gx, gy]) - grads[j]).max() < 1e-13


def test_vector_mass_matrix_blocks():
    gram = mass_matrix(PENTAGON, 1)
    vec = vector_mass_matrix(gram)
    n = gram.shape[0]
    assert np.array_equal(vec[:n, :n], gram)
    assert np.array_equal(vec[n:, n:], gram)
    assert np.all(vec[:n, n:] == 0.0)


def test_l2_projection_reproduces_polynomials():
    basis = cell_basis(PENTAGON, 2)
    coeffs = np.array([0.3, -1.2, 0.7, 2.0, -0.4, 1.1])

    def poly(pts):
        return coeffs @ basis.evaluate(pts)

    out = l2_project_function(PENTAGON, 2, poly)
    assert np.abs(out - coeffs).max() < 1e-12


def test_l2_projection_idempotent():
    k = 2

    def f(pts):
        return np.sin(pts[:, 0]) * np.exp(pts[:, 1])

    once = l2_project_function(PENTAGON, k, f)
    basis = cell_basis(PENTAGON, k)

    def projected(pts):
        return once @ basis.evaluate(pts)

    twice = l2_project_function(PENTAGON, k, projected)
    assert np.abs(twice - once).max() < 1e-12


def test_l2_projection_of_sine_matches_dense_oracle():
    k = 2
    out = l2_project_function(UNIT_SQUARE, k, lambda pts: np.sin(pts[:, 0]))
    basis = cell_basis(UNIT_SQUARE, k)
    pts, w = oracles.polygon_gauss(UNIT_SQUARE, n=12)  # degree-12 class rule
    vals = basis.evaluate(pts)
    gram = (vals * w) @ vals.T
    rhs = vals @ (w * np.sin(pts[:, 0]))
    ref = oracles.cholesky_solve(gram, rhs)
    assert np.abs(out - ref).max() < 1e-10


def test_l2_projection_orthogonality():
    k = 2

    def f(pts):
        return np.cos(2.0 * pts[:, 0]) + pts[:, 1] ** 4

    coeffs = l2_project_function(PENTAGON, k, f, quad=polygon_quadrature(PENTAGON, 14))
    basis = cell_basis(PENTAGON, k)
    quad = polygon_quadrature(PENTAGON, 14)
    vals = basis.evaluate(quad.points)
    residual = f(quad.points) - coeffs @ vals
    # the projection error is L2-orthogonal to every member of P_k
    pairs = vals @ (quad.weights * residual)
    assert np.abs(pairs).max() < 1e-10
