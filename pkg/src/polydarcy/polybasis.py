"""Scaled polynomial bases and quadrature on polygons and edges.

Cell polynomials are spanned by scaled monomials

    m_alpha(x) = ((x - x_D)/h_D)^alpha,   |alpha| <= k,

ordered graded-lexicographically: (0,0), (1,0), (0,1), (2,0), (1,1),
(0,2), ...  with x_D the polygon centroid and h_D its diameter.  Edge
polynomials use the signed arclength from the edge midpoint scaled by the
edge length, measured along the globally stored tangent so that moments on a
shared edge mean the same thing to both incident cells.

Quadrature on a polygon fans it into triangles around a star point and maps
a Gauss-Jacobi x Gauss-Legendre tensor rule through the collapsed-square
transform, giving positive weights and exactness up to the requested degree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import cho_factor, cho_solve, null_space
from scipy.special import roots_jacobi, roots_legendre

from .polymesh import polygon_centroid, polygon_diameter, star_point


def n_monomials(k: int) -> int:
    """Dimension of P_k in two variables: (k+1)(k+2)/2.  Zero for k < 0."""
    if k < 0:
        return 0
    return (k + 1) * (k + 2) // 2


@lru_cache(maxsize=None)
def monomial_exponents(k: int) -> tuple[tuple[int, int], ...]:
    """Graded-lex exponent pairs (a, b) for all |a + b| <= k."""
    out = []
    for d in range(k + 1):
        for b in range(d + 1):
            out.append((d - b, b))
    return tuple(out)


@lru_cache(maxsize=None)
def monomial_index(a: int, b: int) -> int:
    """Position of x^a y^b in the graded-lex ordering."""
    d = a + b
    return d * (d + 1) // 2 + b


@dataclass
class ScaledMonomialBasis:
    """Monomials ((x - center)/diameter)^alpha up to a total degree."""

    center: np.ndarray
    diameter: float
    degree: int

    def __post_init__(self):
        self.exponents = np.array(monomial_exponents(self.degree), dtype=np.int64)

    def __len__(self) -> int:
        return n_monomials(self.degree)

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Values of all members at points (n, 2); returns (n_members, n)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        xi = (pts[:, 0] - self.center[0]) / self.diameter
        eta = (pts[:, 1] - self.center[1]) / self.diameter
        xpow = np.vstack([xi ** a for a in range(self.degree + 1)])
        ypow = np.vstack([eta ** b for b in range(self.degree + 1)])
        return np.array([xpow[a] * ypow[b] for a, b in self.exponents])

    def evaluate_gradient(self, points: np.ndarray) -> np.ndarray:
        """Gradients of all members at points; returns (n_members, n, 2)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        vals = self.evaluate(pts)
        n = vals.shape[1]
        grads = np.zeros((len(self), n, 2))
        h = self.diameter
        for j, (a, b) in enumerate(self.exponents):
            if a > 0:
                grads[j, :, 0] = (a / h) * vals[monomial_index(a - 1, b)]
            if b > 0:
                grads[j, :, 1] = (b / h) * vals[monomial_index(a, b - 1)]
        return grads

    def gradient_coefficients(self) -> tuple[np.ndarray, np.ndarray]:
        """(Dx, Dy) with Dx[i, j] = coefficient of m_i in d(m_j)/dx.

        Both are (n_members, n_members); differentiation lowers the degree,
        so rows beyond degree-1 members are zero.
        """
        m = len(self)
        dx = np.zeros((m, m))
        dy = np.zeros((m, m))
        h = self.diameter
        for j, (a, b) in enumerate(self.exponents):
            if a > 0:
                dx[monomial_index(a - 1, b), j] = a / h
            if b > 0:
                dy[monomial_index(a, b - 1), j] = b / h
        return dx, dy


def cell_basis(coords: np.ndarray, k: int) -> ScaledMonomialBasis:
    """Scaled monomial basis of a polygon: centroid center, diameter scale."""
    return ScaledMonomialBasis(
        center=polygon_centroid(coords),
        diameter=polygon_diameter(coords),
        degree=k,
    )


@dataclass
class EdgeBasis:
    """Scaled monomials of the signed arclength along an oriented segment."""

    start: np.ndarray
    end: np.ndarray
    degree: int

    def __post_init__(self):
        self.midpoint = 0.5 * (self.start + self.end)
        d = self.end - self.start
        self.length = float(math.hypot(d[0], d[1]))
        self.tangent = d / self.length

    def __len__(self) -> int:
        return self.degree + 1

    def params(self, points: np.ndarray) -> np.ndarray:
        """Scaled signed arclength s in [-1/2, 1/2] of points on the edge."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        rel = pts - self.midpoint
        return (rel @ self.tangent) / self.length

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        s = self.params(points)
        return np.vstack([s ** b for b in range(self.degree + 1)])

    def mass_matrix(self) -> np.ndarray:
        """Exact edge Gram: int_f s^p ds = |f| (1/2)^p / (p+1) for even p."""
        n = self.degree + 1
        mat = np.zeros((n, n))
        for i in range(n):
            for j in range(n):
                p = i + j
                if p % 2 == 0:
                    mat[i, j] = self.length * 0.5 ** p / (p + 1)
        return mat


def edge_basis(start: np.ndarray, end: np.ndarray, k: int) -> EdgeBasis:
    return EdgeBasis(np.asarray(start, float), np.asarray(end, float), k)


@lru_cache(maxsize=None)
def _gauss_legendre01(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = roots_legendre(n)
    return (x + 1.0) / 2.0, w / 2.0


@lru_cache(maxsize=None)
def _gauss_jacobi01(n: int) -> tuple[np.ndarray, np.ndarray]:
    # weight (1 - x) on [0, 1]: from Jacobi weight (1 - t)^1 (1 + t)^0 on [-1, 1]
    x, w = roots_jacobi(n, 1.0, 0.0)
    return (x + 1.0) / 2.0, w / 4.0


def edge_quadrature(start, end, npoints: int):
    """Gauss-Legendre nodes on a segment; returns (points (n,2), weights)."""
    start = np.asarray(start, float)
    end = np.asarray(end, float)
    t, w = _gauss_legendre01(npoints)
    pts = start[None, :] + t[:, None] * (end - start)[None, :]
    length = math.hypot(*(end - start))
    return pts, w * length


@dataclass
class PolyQuadrature:
    """Positive-weight quadrature exact for polynomials up to `degree`."""

    points: np.ndarray
    weights: np.ndarray
    degree: int


def polygon_quadrature(coords: np.ndarray, degree: int) -> PolyQuadrature:
    """Quadrature on a star-shaped polygon, exact to the requested degree.

    The polygon is fanned into triangles from a star point; each triangle is
    integrated by the collapsed-square map (a, b) -> (a, b(1-a)) whose
    Jacobian (1-a) is absorbed into a Gauss-Jacobi rule, so all weights stay
    positive on any admissible cell.
    """
    coords = np.asarray(coords, dtype=float)
    center = star_point(coords)
    n1 = max(1, (degree + 2 + 1) // 2)  # Jacobi direction carries degree+1
    a, wa = _gauss_jacobi01(n1)
    n2 = max(1, (degree + 1 + 1) // 2)
    b, wb = _gauss_legendre01(n2)
    # reference-triangle nodes (u, v): u = a, v = b (1 - a)
    u = np.repeat(a, n2)
    v = (b[None, :] * (1.0 - a[:, None])).ravel()
    wt = (wa[:, None] * wb[None, :]).ravel()

    nvert = len(coords)
    pts_all = []
    w_all = []
    for i in range(nvert):
        p1 = coords[i]
        p2 = coords[(i + 1) % nvert]
        e1 = p1 - center
        e2 = p2 - center
        jac = e1[0] * e2[1] - e1[1] * e2[0]  # 2 * signed triangle area
        if jac == 0.0:
            continue
        pts = center[None, :] + np.outer(u, e1) + np.outer(v, e2)
        pts_all.append(pts)
        w_all.append(wt * jac)
    points = np.vstack(pts_all)
    weights = np.concatenate(w_all)
    return PolyQuadrature(points=points, weights=weights, degree=degree)


def mass_matrix(coords: np.ndarray, k: int, quad: PolyQuadrature | None = None) -> np.ndarray:
    """Gram matrix of the scaled monomials of degree <= k on the polygon."""
    basis = cell_basis(coords, k)
    if quad is None or quad.degree < 2 * k:
        quad = polygon_quadrature(coords, 2 * k)
    vals = basis.evaluate(quad.points)
    return (vals * quad.weights) @ vals.T


@dataclass
class GkPerpBasis:
    """L2-orthonormal basis of the complement of gradients in (P_k)^2.

    Members are columns of `coeffs`: vector polynomials sum_j coeffs[j, i] g_j
    where g_j runs over (m_j, 0) for j < pi_k then (0, m_j).  The complement
    is of dimension 2 pi_k - pi_{k+1} + 1 and is empty for k = 0.
    """

    basis: ScaledMonomialBasis
    coeffs: np.ndarray

    @property
    def dim(self) -> int:
        return self.coeffs.shape[1]

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Values (dim, n, 2) of all members at the given points."""
        vals = self.basis.evaluate(points)
        nk = len(self.basis)
        out = np.empty((self.dim, vals.shape[1], 2))
        for i in range(self.dim):
            out[i, :, 0] = self.coeffs[:nk, i] @ vals
            out[i, :, 1] = self.coeffs[nk:, i] @ vals
        return out


def gk_perp_dimension(k: int) -> int:
    return 2 * n_monomials(k) - n_monomials(k + 1) + 1


def vector_mass_matrix(mass_k: np.ndarray) -> np.ndarray:
    """Block-diagonal Gram of the vector monomial basis (x then y block)."""
    nk = mass_k.shape[0]
    out = np.zeros((2 * nk, 2 * nk))
    out[:nk, :nk] = mass_k
    out[nk:, nk:] = mass_k
    return out


def gradient_coefficient_matrix(k: int, diameter: float) -> np.ndarray:
    """E with E[:, j] = coefficients of grad m_j in the vector basis of P_{k-1}...

    Columns run over the degree-k cell monomials (pi_k of them); rows are the
    2 pi_{k-1} vector monomials.  Used with k+1-degree bases to express exact
    gradients of the pressure space.
    """
    cols = monomial_exponents(k)
    nk = n_monomials(k - 1)
    e = np.zeros((2 * nk, len(cols)))
    for j, (a, b) in enumerate(cols):
        if a > 0:
            e[monomial_index(a - 1, b), j] = a / diameter
        if b > 0:
            e[nk + monomial_index(a, b - 1), j] = b / diameter
    return e


def gk_perp_basis(coords: np.ndarray, k: int, quad: PolyQuadrature | None = None) -> GkPerpBasis:
    """Construct the orthonormal complement basis on one polygon.

    The complement is the kernel of the pairing of (P_k)^2 against exact
    gradients of P_{k+1}; an SVD nullspace is orthonormalized in the L2(P)
    inner product by a Cholesky factor of its small Gram matrix.  Raises if
    the numerical rank disagrees with 2 pi_k - pi_{k+1} + 1.
    """
    basis = cell_basis(coords, k)
    expected = gk_perp_dimension(k)
    if expected == 0:
        return GkPerpBasis(basis=basis, coeffs=np.zeros((2 * len(basis), 0)))
    if quad is None or quad.degree < 2 * k:
        quad = polygon_quadrature(coords, 2 * k)
    mk = mass_matrix(coords, k, quad)
    mvec = vector_mass_matrix(mk)
    e = gradient_coefficient_matrix(k + 1, basis.diameter)[:, 1:]  # drop constant
    constraints = e.T @ mvec
    nullsp = null_space(constraints)
    if nullsp.shape[1] != expected:
        raise ValueError(
            f"gradient-complement rank {nullsp.shape[1]} != expected {expected}; "
            "degenerate cell geometry or broken quadrature"
        )
    gram = nullsp.T @ mvec @ nullsp
    c, low = cho_factor(gram, lower=False)
    r_inv = np.linalg.inv(np.triu(c))
    coeffs = nullsp @ r_inv
    return GkPerpBasis(basis=basis, coeffs=coeffs)


def l2_project_function(
    coords: np.ndarray,
    k: int,
    func,
    quad: PolyQuadrature | None = None,
) -> np.ndarray:
    """Coefficients of the L2(P) projection of a scalar function onto P_k."""
    basis = cell_basis(coords, k)
    if quad is None:
        # data term needs headroom beyond the Gram's 2k exactness
        quad = polygon_quadrature(coords, 2 * k + 8)
    vals = basis.evaluate(quad.points)
    fvals = np.asarray(func(quad.points), dtype=float)
    rhs = vals @ (quad.weights * fvals)
    mk = (vals * quad.weights) @ vals.T
    c, low = cho_factor(mk)
    return cho_solve((c, low), rhs)
