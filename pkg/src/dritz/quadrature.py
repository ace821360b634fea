"""Quadrature rules and orthonormal polynomial bases on reference simplices.

Reference cells are the unit interval [0, 1] and the triangle with vertices
(0, 0), (1, 0), (0, 1).
"""

from functools import cached_property

import numpy as np
from numpy.polynomial.legendre import leggauss

REFERENCE_MEASURE = {1: 1.0, 2: 0.5}


def gauss_interval(degree):
    """Gauss-Legendre rule on [0, 1] exact for polynomials of the given degree.

    Returns ``(points, weights)`` with points of shape ``(n, 1)``. The rule
    always has an even number of nodes, so the interval midpoint is never a
    node.
    """
    n = degree // 2 + 1
    n += n % 2
    x, w = leggauss(n)
    return (0.5 * (x + 1.0))[:, None], 0.5 * w


def gauss_triangle(degree):
    """Collapsed (Duffy) Gauss rule on the reference triangle.

    The collapse ``(s, t) -> (s, t (1 - s))`` adds one polynomial degree in
    ``s``, so the outer rule is taken one degree higher.
    """
    s, ws = gauss_interval(degree + 1)
    t, wt = gauss_interval(degree)
    s, t = s[:, 0], t[:, 0]
    S, T = np.meshgrid(s, t, indexing="ij")
    pts = np.column_stack([S.ravel(), (T * (1.0 - S)).ravel()])
    wts = (np.outer(ws * (1.0 - s), wt)).ravel()
    return pts, wts


def reference_rule(dim, degree):
    if dim == 1:
        return gauss_interval(degree)
    if dim == 2:
        return gauss_triangle(degree)
    raise ValueError(f"unsupported dimension {dim}")


def monomial_exponents(dim, k):
    """Exponent tuples of all monomials of total degree <= k, graded order."""
    if dim == 1:
        return [(a,) for a in range(k + 1)]
    return [(a, t - a) for t in range(k + 1) for a in range(t, -1, -1)]


def local_dimension(dim, k):
    return k + 1 if dim == 1 else (k + 1) * (k + 2) // 2


class ReferenceBasis:
    """Orthogonal polynomial basis of P_k on a reference simplex.

    Monomials centred at the reference centroid are orthogonalised by a
    Cholesky factorisation of their Gram matrix. The basis is scaled so
    that ``int phi_i phi_j = |ref| delta_ij``; the first function is the
    constant 1.
    """

    def __init__(self, dim, degree):
        if degree < 0:
            raise ValueError("degree must be >= 0")
        self.dim = dim
        self.degree = degree
        self.exponents = np.array(monomial_exponents(dim, degree))
        self.size = len(self.exponents)
        self.centroid = np.full(dim, 1.0 / (dim + 1))

    @cached_property
    def coefficients(self):
        pts, wts = reference_rule(self.dim, 2 * self.degree + 2)
        mono = self._monomials(pts)
        gram = mono.T @ (wts[:, None] * mono) / REFERENCE_MEASURE[self.dim]
        L = np.linalg.cholesky(gram)
        # phi = mono @ C with C = L^{-T} gives C^T G C = I
        C = np.linalg.solve(L, np.eye(self.size)).T
        return C

    def _monomials(self, pts):
        z = np.asarray(pts, dtype=float) - self.centroid
        out = np.ones((z.shape[0], self.size))
        for j, e in enumerate(self.exponents):
            for d in range(self.dim):
                if e[d]:
                    out[:, j] *= z[:, d] ** e[d]
        return out

    def _monomial_gradients(self, pts):
        z = np.asarray(pts, dtype=float) - self.centroid
        out = np.zeros((z.shape[0], self.size, self.dim))
        for j, e in enumerate(self.exponents):
            for d in range(self.dim):
                if e[d] == 0:
                    continue
                term = e[d] * z[:, d] ** (e[d] - 1)
                for dd in range(self.dim):
                    if dd != d and e[dd]:
                        term = term * z[:, dd] ** e[dd]
                out[:, j, d] = term
        return out

    def values(self, pts):
        """Basis values, shape ``(npts, size)``."""
        return self._monomials(np.atleast_2d(pts)) @ self.coefficients

    def gradients(self, pts):
        """Reference-coordinate gradients, shape ``(npts, size, dim)``."""
        g = self._monomial_gradients(np.atleast_2d(pts))
        return np.einsum("qmd,mj->qjd", g, self.coefficients)
