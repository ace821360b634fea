"""Densities and penalised discrete energies with exact coefficient gradients.

All three energies share the form

    J(v) = int f(G v, v, x) dx + sum_{e int} int_e gamma_e h_e^{1-p} |[v]|^p
                               + sum_{e bnd} int_e gamma_e h_e^{1-p} |v - g|^p

and differ only in the discrete gradient ``G``: the DG-FE central gradient,
the piecewise gradient, or the piecewise gradient plus the lifting.
"""

import enum
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .numderiv import gradient_operators, lifting_matrices


@dataclass(frozen=True)
class Density:
    """Energy density f(xi, v, x) and its partial derivatives.

    All callables are vectorised: ``xi`` is ``(n, d)``, ``v`` is ``(n,)`` and
    ``x`` is ``(n, d)``. ``grad_xi`` returns ``(n, d)``, the others ``(n,)``.
    """

    value: object
    grad_xi: object
    grad_v: object
    p: float
    constants: dict = field(default_factory=dict)


def _pointwise(F, x):
    if F is None:
        return np.zeros(len(x))
    if callable(F):
        return np.broadcast_to(np.asarray(F(x), dtype=float), (len(x),))
    return np.full(len(x), float(F))


def plaplace_density(p, F=None, eps=0.0):
    """f = (1/p)|xi|^p - F(x) v, optionally with |xi| -> sqrt(|xi|^2 + eps^2)."""
    if not p > 1:
        raise ValueError("p must be > 1")
    if eps < 0:
        raise ValueError("eps must be >= 0")

    def value(xi, v, x):
        r2 = np.sum(xi * xi, axis=1) + eps ** 2
        return r2 ** (p / 2) / p - _pointwise(F, x) * v

    def grad_xi(xi, v, x):
        r2 = np.sum(xi * xi, axis=1) + eps ** 2
        scale = np.zeros_like(r2)
        pos = r2 > 0
        scale[pos] = r2[pos] ** ((p - 2) / 2)
        return scale[:, None] * xi

    def grad_v(xi, v, x):
        return -_pointwise(F, x)

    return Density(value, grad_xi, grad_v, p, {"alpha0": 1.0 / p, "r": 1.0})


class GradientKind(enum.Enum):
    DGFE_CENTRAL = "dgfe"
    PIECEWISE = "piecewise"
    PIECEWISE_PLUS_LIFTING = "lifting"


def _power_term(t, p):
    """sum-ready |t|^p and its derivative p |t|^{p-2} t (zero at t = 0)."""
    a = np.abs(t)
    return a ** p, p * np.sign(t) * a ** (p - 1)


class EnergySetup:
    """Discrete energy on a DG space.

    ``gamma`` overrides the mesh penalties: a scalar, or an array over
    ``mesh.edges``. ``g`` is the Dirichlet data (callable, scalar or None
    for zero).
    """

    def __init__(self, space, density, gradient_kind=GradientKind.DGFE_CENTRAL, gamma=None, g=None):
        self.space = space
        self.density = density
        self.gradient_kind = GradientKind(gradient_kind)
        self.p = float(density.p)
        if not self.p > 1:
            raise ValueError("p must be > 1")
        m = space.mesh
        if gamma is None:
            gam_edges = m.penalties
        else:
            gam_edges = np.broadcast_to(np.asarray(gamma, dtype=float), (len(m.edges),))
        if np.any(gam_edges < 0):
            raise ValueError("penalty parameters must be >= 0")
        di, db = space.interior, space.boundary
        ids_i = np.array([e.id for e in m.interior_edges], dtype=int)
        ids_b = np.array([e.id for e in m.boundary_edges], dtype=int)
        # quadrature weight times gamma_e / h_e; the p-dependent power is applied below
        self._ci = di["weights"] * np.repeat(gam_edges[ids_i], di["nqe"]) / di["sizes"]
        self._cb = db["weights"] * np.repeat(gam_edges[ids_b], db["nqe"]) / db["sizes"]
        self._wi = self._ci * di["sizes"] ** (2 - self.p)
        self._wb = self._cb * db["sizes"] ** (2 - self.p)
        if g is None:
            self._g = np.zeros(db["weights"].size)
        elif callable(g):
            self._g = np.broadcast_to(np.asarray(g(db["points"]), dtype=float), db["weights"].shape).copy()
        else:
            self._g = np.full(db["weights"].size, float(g))
        self.g = g
        self.grad_matrices = self._gradient_matrices()
        self._x = space.points_flat
        self._w = space.weights_flat

    def _gradient_matrices(self):
        s = self.space
        E = s.eval_matrix
        if self.gradient_kind is GradientKind.DGFE_CENTRAL:
            return [(E @ op.matrix).tocsr() for op in gradient_operators(s)]
        if self.gradient_kind is GradientKind.PIECEWISE:
            return list(s.grad_matrices)
        return [(G + E @ R).tocsr() for G, R in zip(s.grad_matrices, lifting_matrices(s))]

    def discrete_gradient(self, c):
        """Discrete gradient sampled at volume quadrature points, ``(n, d)``."""
        return np.column_stack([A @ c for A in self.grad_matrices])

    def penalty(self, c):
        """Interior and boundary penalty contributions."""
        s = self.space
        ji = s.jump_matrix @ c
        rb = s.boundary["P"] @ c - self._g
        return float(self._wi @ np.abs(ji) ** self.p), float(self._wb @ np.abs(rb) ** self.p)

    def value_and_gradient(self, c):
        c = np.asarray(c, dtype=float)
        s, f, p = self.space, self.density, self.p
        xi = self.discrete_gradient(c)
        v = s.eval_matrix @ c
        w = self._w
        J = w @ f.value(xi, v, self._x)
        gxi = f.grad_xi(xi, v, self._x) * w[:, None]
        grad = s.eval_matrix.T @ (w * f.grad_v(xi, v, self._x))
        for i, A in enumerate(self.grad_matrices):
            grad += A.T @ gxi[:, i]
        if self._wi.size:
            val, der = _power_term(s.jump_matrix @ c, p)
            J += self._wi @ val
            grad += s.jump_matrix.T @ (self._wi * der)
        if self._wb.size:
            Pb = s.boundary["P"]
            val, der = _power_term(Pb @ c - self._g, p)
            J += self._wb @ val
            grad += Pb.T @ (self._wb * der)
        return float(J), grad

    def __call__(self, c):
        return self.value_and_gradient(c)

    def model_hessian(self):
        """Hessian of the same energy with p = 2 and f = |xi|^2 / 2.

        Symmetric positive definite whenever some penalty is positive;
        its factorisation makes a good preconditioner for the optimizer.
        """
        s = self.space
        W = sp.diags(self._w)
        H = sum(A.T @ W @ A for A in self.grad_matrices)
        if self._ci.size:
            H = H + s.jump_matrix.T @ sp.diags(2 * self._ci) @ s.jump_matrix
        if self._cb.size:
            Pb = s.boundary["P"]
            H = H + Pb.T @ sp.diags(2 * self._cb) @ Pb
        return sp.csr_matrix(H)

    def preconditioner(self):
        """Callable applying the inverse of :meth:`model_hessian`."""
        return spla.splu(self.model_hessian().tocsc()).solve


def discrete_energy(setup, v):
    if v.space is not setup.space:
        raise ValueError("function is not in the setup's space")
    return setup.value_and_gradient(v.coeffs)[0]


def discrete_energy_gradient(setup, v):
    if v.space is not setup.space:
        raise ValueError("function is not in the setup's space")
    return setup.value_and_gradient(v.coeffs)[1]


def sipdg_energy(space, gamma, g, F, v, boundary_consistency=True):
    """Symmetric interior penalty energy for the Poisson problem.

    1/2 int |grad v|^2 - sum_e int_e [v]{grad v . nu_e}
        + 1/2 sum_{e int} int_e gamma/h |[v]|^2 + 1/2 sum_{e bnd} int_e gamma/h |v - g|^2
        - int F v

    With ``boundary_consistency`` the flux term also runs over boundary
    edges with jump ``v - g``; without it only interior edges are used.
    """
    c = v.coeffs
    s = space
    di, db = s.interior, s.boundary
    gam_i = di["penalties"] if gamma is None else gamma
    gam_b = db["penalties"] if gamma is None else gamma
    grads = np.column_stack([G @ c for G in s.grad_matrices])
    w = s.weights_flat
    J = 0.5 * w @ np.sum(grads ** 2, axis=1) - w @ (_pointwise(F, s.points_flat) * (s.eval_matrix @ c))
    if di["weights"].size:
        jump = s.jump_matrix @ c
        flux = sum(0.5 * ((di["Pgrad"][i] + di["Mgrad"][i]) @ c) * di["normals"][:, i] for i in range(s.dim))
        J += -di["weights"] @ (jump * flux) + 0.5 * di["weights"] @ (gam_i / di["sizes"] * jump ** 2)
    gb = _pointwise(g, db["points"]) if g is not None else np.zeros(db["weights"].size)
    r = db["P"] @ c - gb
    J += 0.5 * db["weights"] @ (gam_b / db["sizes"] * r ** 2)
    if boundary_consistency:
        flux_b = sum((db["Pgrad"][i] @ c) * db["normals"][:, i] for i in range(s.dim))
        J += -db["weights"] @ (r * flux_b)
    return float(J)
