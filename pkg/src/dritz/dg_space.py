"""Broken polynomial spaces V_h^k, DG functions, projections and norms."""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .quadrature import REFERENCE_MEASURE, ReferenceBasis, gauss_interval, reference_rule


class DGSpace:
    """Degree-k discontinuous polynomial space on a mesh.

    Local dofs are stored in contiguous per-element blocks. The local basis
    is the orthogonal reference basis mapped affinely, so the element mass
    matrix is ``|T| * I``.

    All quadrature data is precomputed as flat arrays so operators can be
    built as sparse matrices:

    * volume rows are indexed ``cell * nq + q``;
    * interior-edge rows ``edge * nqe + q`` (order of ``mesh.interior_edges``);
    * boundary-edge rows likewise over ``mesh.boundary_edges``.
    """

    def __init__(self, mesh, degree, quad_degree=None):
        if degree < 0:
            raise ValueError("degree must be >= 0")
        self.mesh = mesh
        self.degree = degree
        self.dim = mesh.dim
        self.basis = ReferenceBasis(mesh.dim, degree)
        self.nloc = self.basis.size
        self.ndof = mesh.num_cells * self.nloc
        self.quad_degree = 2 * degree + 2 if quad_degree is None else quad_degree
        self.cache = {}

    def __repr__(self):
        return f"DGSpace(dim={self.dim}, k={self.degree}, cells={self.mesh.num_cells})"

    # -- element quadrature -------------------------------------------------

    @cached_property
    def ref_rule(self):
        return reference_rule(self.dim, self.quad_degree)

    @property
    def nq(self):
        return len(self.ref_rule[1])

    @cached_property
    def ref_values(self):
        return self.basis.values(self.ref_rule[0])

    @cached_property
    def quad_points(self):
        """Physical quadrature points, shape ``(ncells, nq, dim)``."""
        m = self.mesh
        x0 = m.vertices[m.cells[:, 0]]
        return x0[:, None, :] + np.einsum("cij,qj->cqi", m.jacobians, self.ref_rule[0])

    @cached_property
    def quad_weights(self):
        """Physical weights, shape ``(ncells, nq)``."""
        scale = self.mesh.measures / REFERENCE_MEASURE[self.dim]
        return scale[:, None] * self.ref_rule[1][None, :]

    @cached_property
    def inverse_jacobians(self):
        return np.linalg.inv(self.mesh.jacobians)

    @cached_property
    def quad_gradients(self):
        """Physical basis gradients, shape ``(ncells, nq, nloc, dim)``."""
        g = self.basis.gradients(self.ref_rule[0])
        # grad phi = J^{-T} grad_ref phi
        return np.einsum("qjr,cri->cqji", g, self.inverse_jacobians)

    @cached_property
    def mass_diagonal(self):
        return np.repeat(self.mesh.measures, self.nloc)

    @cached_property
    def mass_matrix(self):
        return sp.diags(self.mass_diagonal).tocsr()

    @cached_property
    def inverse_mass(self):
        return sp.diags(1.0 / self.mass_diagonal).tocsr()

    def _block_matrix(self, local, cells=None):
        """Sparse matrix whose row block ``r`` is ``local[r]`` placed at the dofs of ``cells[r]``."""
        local = np.asarray(local)
        nb, nr, nl = local.shape
        if cells is None:
            cells = np.arange(nb)
        rows = np.repeat(np.arange(nb * nr), nl)
        cols = (cells[:, None, None] * nl + np.arange(nl)[None, None, :]).repeat(nr, axis=1).ravel()
        return sp.csr_matrix((local.ravel(), (rows, cols)), shape=(nb * nr, self.ndof))

    @cached_property
    def eval_matrix(self):
        """Values at volume quadrature points: ``(ncells*nq, ndof)``."""
        nc = self.mesh.num_cells
        return self._block_matrix(np.broadcast_to(self.ref_values, (nc, self.nq, self.nloc)))

    @cached_property
    def grad_matrices(self):
        """Piecewise partial derivatives at volume quadrature points, one per axis."""
        return [self._block_matrix(self.quad_gradients[..., i]) for i in range(self.dim)]

    @cached_property
    def weights_flat(self):
        return self.quad_weights.ravel()

    @cached_property
    def points_flat(self):
        return self.quad_points.reshape(-1, self.dim)

    # -- edge quadrature ------------------------------------------------------

    def _traces(self, cells, x):
        """Basis values and physical gradients of ``cells[r]`` at points ``x[r]``."""
        m = self.mesh
        nb, nqe, _ = x.shape
        x0 = m.vertices[m.cells[cells, 0]]
        invj = self.inverse_jacobians[cells]
        ref = np.einsum("bij,bqj->bqi", invj, x - x0[:, None, :]).reshape(-1, self.dim)
        vals = self.basis.values(ref).reshape(nb, nqe, self.nloc)
        grads = self.basis.gradients(ref).reshape(nb, nqe, self.nloc, self.dim)
        grads = np.einsum("bqjr,bri->bqji", grads, invj)
        return vals, grads

    @cached_property
    def _edge_data(self):
        m = self.mesh
        out = {}
        for kind, edges in (("interior", m.interior_edges), ("boundary", m.boundary_edges)):
            n = len(edges)
            if self.dim == 1:
                x = np.array([e.coords for e in edges]).reshape(n, 1, 1)
                w = np.ones((n, 1))
            else:
                t, wr = gauss_interval(self.quad_degree)
                c = np.array([e.coords for e in edges]).reshape(n, 2, 2)
                x = c[:, None, 0, :] + t[None, :, :1] * (c[:, None, 1, :] - c[:, None, 0, :])
                w = np.array([e.size for e in edges]).reshape(n, 1) * wr[None, :]
            nqe = x.shape[1] if n else 0
            plus = np.array([e.plus for e in edges], dtype=int)
            minus = np.array([e.minus for e in edges if e.minus is not None], dtype=int)
            d = {
                "points": x.reshape(-1, self.dim),
                "weights": w.ravel(),
                "normals": np.repeat(np.array([e.normal for e in edges]).reshape(n, self.dim), nqe, axis=0),
                "sizes": np.repeat([e.size for e in edges], nqe).astype(float),
                "penalties": np.repeat([e.penalty for e in edges], nqe).astype(float),
                "plus": plus,
                "minus": minus,
                "nqe": nqe,
            }
            if n:
                pv, pg = self._traces(plus, x)
                d["P"] = self._block_matrix(pv, plus)
                d["Pgrad"] = [self._block_matrix(pg[..., i], plus) for i in range(self.dim)]
                if kind == "interior":
                    mv, mg = self._traces(minus, x)
                    d["M"] = self._block_matrix(mv, minus)
                    d["Mgrad"] = [self._block_matrix(mg[..., i], minus) for i in range(self.dim)]
            else:
                empty = sp.csr_matrix((0, self.ndof))
                d["P"] = empty
                d["Pgrad"] = [empty] * self.dim
                if kind == "interior":
                    d["M"] = empty
                    d["Mgrad"] = [empty] * self.dim
            out[kind] = d
        return out

    @property
    def interior(self):
        """Interior-edge quadrature data (points, weights, normals, sizes, penalties, traces)."""
        return self._edge_data["interior"]

    @property
    def boundary(self):
        return self._edge_data["boundary"]

    @cached_property
    def jump_matrix(self):
        """[v] = v+ - v- at interior-edge quadrature points."""
        return (self.interior["P"] - self.interior["M"]).tocsr()

    @cached_property
    def average_matrix(self):
        return (0.5 * (self.interior["P"] + self.interior["M"])).tocsr()

    def function(self, coeffs=None, components=1):
        if coeffs is None:
            coeffs = np.zeros(components * self.ndof)
        return DGFunction(self, coeffs, components)


@dataclass
class DGFunction:
    """Member of ``[V_h]^c`` given by a flat coefficient vector of length ``c * ndof``.

    Component ``i`` occupies ``coeffs[i*ndof:(i+1)*ndof]``.
    """

    space: DGSpace
    coeffs: np.ndarray
    components: int = 1

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float).ravel()
        if self.coeffs.size != self.components * self.space.ndof:
            raise ValueError(
                f"expected {self.components * self.space.ndof} coefficients, got {self.coeffs.size}")

    def component(self, i):
        n = self.space.ndof
        return DGFunction(self.space, self.coeffs[i * n:(i + 1) * n])

    def blocks(self):
        """Coefficients as an array ``(components, ndof)``."""
        return self.coeffs.reshape(self.components, self.space.ndof)

    def __add__(self, other):
        _check_same(self, other)
        return DGFunction(self.space, self.coeffs + other.coeffs, self.components)

    def __sub__(self, other):
        _check_same(self, other)
        return DGFunction(self.space, self.coeffs - other.coeffs, self.components)

    def __mul__(self, alpha):
        return DGFunction(self.space, alpha * self.coeffs, self.components)

    __rmul__ = __mul__

    def __neg__(self):
        return DGFunction(self.space, -self.coeffs, self.components)

    def quad_values(self):
        """Values at volume quadrature points, shape ``(ncells*nq, components)``."""
        E = self.space.eval_matrix
        return np.column_stack([E @ c for c in self.blocks()])


def _check_same(u, v):
    if u.space is not v.space or u.components != v.components:
        raise ValueError("DG functions live in different spaces")


def _as_values(vals, npts, components):
    vals = np.asarray(vals, dtype=float)
    if vals.ndim == 0:
        vals = np.full(npts, float(vals))
    return vals.reshape(npts, components)


def project_local_l2(space, f, components=1):
    """Elementwise L2 projection of a pointwise function onto ``[V_h]^c``.

    ``f`` receives an ``(npts, dim)`` array of points and returns ``(npts,)``
    or ``(npts, components)`` values.
    """
    vals = _as_values(f(space.points_flat), len(space.weights_flat), components)
    E = space.eval_matrix
    w = space.weights_flat
    coeffs = [(E.T @ (w * vals[:, i])) / space.mass_diagonal for i in range(components)]
    return DGFunction(space, np.concatenate(coeffs), components)


def evaluate(v, element_id, local_point):
    """Value(s) of ``v`` on element ``element_id`` at a reference point."""
    space = v.space
    if not 0 <= element_id < space.mesh.num_cells:
        raise IndexError(f"element {element_id} out of range")
    phi = space.basis.values(np.atleast_2d(local_point))[0]
    sl = slice(element_id * space.nloc, (element_id + 1) * space.nloc)
    vals = np.array([b[sl] @ phi for b in v.blocks()])
    return vals[0] if v.components == 1 else vals


def piecewise_gradient(v):
    """Elementwise gradient of a scalar DG function as a vector DG function.

    The gradient of a degree-k polynomial has degree k-1, so the projection
    is exact.
    """
    space = v.space
    if v.components != 1:
        raise ValueError("piecewise_gradient needs a scalar function")
    E = space.eval_matrix
    w = space.weights_flat
    parts = [(E.T @ (w * (G @ v.coeffs))) / space.mass_diagonal for G in space.grad_matrices]
    return DGFunction(space, np.concatenate(parts), space.dim)


def _check_p(p):
    if not p > 1:
        raise ValueError("p must be > 1")


def _element_rule(space, quad_degree, subdivisions):
    """Reference quadrature, optionally composite in 1D."""
    deg = space.quad_degree if quad_degree is None else quad_degree
    pts, wts = reference_rule(space.dim, deg)
    if subdivisions > 1:
        if space.dim != 1:
            raise ValueError("subdivided quadrature is only available in 1D")
        t, w = gauss_interval(deg)
        s = np.arange(subdivisions)
        pts = ((s[:, None] + t[None, :, 0]) / subdivisions).reshape(-1, 1)
        wts = np.tile(w, subdivisions) / subdivisions
    return pts, wts


def lp_norm(v, p, exact=None, quad_degree=None, subdivisions=1):
    """L^p norm of ``v`` or of ``v - exact`` by element quadrature.

    Vector-valued functions use the Euclidean norm pointwise. ``exact``
    is sampled at the quadrature points, never projected.
    """
    _check_p(p)
    space = v.space
    if quad_degree is None and subdivisions == 1:
        pts = space.points_flat
        w = space.weights_flat
        vals = v.quad_values()
    else:
        rp, rw = _element_rule(space, quad_degree, subdivisions)
        phi = space.basis.values(rp)
        m = space.mesh
        x0 = m.vertices[m.cells[:, 0]]
        pts = (x0[:, None, :] + np.einsum("cij,qj->cqi", m.jacobians, rp)).reshape(-1, space.dim)
        w = ((m.measures / REFERENCE_MEASURE[space.dim])[:, None] * rw[None, :]).ravel()
        vals = np.column_stack([
            np.einsum("cl,ql->cq", b.reshape(-1, space.nloc), phi).ravel() for b in v.blocks()])
    if exact is not None:
        vals = vals - _as_values(exact(pts), len(w), v.components)
    mag = np.linalg.norm(vals, axis=1)
    return float(np.sum(w * mag ** p) ** (1.0 / p))


def jump_term(v, p, use_penalty_weights=True):
    """(sum_e int_e gamma_e h_e^{1-p} |[v]|^p)^{1/p} over interior edges."""
    space = v.space
    d = space.interior
    if d["weights"].size == 0:
        return 0.0
    jump = space.jump_matrix @ v.coeffs
    gam = d["penalties"] if use_penalty_weights else 1.0
    return float(np.sum(d["weights"] * gam * d["sizes"] ** (1 - p) * np.abs(jump) ** p) ** (1.0 / p))


def boundary_term(v, p, g, use_penalty_weights=True):
    """(sum_e int_e gamma_e h_e^{1-p} |v - g|^p)^{1/p} over boundary edges."""
    space = v.space
    d = space.boundary
    gv = _as_values(g(d["points"]), d["weights"].size, 1)[:, 0] if callable(g) else g
    r = space.boundary["P"] @ v.coeffs - gv
    gam = d["penalties"] if use_penalty_weights else 1.0
    return float(np.sum(d["weights"] * gam * d["sizes"] ** (1 - p) * np.abs(r) ** p) ** (1.0 / p))


def broken_w1p_seminorm(v, p, use_penalty_weights=True):
    """|v|_{W^{1,p}(T_h)}: piecewise gradient L^p norm plus the jump term."""
    _check_p(p)
    return lp_norm(piecewise_gradient(v), p) + jump_term(v, p, use_penalty_weights)


def broken_w1p_norm(v, p, g, use_penalty_weights=True):
    _check_p(p)
    return broken_w1p_seminorm(v, p, use_penalty_weights) + boundary_term(v, p, g, use_penalty_weights)


def export_function(v, fh):
    """Write rows ``element local_dof component coefficient``."""
    nl = v.space.nloc
    for c, block in enumerate(v.blocks()):
        for i, val in enumerate(block):
            fh.write(f"{i // nl} {i % nl} {c} {float(val)!r}\n")
