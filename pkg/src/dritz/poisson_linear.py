"""Linear p = 2 schemes for the Poisson problem -div grad u = F, u = g.

Every bilinear form is written once in terms of *samples* of its trial
argument: values and gradients at volume quadrature points and traces on
both sides of every edge. Feeding it the sampling matrices of the DG space
gives the stiffness matrix; feeding it samples of a smooth function gives
the functional ``a_h(u, .)`` used by :func:`consistency_residual`.
"""

import enum
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .dg_space import DGFunction
from .energy import _pointwise
from .numderiv import Side, assemble_partial, boundary_lift, lifting_matrices, sgn

DENSE_LIMIT = 2000


class Scheme(enum.Enum):
    PW = "pw"
    SIPDG = "sipdg"
    BO = "bo"
    LDG = "ldg"
    DWDG = "dwdg"


class SolverError(RuntimeError):
    def __init__(self, message, residual):
        super().__init__(f"{message} (relative residual {residual:.3e})")
        self.residual = residual


@dataclass
class LinearScheme:
    kind: Scheme
    space: object
    matrix: sp.csr_matrix
    rhs: np.ndarray
    gamma: object
    boundary: str

    def export_triplets(self, fh):
        """Write the matrix as ``row col value`` lines, then ``rhs i value`` lines."""
        coo = self.matrix.tocoo()
        for r, c, val in zip(coo.row, coo.col, coo.data):
            fh.write(f"{r} {c} {float(val)!r}\n")
        for i, val in enumerate(self.rhs):
            fh.write(f"rhs {i} {float(val)!r}\n")


# -- sampling --------------------------------------------------------------

def _coefficient_samples(space):
    di, db = space.interior, space.boundary
    return {
        "vol": space.eval_matrix,
        "grad": list(space.grad_matrices),
        "ip": di["P"], "im": di["M"],
        "ipg": di["Pgrad"], "img": di["Mgrad"],
        "b": db["P"], "bg": db["Pgrad"],
    }


def _smooth_samples(space, u, grad):
    di, db = space.interior, space.boundary

    def gr(x):
        return np.asarray(grad(x), dtype=float).reshape(len(x), space.dim)

    gi, gb, gv = gr(di["points"]), gr(db["points"]), gr(space.points_flat)
    ui = _pointwise(u, di["points"])
    return {
        "vol": _pointwise(u, space.points_flat),
        "grad": [gv[:, i] for i in range(space.dim)],
        "ip": ui, "im": ui,
        "ipg": [gi[:, i] for i in range(space.dim)],
        "img": [gi[:, i] for i in range(space.dim)],
        "b": _pointwise(u, db["points"]),
        "bg": [gb[:, i] for i in range(space.dim)],
    }


def _fd_gradient(u, dim, step=1e-3):
    """Fourth-order central differences of a pointwise function."""
    def grad(x):
        cols = []
        for i in range(dim):
            e = np.zeros(dim)
            e[i] = step
            f = [_pointwise(u, x + k * e) for k in (-2, -1, 1, 2)]
            cols.append((f[0] - 8 * f[1] + 8 * f[2] - f[3]) / (12 * step))
        return np.column_stack(cols)
    return grad


def _diag(w):
    return sp.diags(np.asarray(w, dtype=float))


def _penalty_weights(space, gamma):
    di, db = space.interior, space.boundary
    if gamma is None:
        gi, gb = di["penalties"], db["penalties"]
    else:
        if np.any(np.asarray(gamma) < 0):
            raise ValueError("penalty parameters must be >= 0")
        gi = gb = float(gamma)
    return di["weights"] * gi / di["sizes"], db["weights"] * gb / db["sizes"]


# -- building blocks, each linear in the samples X -------------------------

def _jump(X):
    return X["ip"] - X["im"]


def _volume(space, X):
    W = _diag(space.weights_flat)
    return sum(G.T @ (W @ X["grad"][i]) for i, G in enumerate(space.grad_matrices))


def _penalty(space, X, gamma, factor=1.0):
    wi, wb = _penalty_weights(space, gamma)
    out = space.jump_matrix.T @ (_diag(factor * wi) @ _jump(X))
    if wb.size:
        out = out + space.boundary["P"].T @ (_diag(factor * wb) @ X["b"])
    return out


def _interior_flux(space, X):
    """-int [u]{grad v . nu} - int [v]{grad u . nu} over interior edges."""
    di = space.interior
    nu = di["normals"]
    w = _diag(di["weights"])
    avg_test = sum(0.5 * _diag(nu[:, i]) @ (di["Pgrad"][i] + di["Mgrad"][i]) for i in range(space.dim))
    avg_trial = sum(0.5 * _diag(nu[:, i]) @ (X["ipg"][i] + X["img"][i]) for i in range(space.dim))
    return -(avg_test.T @ (w @ _jump(X))) - space.jump_matrix.T @ (w @ avg_trial)


def _boundary_flux(space, X):
    db = space.boundary
    nu = db["normals"]
    w = _diag(db["weights"])
    flux_test = sum(_diag(nu[:, i]) @ db["Pgrad"][i] for i in range(space.dim))
    flux_trial = sum(_diag(nu[:, i]) @ X["bg"][i] for i in range(space.dim))
    return -(flux_test.T @ (w @ X["b"])) - db["P"].T @ (w @ flux_trial)


def _lifting_term(space, X):
    di = space.interior
    out = 0
    for i, R in enumerate(lifting_matrices(space)):
        RX = -(space.inverse_mass @ (space.average_matrix.T
                                     @ (_diag(di["weights"] * di["normals"][:, i]) @ _jump(X))))
        out = out + R.T @ (space.mass_matrix @ RX)
    return out


def _zero_trace_partial(space, X, axis, side):
    """Numerical partial with zero boundary trace, applied to samples."""
    di = space.interior
    jump = _jump(X)
    trace = 0.5 * (X["ip"] + X["im"])
    if side is not Side.CENTRAL:
        half = 0.5 if side is Side.PLUS else -0.5
        trace = trace + _diag(half * sgn(di["normals"][:, axis])) @ jump
    rhs = space.jump_matrix.T @ (_diag(di["weights"] * di["normals"][:, axis]) @ trace) \
        - space.grad_matrices[axis].T @ (_diag(space.weights_flat) @ X["vol"])
    return space.inverse_mass @ rhs


def _zero_trace_matrix(space, axis, side):
    return assemble_partial(space, axis, side, boundary="zero").matrix


def _gradient_energy(space, X, sides):
    """sum over sides and axes of D0^T M (D0 X), averaged over ``sides``."""
    out = 0
    for side in sides:
        for i in range(space.dim):
            D0 = _zero_trace_matrix(space, i, side)
            out = out + D0.T @ (space.mass_matrix @ _zero_trace_partial(space, X, i, side))
    return out / len(sides)


def _sides(kind):
    return [Side.CENTRAL] if kind is Scheme.LDG else [Side.PLUS, Side.MINUS]


def _bilinear(kind, space, X, gamma, boundary_consistency):
    if kind is Scheme.PW:
        return _volume(space, X) + _penalty(space, X, gamma)
    if kind is Scheme.SIPDG:
        out = _volume(space, X) + _interior_flux(space, X) + _penalty(space, X, gamma)
        if boundary_consistency:
            out = out + _boundary_flux(space, X)
        return out
    if kind is Scheme.BO:
        return (_volume(space, X) + _lifting_term(space, X) + _interior_flux(space, X)
                + _penalty(space, X, gamma, factor=2.0))
    return _gradient_energy(space, X, _sides(kind)) + _penalty(space, X, gamma)


def _load(kind, space, F, g, gamma, boundary_consistency):
    db = space.boundary
    b = space.eval_matrix.T @ (space.weights_flat * _pointwise(F, space.points_flat))
    if db["weights"].size == 0 or g is None:
        return b
    gb = _pointwise(g, db["points"])
    _, wb = _penalty_weights(space, gamma)
    factor = 2.0 if kind is Scheme.BO else 1.0
    b = b + db["P"].T @ (factor * wb * gb)
    if kind is Scheme.SIPDG and boundary_consistency:
        flux_test = sum(_diag(db["normals"][:, i]) @ db["Pgrad"][i] for i in range(space.dim))
        b = b - flux_test.T @ (db["weights"] * gb)
    elif kind in (Scheme.LDG, Scheme.DWDG):
        lift = boundary_lift(space, g)
        sides = _sides(kind)
        for side in sides:
            for i in range(space.dim):
                D0 = _zero_trace_matrix(space, i, side)
                b = b - D0.T @ (space.mass_matrix @ lift[i]) / len(sides)
    return b


def jump_assembly(space, gamma=None):
    """Matrix of the pairing sum_int (gamma/h)[u][v] + sum_bnd (gamma/h) u v."""
    return sp.csr_matrix(_penalty(space, _coefficient_samples(space), gamma))


def assemble(kind, space, gamma=None, F=None, g=None, boundary_consistency=True):
    """Assemble the stiffness matrix and load vector of a linear scheme.

    ``gamma=None`` uses the mesh penalties. ``boundary_consistency`` only
    affects SIPDG: when True the flux terms also run over boundary edges.
    """
    kind = Scheme(kind)
    X = _coefficient_samples(space)
    A = sp.csr_matrix(_bilinear(kind, space, X, gamma, boundary_consistency))
    A = (0.5 * (A + A.T)).tocsr()
    b = np.asarray(_load(kind, space, F, g, gamma, boundary_consistency), dtype=float)
    if kind in (Scheme.LDG, Scheme.DWDG):
        boundary = "lifted data"
    elif kind is Scheme.SIPDG and boundary_consistency:
        boundary = "penalty and flux"
    else:
        boundary = "penalty"
    return LinearScheme(kind, space, A, b, gamma, boundary)


def solve(scheme, method="auto", rtol=1e-10, max_iter=None):
    """Solve ``A u = b``; dense Cholesky for small systems, Jacobi-CG otherwise.

    The relative residual must reach ``rtol`` unless that is below the
    rounding level of ``A u``; CG falls back to a sparse direct solve.
    """
    A, b = scheme.matrix, scheme.rhs
    n = A.shape[0]
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return DGFunction(scheme.space, np.zeros(n))
    if method == "auto":
        method = "dense" if n <= DENSE_LIMIT else "cg"
    if method == "dense":
        try:
            u = sla.cho_solve(sla.cho_factor(A.toarray()), b)
        except sla.LinAlgError as exc:
            raise SolverError(f"matrix is not positive definite: {exc}", np.inf) from exc
    elif method == "cg":
        d = A.diagonal()
        if np.any(d <= 0):
            raise SolverError("nonpositive diagonal", np.inf)
        M = spla.LinearOperator((n, n), matvec=lambda x: x / d)
        u = np.zeros(n)
        # restart from the current iterate: the recursive residual drifts from the true one
        for _ in range(5):
            u, _ = spla.cg(A, b, x0=u, rtol=0.1 * rtol, atol=0.0, maxiter=max_iter or 20 * n, M=M)
            if np.linalg.norm(A @ u - b) <= rtol * bnorm:
                break
        if np.linalg.norm(A @ u - b) > rtol * bnorm:
            u = spla.spsolve(A.tocsc(), b)
    else:
        raise ValueError(f"unknown method {method!r}")
    res = float(np.linalg.norm(A @ u - b) / bnorm)
    # large penalties push the attainable residual above rtol; accept the
    # rounding level of the matrix-vector product itself
    floor = 64 * np.finfo(float).eps * np.linalg.norm(abs(A) @ np.abs(u)) / bnorm
    if not res <= max(rtol, floor):
        raise SolverError("linear solve did not converge", res)
    return DGFunction(scheme.space, u)


def _broken_h1_matrix(space, gamma=None):
    X = _coefficient_samples(space)
    return sp.csr_matrix(_volume(space, X) + _penalty(space, X, gamma))


def consistency_residual(kind, space, u_exact, F, grad_exact=None, gamma=None,
                         boundary_consistency=True):
    """Dual norm of ``v -> a_h(u, v) - l_h(v)`` over the whole DG space.

    ``u`` is sampled at quadrature points and supplies its own boundary
    data. The dual norm is taken with respect to the broken H1 norm
    ``int |grad v|^2 + sum (gamma/h)|[v]|^2 + sum_bnd (gamma/h) v^2``.
    """
    kind = Scheme(kind)
    grad = grad_exact if grad_exact is not None else _fd_gradient(u_exact, space.dim)
    X = _smooth_samples(space, u_exact, grad)
    r = _bilinear(kind, space, X, gamma, boundary_consistency) \
        - _load(kind, space, F, u_exact, gamma, boundary_consistency)
    r = np.asarray(r, dtype=float).ravel()
    N = _broken_h1_matrix(space, gamma)
    z = spla.spsolve(N.tocsc(), r) if N.shape[0] > DENSE_LIMIT else np.linalg.solve(N.toarray(), r)
    return float(np.sqrt(max(r @ z, 0.0)))
