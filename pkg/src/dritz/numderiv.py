"""DG-FE numerical partial derivatives, gradients and the lifting operator.

For an axis ``i`` and a side ``s`` the derivative ``w = D v`` is the unique
member of V_h with

    int w phi = sum_e int_e Q_i^s(v) nu_e^i [phi] - sum_T int_T v d_i phi

for every test function ``phi`` in V_h. The trace on interior edges is
``Q_i^{+/-}(v) = {v} +/- 1/2 sgn(nu_e^i) [v]`` and ``Q_i = {v}``. On
boundary edges the trace is ``v`` itself (``boundary="trace"``) or zero
(``boundary="zero"``); the latter is the operator used when Dirichlet data
is supplied separately through :func:`boundary_lift`.
"""

import enum
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .dg_space import DGFunction, piecewise_gradient


class Side(enum.Enum):
    PLUS = "plus"
    MINUS = "minus"
    CENTRAL = "central"


def sgn(x):
    """Sign with sgn(0) = +1."""
    return np.where(np.asarray(x) >= 0, 1.0, -1.0)


@dataclass(frozen=True)
class DerivativeOperator:
    space: object
    axis: int
    side: Side
    matrix: sp.csr_matrix
    boundary: str = "trace"

    def __call__(self, v):
        if v.space is not self.space:
            raise ValueError("function is not in the operator's space")
        return DGFunction(self.space, self.matrix @ v.coeffs)

    def export_triplets(self, fh):
        """Write ``row col value`` lines for the nonzero entries."""
        coo = self.matrix.tocoo()
        for r, c, val in zip(coo.row, coo.col, coo.data):
            fh.write(f"{r} {c} {float(val)!r}\n")


def _weighted(rows_left, weights, rows_right):
    """rows_left^T diag(weights) rows_right."""
    return (rows_left.T @ sp.diags(weights) @ rows_right).tocsr()


def trace_operator(space, axis, side):
    """Matrix giving Q_i^side(v) at interior-edge quadrature points."""
    side = Side(side)
    avg, jmp = space.average_matrix, space.jump_matrix
    if side is Side.CENTRAL:
        return avg
    s = sgn(space.interior["normals"][:, axis]) if jmp.shape[0] else np.zeros(0)
    half = 0.5 if side is Side.PLUS else -0.5
    return (avg + sp.diags(half * s) @ jmp).tocsr()


def assemble_partial(space, axis, side=Side.CENTRAL, boundary="trace"):
    """Assemble the numerical partial derivative along ``axis`` (0-based)."""
    side = Side(side)
    if not 0 <= axis < space.dim:
        raise ValueError(f"axis must be in [0, {space.dim})")
    if boundary not in ("trace", "zero"):
        raise ValueError("boundary must be 'trace' or 'zero'")
    key = ("partial", axis, side, boundary)
    if key in space.cache:
        return space.cache[key]
    if side is Side.CENTRAL:
        plus = assemble_partial(space, axis, Side.PLUS, boundary).matrix
        minus = assemble_partial(space, axis, Side.MINUS, boundary).matrix
        op = DerivativeOperator(space, axis, side, (0.5 * (plus + minus)).tocsr(), boundary)
        space.cache[key] = op
        return op
    di, db = space.interior, space.boundary
    rhs = _weighted(space.jump_matrix, di["weights"] * di["normals"][:, axis],
                    trace_operator(space, axis, side))
    if boundary == "trace" and db["weights"].size:
        rhs = rhs + _weighted(db["P"], db["weights"] * db["normals"][:, axis], db["P"])
    rhs = rhs - _weighted(space.grad_matrices[axis], space.weights_flat, space.eval_matrix)
    op = DerivativeOperator(space, axis, side, (space.inverse_mass @ rhs).tocsr(), boundary)
    space.cache[key] = op
    return op


def gradient_operators(space, side=Side.CENTRAL, boundary="trace"):
    return [assemble_partial(space, i, side, boundary) for i in range(space.dim)]


def numerical_gradient(v, side=Side.CENTRAL, boundary="trace"):
    """Vector DG function whose components are the numerical partials of ``v``."""
    if v.components != 1:
        raise ValueError("numerical_gradient needs a scalar function")
    ops = gradient_operators(v.space, side, boundary)
    return DGFunction(v.space, np.concatenate([op.matrix @ v.coeffs for op in ops]), v.space.dim)


def lifting_matrices(space):
    """Matrices of the lifting R, one per axis; interior edges only.

    int R(v) . phi = - sum_{e interior} int_e [v] {phi . nu_e}
    """
    key = ("lifting",)
    if key not in space.cache:
        di = space.interior
        mats = []
        for i in range(space.dim):
            rhs = _weighted(space.average_matrix, di["weights"] * di["normals"][:, i], space.jump_matrix)
            mats.append((-(space.inverse_mass @ rhs)).tocsr())
        space.cache[key] = mats
    return space.cache[key]


def lifting(v):
    mats = lifting_matrices(v.space)
    return DGFunction(v.space, np.concatenate([R @ v.coeffs for R in mats]), v.space.dim)


def boundary_lift(space, g, side=Side.CENTRAL):
    """Coefficients of the boundary-data part of the derivative with trace ``g``.

    With ``boundary="zero"`` operators ``D0`` the derivative with Dirichlet
    trace ``g`` is ``D0 v + boundary_lift(space, g)[axis]``. The boundary
    trace does not depend on the side.
    """
    db = space.boundary
    if db["weights"].size == 0:
        return [np.zeros(space.ndof) for _ in range(space.dim)]
    gv = np.broadcast_to(np.asarray(g(db["points"]) if callable(g) else g, dtype=float),
                         db["weights"].shape)
    return [space.inverse_mass @ (db["P"].T @ (db["weights"] * db["normals"][:, i] * gv))
            for i in range(space.dim)]


def decomposition_residual(v):
    """L2 norm of grad_h v - (piecewise grad v + R v); zero on V_h."""
    diff = numerical_gradient(v) - (piecewise_gradient(v) + lifting(v))
    return float(np.sqrt(np.sum(diff.blocks() ** 2 * v.space.mass_diagonal)))
