import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dritz import (DGSpace, Side, assemble_partial, broken_w1p_seminorm, build_interval_mesh,
                   build_unit_square_tri_mesh, decomposition_residual, lifting, lp_norm,
                   numerical_gradient, piecewise_gradient, project_local_l2)
from dritz.dg_space import jump_term
from dritz.numderiv import boundary_lift, gradient_operators, lifting_matrices, sgn, trace_operator

from conftest import make_space, random_function

SIDES = [Side.PLUS, Side.MINUS, Side.CENTRAL]


# -- independent 1D oracle: monomial basis, dense mass solves ---------------

def oracle_1d(n, k, coeffs_fn, side):
    """Numerical derivative and lifting on a uniform mesh of (0, 1), built from scratch.

    ``coeffs_fn(x, cell)`` gives the values of v on ``cell``. Returns callables
    evaluating the derivative and the lifting at points of a cell.
    """
    h = 1.0 / n
    t, w = np.polynomial.legendre.leggauss(k + 3)
    centres = (np.arange(n) + 0.5) * h

    def basis(j, x, cell):
        return ((x - centres[cell]) / h) ** j

    def dbasis(j, x, cell):
        return j * ((x - centres[cell]) / h) ** (j - 1) / h if j else 0 * x

    def value(cell, x):
        return coeffs_fn(np.atleast_1d(x), cell)

    nd = n * (k + 1)
    mass = np.zeros((nd, nd))
    rhs = np.zeros(nd)
    lift_rhs = np.zeros(nd)
    for c in range(n):
        xq = centres[c] + 0.5 * h * t
        wq = 0.5 * h * w
        for i in range(k + 1):
            for j in range(k + 1):
                mass[c * (k + 1) + i, c * (k + 1) + j] = np.sum(wq * basis(i, xq, c) * basis(j, xq, c))
            # - int_T v d(phi)
            rhs[c * (k + 1) + i] -= np.sum(wq * value(c, xq) * dbasis(i, xq, c))
    # nodes: interior node i sits between cell i-1 (minus) and cell i (plus), nu = -1
    for node in range(n + 1):
        x = node * h
        if node == 0 or node == n:
            cell = 0 if node == 0 else n - 1
            nu = -1.0 if node == 0 else 1.0
            q = value(cell, x)[0]
            for i in range(k + 1):
                rhs[cell * (k + 1) + i] += q * nu * basis(i, np.array([x]), cell)[0]
            continue
        plus, minus, nu = node, node - 1, -1.0
        vp, vm = value(plus, x)[0], value(minus, x)[0]
        jump, avg = vp - vm, 0.5 * (vp + vm)
        q = {Side.CENTRAL: avg, Side.PLUS: avg + 0.5 * sgn(nu) * jump,
             Side.MINUS: avg - 0.5 * sgn(nu) * jump}[side]
        for i in range(k + 1):
            bp = basis(i, np.array([x]), plus)[0]
            bm = basis(i, np.array([x]), minus)[0]
            rhs[plus * (k + 1) + i] += q * nu * bp
            rhs[minus * (k + 1) + i] -= q * nu * bm
            lift_rhs[plus * (k + 1) + i] -= jump * 0.5 * bp * nu
            lift_rhs[minus * (k + 1) + i] -= jump * 0.5 * bm * nu
    d = np.linalg.solve(mass, rhs)
    r = np.linalg.solve(mass, lift_rhs)

    def ev(coef):
        def f(cell, x):
            x = np.atleast_1d(x)
            return sum(coef[cell * (k + 1) + j] * basis(j, x, cell) for j in range(k + 1))
        return f

    return ev(d), ev(r)


def dg_values(v, cell, x):
    space = v.space
    ref = space.mesh.to_reference(cell, np.atleast_1d(x)[:, None])
    return space.basis.values(ref) @ v.coeffs[cell * space.nloc:(cell + 1) * space.nloc]


@pytest.mark.parametrize("k", [0, 1, 2, 3])
@pytest.mark.parametrize("side", SIDES)
def test_matches_dense_oracle_1d(k, side, rng):
    n = 5
    space = DGSpace(build_interval_mesh(n), k)
    v = random_function(space, rng)
    d_oracle, r_oracle = oracle_1d(n, k, lambda x, c: dg_values(v, c, x), side)
    d = assemble_partial(space, 0, side)(v)
    r = lifting(v)
    xs = np.linspace(0.01, 0.99, 7)
    for c in range(n):
        x = (c + xs) / n
        np.testing.assert_allclose(dg_values(d, c, x), d_oracle(c, x), atol=1e-11)
        np.testing.assert_allclose(dg_values(r, c, x), r_oracle(c, x), atol=1e-11)


def step_function_oracle():
    """Hand-assembled 2x2 systems for v = (0, 1) on two cells of (0, 1), k = 0."""
    mass = np.diag([0.5, 0.5])
    # node 0: boundary, nu=-1, trace v=0. node 1/2: plus=cell 1, minus=cell 0,
    # nu=-1, [v]=1, {v}=1/2. node 1: boundary, nu=+1, trace v=1.
    jump, avg, nu = 1.0, 0.5, -1.0
    out = {}
    for side, q in ((Side.PLUS, avg + 0.5 * np.sign(nu) * jump), (Side.MINUS, avg - 0.5 * np.sign(nu) * jump),
                    (Side.CENTRAL, avg)):
        rhs = np.array([0.0 - q * nu, q * nu + 1.0 * 1.0])
        out[side] = np.linalg.solve(mass, rhs)
    lift_rhs = np.array([-jump * 0.5 * nu, -jump * 0.5 * nu])
    out["lifting"] = np.linalg.solve(mass, lift_rhs)
    return out


def test_step_function_examples():
    space = DGSpace(build_interval_mesh(2), 0)
    v = space.function([0.0, 1.0])
    oracle = step_function_oracle()
    expected = {Side.CENTRAL: (1, 1), Side.PLUS: (0, 2), Side.MINUS: (2, 0)}
    for side, vals in expected.items():
        got = assemble_partial(space, 0, side)(v).coeffs
        np.testing.assert_allclose(got, vals, atol=1e-13)
        np.testing.assert_allclose(got, oracle[side], atol=1e-13)
    np.testing.assert_allclose(lifting(v).coeffs, [1, 1], atol=1e-13)
    np.testing.assert_allclose(numerical_gradient(v).coeffs, [1, 1], atol=1e-13)
    assert decomposition_residual(v) < 1e-14


@pytest.mark.parametrize("dim,k", [(1, 0), (1, 2), (2, 0), (2, 1), (2, 2)])
def test_constant_has_zero_derivative(dim, k):
    space = make_space(dim, 3, k)
    v = project_local_l2(space, lambda x: np.ones(len(x)))
    for side in SIDES:
        for op in gradient_operators(space, side):
            assert np.max(np.abs(op(v).coeffs)) < 1e-13


@pytest.mark.parametrize("n", [1, 3, 8])
def test_linear_function_has_unit_derivative(n):
    space = make_space(1, n, 1)
    v = project_local_l2(space, lambda x: x[:, 0])
    d = numerical_gradient(v)
    np.testing.assert_allclose(d.quad_values()[:, 0], 1.0, atol=1e-12)
    assert np.max(np.abs(lifting(v).coeffs)) < 1e-13


def test_gradient_of_x_plus_y():
    space = make_space(2, 4, 1)
    v = project_local_l2(space, lambda x: x[:, 0] + x[:, 1])
    np.testing.assert_allclose(numerical_gradient(v).quad_values(), 1.0, atol=1e-12)


@pytest.mark.parametrize("dim,k", [(1, 1), (1, 3), (2, 1), (2, 2), (2, 3)])
def test_degree_preserving_consistency(dim, k):
    space = make_space(dim, 4, k)
    if dim == 1:
        f = lambda x: x[:, 0] ** k - 0.5 * x[:, 0]
        g = lambda x: (k * x[:, 0] ** (k - 1) - 0.5)[:, None]
    else:
        f = lambda x: x[:, 0] ** k + x[:, 0] * x[:, 1] ** (k - 1)
        g = lambda x: np.column_stack([k * x[:, 0] ** (k - 1) + x[:, 1] ** (k - 1),
                                       (k - 1) * x[:, 0] * x[:, 1] ** max(k - 2, 0)])
    v = project_local_l2(space, f)
    for side in SIDES:
        vals = numerical_gradient(v, side).quad_values()
        np.testing.assert_allclose(vals, g(space.points_flat), atol=1e-11)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31))
def test_additivity(seed):
    r = np.random.default_rng(seed)
    space = make_space(2, 3, 1)
    u, v = random_function(space, r), random_function(space, r)
    lhs = numerical_gradient(u + v).coeffs
    rhs = numerical_gradient(u).coeffs + numerical_gradient(v).coeffs
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.floats(-100, 100), st.integers(0, 2**31))
def test_lifting_homogeneity(alpha, seed):
    space = make_space(2, 3, 2)
    v = random_function(space, np.random.default_rng(seed))
    np.testing.assert_allclose(lifting(v * alpha).coeffs, alpha * lifting(v).coeffs,
                               atol=1e-13 * (1 + abs(alpha)) * np.abs(lifting(v).coeffs).max())


def test_central_is_average_of_sides():
    for dim, k in [(1, 2), (2, 1), (2, 2)]:
        space = make_space(dim, 4, k)
        for i in range(dim):
            P = assemble_partial(space, i, Side.PLUS).matrix
            M = assemble_partial(space, i, Side.MINUS).matrix
            C = assemble_partial(space, i, Side.CENTRAL).matrix
            assert abs(C - 0.5 * (P + M)).max() <= 1e-14 * abs(C).max()


def test_trace_operators_on_continuous_function():
    space = make_space(2, 3, 1)
    v = project_local_l2(space, lambda x: 2 * x[:, 0] - x[:, 1])
    vals = [trace_operator(space, i, s) @ v.coeffs for i in range(2) for s in SIDES]
    for a in vals[1:]:
        np.testing.assert_allclose(a, vals[0], atol=1e-13)
    pts = space.interior["points"]
    np.testing.assert_allclose(vals[0], 2 * pts[:, 0] - pts[:, 1], atol=1e-13)


def test_sgn_of_zero_is_one():
    np.testing.assert_array_equal(sgn([-0.0, 0.0, -1e-300, 2.0]), [1.0, 1.0, -1.0, 1.0])


def defining_relation_residual(space, v, w, axis, side):
    """Residual of the integration-by-parts identity, with independent edge loops."""
    m = space.mesh
    nloc = space.nloc
    deg = space.quad_degree
    res = space.eval_matrix.T @ (space.weights_flat * (space.eval_matrix @ w.coeffs))
    res = res + space.grad_matrices[axis].T @ (space.weights_flat * (space.eval_matrix @ v.coeffs))

    def local(cell, x, coeffs):
        ref = m.to_reference(cell, x)
        return space.basis.values(ref), space.basis.values(ref) @ coeffs[cell * nloc:(cell + 1) * nloc]

    for e in m.edges:
        x, wq = e.quadrature(deg)
        nu = e.normal[axis]
        phi_p, vp = local(e.plus, x, v.coeffs)
        if e.minus is None:
            q = vp
            res[e.plus * nloc:(e.plus + 1) * nloc] -= phi_p.T @ (wq * q * nu)
            continue
        phi_m, vm = local(e.minus, x, v.coeffs)
        jump, avg = vp - vm, 0.5 * (vp + vm)
        s = 1.0 if nu >= 0 else -1.0
        q = {Side.PLUS: avg + 0.5 * s * jump, Side.MINUS: avg - 0.5 * s * jump, Side.CENTRAL: avg}[side]
        res[e.plus * nloc:(e.plus + 1) * nloc] -= phi_p.T @ (wq * q * nu)
        res[e.minus * nloc:(e.minus + 1) * nloc] += phi_m.T @ (wq * q * nu)
    return res


@pytest.mark.parametrize("dim,k", [(1, 0), (1, 2), (2, 0), (2, 1), (2, 2)])
def test_defining_relation(dim, k, rng):
    space = make_space(dim, 3, k)
    for trial in range(50):
        v = random_function(space, rng)
        for axis in range(dim):
            side = SIDES[trial % 3]
            w = assemble_partial(space, axis, side)(v)
            r = defining_relation_residual(space, v, w, axis, side)
            scale = np.abs(space.eval_matrix.T @ (space.weights_flat * (space.eval_matrix @ w.coeffs))).max()
            assert np.abs(r).max() <= 1e-11 * max(scale, 1.0)


@pytest.mark.parametrize("dim,k", [(1, 0), (1, 1), (1, 2), (2, 0), (2, 1), (2, 2)])
def test_decomposition_identity(dim, k, rng):
    space = make_space(dim, 4, k)
    for _ in range(100):
        v = random_function(space, rng)
        scale = lp_norm(numerical_gradient(v), 2)
        assert decomposition_residual(v) <= 1e-11 * scale
    assert decomposition_residual(space.function()) == 0.0


def test_row_sparsity():
    space = make_space(2, 4, 1)
    m = space.mesh
    neighbours = {c: {c} for c in range(m.num_cells)}
    for e in m.interior_edges:
        neighbours[e.plus].add(e.minus)
        neighbours[e.minus].add(e.plus)
    for side in SIDES:
        A = assemble_partial(space, 0, side).matrix.tocoo()
        for r, c in zip(A.row, A.col):
            assert c // space.nloc in neighbours[r // space.nloc]


def test_boundary_lift_restores_trace_operator(rng):
    space = make_space(2, 3, 1)
    v = random_function(space, rng)
    g = lambda x: space.boundary["P"] @ v.coeffs
    lift = boundary_lift(space, g)
    for i in range(2):
        full = assemble_partial(space, i, Side.PLUS, "trace").matrix @ v.coeffs
        zero = assemble_partial(space, i, Side.PLUS, "zero").matrix @ v.coeffs
        np.testing.assert_allclose(zero + lift[i], full, atol=1e-12)


def test_invalid_arguments(rng):
    space = make_space(1, 2, 1)
    with pytest.raises(ValueError):
        assemble_partial(space, 1)
    with pytest.raises(ValueError):
        assemble_partial(space, 0, boundary="periodic")
    with pytest.raises(ValueError):
        assemble_partial(space, 0)(random_function(make_space(1, 3, 1), rng))


def test_export_triplets():
    space = DGSpace(build_interval_mesh(2), 0)
    buf = io.StringIO()
    assemble_partial(space, 0, Side.PLUS).export_triplets(buf)
    entries = {(int(a), int(b)): float(c) for a, b, c in (l.split() for l in buf.getvalue().splitlines())}
    dense = assemble_partial(space, 0, Side.PLUS).matrix.toarray()
    for (r, c), val in entries.items():
        assert dense[r, c] == val


def ratio_stats(dim, n, p, rng, gamma, trials=100):
    space = make_space(dim, n, 1, gamma)
    bound_ratio, inverse_ratio = [], []
    for _ in range(trials):
        v = random_function(space, rng)
        grad = lp_norm(numerical_gradient(v), p)
        semi = broken_w1p_seminorm(v, p)
        bound_ratio.append(grad / semi)
        inverse_ratio.append(semi / (grad + jump_term(v, p)))
    return max(bound_ratio), max(inverse_ratio)


@pytest.mark.parametrize("dim,p", [(1, 2.5), (2, 2.0), (2, 1.5)])
def test_gradient_norm_stability(dim, p, rng):
    coarse, _ = ratio_stats(dim, 4, p, rng, 10.0)
    fine, _ = ratio_stats(dim, 32, p, rng, 10.0)
    assert fine <= 1.5 * coarse


@pytest.mark.parametrize("dim,p", [(1, 2.5), (2, 2.0)])
def test_seminorm_control_stability(dim, p, rng):
    _, coarse = ratio_stats(dim, 4, p, rng, 100.0)
    _, fine = ratio_stats(dim, 32, p, rng, 100.0)
    assert fine <= 1.5 * coarse
