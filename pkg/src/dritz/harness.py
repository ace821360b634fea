"""Convergence studies: mesh sequences, errors, rates and table output.

A study is described by a :class:`StudyConfig`. Built-in problems fill in
the data (exponent, penalty, exact solution, forcing, boundary values and
mesh levels); a ``custom`` problem takes expressions in ``x`` (and ``y``)
from the config instead.
"""

import csv
import io
import math
from dataclasses import dataclass, field, fields, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.spatial import cKDTree

from .dg_space import DGSpace, lp_norm, piecewise_gradient, project_local_l2
from .energy import EnergySetup, GradientKind, plaplace_density
from .mesh import build_interval_mesh, build_unit_square_tri_mesh
from .numderiv import lifting, numerical_gradient
from .optimizer import MinimizeOptions, minimize
from .poisson_linear import Scheme, assemble, solve
from .quadrature import gauss_interval

PROBLEMS = ("test1_p2.5", "test2_p1.5", "test3_p8.3", "test4_2d_p2.5", "table1_poisson", "custom")


class ConfigError(ValueError):
    pass


class StudyError(RuntimeError):
    pass


# -- problem data -----------------------------------------------------------

def _x(pts):
    return pts[:, 0]


def _test1():
    c = 9 * math.sqrt(3)
    return dict(
        dimension=1, p=2.5, gamma=100.0, degree=1, levels=(10, 20, 40, 80, 160, 320),
        exact=lambda x: _x(x) ** 3,
        grad_exact=lambda x: 3 * x ** 2,
        forcing=lambda x: -c * _x(x) ** 2,
        boundary=lambda x: _x(x),
    )


def _test2():
    # F = -(|u'|^{-1/2} u')' for u = sin(pi x); singular at x = 1/2
    def forcing(x):
        t = np.pi * _x(x)
        return 0.5 * np.pi ** 1.5 * np.sin(t) / np.sqrt(np.abs(np.cos(t)))

    return dict(
        dimension=1, p=1.5, gamma=10.0, degree=1, levels=(10, 20, 40, 80, 160, 320),
        exact=lambda x: np.sin(np.pi * _x(x)),
        grad_exact=lambda x: np.pi * np.cos(np.pi * x),
        forcing=forcing,
        boundary=lambda x: np.zeros(len(x)),
        # the energy is not twice differentiable where u' = 0, so a max-norm
        # gradient of 1e-8 is out of reach in floating point
        gtol=1e-5,
    )


def _test3():
    return dict(
        dimension=1, p=8.3, gamma=10.0, degree=1, levels=(10, 20, 40, 80, 160, 320),
        exact=None, grad_exact=None,
        forcing=lambda x: 2000 * _x(x) / (100 * _x(x) ** 2 + 1) ** 2,
        boundary=lambda x: _x(x) / 2,
        initial_guess="boundary",
        reference_n=640,
    )


def _test4():
    def u(x):
        return np.exp(x[:, 0] + x[:, 1])

    return dict(
        dimension=2, p=2.5, gamma=100.0, degree=1, levels=(4, 8, 16, 32),
        exact=u,
        grad_exact=lambda x: np.column_stack([u(x), u(x)]),
        forcing=lambda x: -3 * 2 ** 0.25 * np.exp(1.5 * (x[:, 0] + x[:, 1])),
        boundary=u,
        # four triangles per square; see the README on mesh sensitivity
        mesh="crisscross",
    )


def _table1():
    def u(x):
        return (0.25 - x[:, 0] ** 2) * (0.25 - x[:, 1] ** 2)

    return dict(
        dimension=2, p=2.0, gamma=10.0, degree=2, levels=(2, 4, 8, 16, 32, 64),
        exact=u,
        grad_exact=lambda x: np.column_stack([-2 * x[:, 0] * (0.25 - x[:, 1] ** 2),
                                              -2 * x[:, 1] * (0.25 - x[:, 0] ** 2)]),
        forcing=lambda x: 2 * (0.25 - x[:, 1] ** 2) + 2 * (0.25 - x[:, 0] ** 2),
        boundary=lambda x: np.zeros(len(x)),
        origin=(-0.5, -0.5),
    )


_REGISTRY = {
    "test1_p2.5": _test1,
    "test2_p1.5": _test2,
    "test3_p8.3": _test3,
    "test4_2d_p2.5": _test4,
    "table1_poisson": _table1,
}


@dataclass
class StudyConfig:
    problem: str = "custom"
    dimension: int = 1
    p: float = 2.0
    gamma: float = 10.0
    degree: int = 1
    levels: tuple = (10, 20, 40, 80, 160, 320)
    gradient_kind: str = "dgfe"
    gtol: float = 1e-8
    max_iter: int = 20000
    memory: int = 10
    precondition: bool = True
    initial_guess: str = "zero"
    warm_start: bool = False
    exact: object = None
    grad_exact: object = None
    forcing: object = None
    boundary: object = None
    reference_n: int = 640
    domain: tuple = (0.0, 1.0)
    origin: tuple = (0.0, 0.0)
    mesh: str = "diagonal"
    output: str = None

    def __post_init__(self):
        if self.problem not in PROBLEMS:
            raise ConfigError(f"unknown problem {self.problem!r}")
        if not self.p > 1:
            raise ConfigError("p must be > 1")
        if self.dimension not in (1, 2):
            raise ConfigError("dimension must be 1 or 2")
        levels = tuple(int(n) for n in self.levels)
        if not levels or any(n < 1 for n in levels) or any(b <= a for a, b in zip(levels, levels[1:])):
            raise ConfigError("levels must be positive and strictly increasing")
        self.levels = levels
        if self.gamma < 0:
            raise ConfigError("gamma must be >= 0")
        if self.mesh not in ("diagonal", "crisscross"):
            raise ConfigError("mesh must be 'diagonal' or 'crisscross'")
        if self.initial_guess not in ("zero", "boundary"):
            raise ConfigError("initial_guess must be 'zero' or 'boundary'")
        GradientKind(self.gradient_kind)

    @classmethod
    def for_problem(cls, problem, **overrides):
        """Config with the built-in data of ``problem``, then ``overrides``."""
        data = _REGISTRY[problem]() if problem in _REGISTRY else {}
        data.update(overrides)
        return cls(problem=problem, **data)

    def options(self):
        return MinimizeOptions(gtol=self.gtol, max_iter=self.max_iter, memory=self.memory)


# -- tables -----------------------------------------------------------------

@dataclass
class StudyRow:
    inv_h: int
    lp_error: float
    w1p_error: float
    iterations: int
    energy: float
    penalty: float = 0.0
    status: str = "converged"
    lp_rate: float = None
    w1p_rate: float = None


@dataclass
class ConvergenceTable:
    problem: str
    rows: list = field(default_factory=list)
    failure: str = None

    def append(self, row):
        if self.rows:
            prev = self.rows[-1]
            h1, h2 = 1.0 / prev.inv_h, 1.0 / row.inv_h
            row.lp_rate = _safe_rate(prev.lp_error, row.lp_error, h1, h2)
            row.w1p_rate = _safe_rate(prev.w1p_error, row.w1p_error, h1, h2)
        self.rows.append(row)

    def column(self, name):
        return [getattr(r, name) for r in self.rows]


def compute_rate(e1, e2, h1, h2):
    """Observed order log(e1/e2) / log(h1/h2)."""
    if min(e1, e2, h1, h2) <= 0:
        raise ValueError("errors and mesh sizes must be positive")
    if h1 == h2:
        raise ValueError("mesh sizes must differ")
    return math.log(e1 / e2) / math.log(h1 / h2)


def _safe_rate(e1, e2, h1, h2):
    try:
        return compute_rate(e1, e2, h1, h2)
    except ValueError:
        return float("nan")


COLUMNS = ("1/h", "Lp_error", "Lp_rate", "W1p_error", "W1p_rate", "iterations")
EXTENDED = ("energy", "status")


def _sci(x):
    return f"{x:.2e}"


def _rate(x):
    return "-" if x is None else f"{x:.2f}"


def _table_rows(table, extended):
    out = []
    for r in table.rows:
        row = [str(r.inv_h), _sci(r.lp_error), _rate(r.lp_rate), _sci(r.w1p_error),
               _rate(r.w1p_rate), str(r.iterations)]
        if extended:
            row += [repr(float(r.energy)), r.status]
        out.append(row)
    return out


def emit_table(table, format="csv", extended=False):
    """Render a table as CSV or markdown text.

    Errors use three significant digits and rates two decimals.
    """
    if not table.rows:
        raise ValueError("table is empty")
    header = list(COLUMNS) + (list(EXTENDED) if extended else [])
    rows = _table_rows(table, extended)
    if format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        return buf.getvalue()
    if format == "markdown":
        lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
        lines += ["| " + " | ".join(r) + " |" for r in rows]
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown format {format!r}")


def parse_markdown_table(text):
    """Rows of a markdown table produced by :func:`emit_table`, header first."""
    rows = []
    for line in text.strip().splitlines():
        cells = [c.strip() for c in line.strip().strip("|").split("|")]
        if all(set(c) <= {"-"} for c in cells):
            continue
        rows.append(cells)
    return rows


# -- meshes, sampling -----------------------------------------------------

def build_mesh(config, n):
    if config.dimension == 1:
        a, b = config.domain
        return build_interval_mesh(n, a, b, config.gamma)
    return build_unit_square_tri_mesh(n, config.gamma, config.origin, config.mesh)


def sample(v, points):
    """Values of a scalar DG function at arbitrary points of the mesh."""
    space = v.space
    m = space.mesh
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] != m.dim:
        pts = pts.reshape(-1, m.dim)
    tree = cKDTree(m.centroids)
    k = min(8, m.num_cells)
    _, cand = tree.query(pts, k=k)
    cand = np.asarray(cand).reshape(len(pts), k)
    out = np.full(len(pts), np.nan)
    coeffs = v.coeffs.reshape(-1, space.nloc)
    for j in range(k):
        todo = np.isnan(out)
        if not todo.any():
            break
        for c in np.unique(cand[todo, j]):
            sel = todo & (cand[:, j] == c)
            ref = m.to_reference(c, pts[sel])
            tol = 1e-12
            inside = np.all(ref >= -tol, axis=1) & (ref.sum(axis=1) <= 1 + tol if m.dim == 2
                                                   else ref[:, 0] <= 1 + tol)
            idx = np.flatnonzero(sel)[inside]
            if idx.size:
                out[idx] = space.basis.values(ref[inside]) @ coeffs[c]
    if np.isnan(out).any():
        raise ValueError("some points lie outside the mesh")
    return out


# -- conforming reference ---------------------------------------------------

class FEReference:
    """Continuous piecewise linear function on a uniform 1D grid."""

    def __init__(self, nodes, values, result=None):
        self.nodes = nodes
        self.values = values
        self.result = result

    def __call__(self, x):
        return np.interp(np.asarray(x, dtype=float).reshape(len(x), -1)[:, 0], self.nodes, self.values)

    def gradient(self, x):
        x = np.asarray(x, dtype=float).reshape(len(x), -1)[:, 0]
        slopes = np.diff(self.values) / np.diff(self.nodes)
        cell = np.clip(np.searchsorted(self.nodes, x, side="right") - 1, 0, len(slopes) - 1)
        return slopes[cell][:, None]


def fe_reference(config, n_fine, options=None):
    """Minimise the continuous energy over conforming P1 with nodal boundary values."""
    if config.dimension != 1:
        raise ValueError("the conforming reference is 1D only")
    a, b = config.domain
    p = config.p
    nodes = np.linspace(a, b, n_fine + 1)
    h = (b - a) / n_fine
    t, w = gauss_interval(2 * 4 + 2)
    t = t[:, 0]
    xq = (nodes[:-1, None] + h * t[None, :])
    Fq = np.asarray(config.forcing(xq.reshape(-1, 1)), dtype=float).reshape(xq.shape) if config.forcing else 0 * xq
    wq = h * w
    # load against the hat functions: left end uses 1 - t, right end uses t
    load = np.zeros(n_fine + 1)
    load[:-1] += (Fq * (1 - t) * wq).sum(axis=1)
    load[1:] += (Fq * t * wq).sum(axis=1)
    g = config.boundary
    ends = np.array([[a], [b]])
    gval = np.asarray(g(ends), dtype=float) if g is not None else np.zeros(2)

    def full(c):
        return np.concatenate([[gval[0]], c, [gval[1]]])

    def energy(c):
        u = full(c)
        s = np.diff(u) / h
        val = h * np.sum(np.abs(s) ** p) / p - load @ u
        flux = np.abs(s) ** (p - 2) * s if p >= 2 else np.sign(s) * np.abs(s) ** (p - 1)
        gfull = -load.copy()
        gfull[:-1] -= flux
        gfull[1:] += flux
        return float(val), gfull[1:-1]

    x0 = np.interp(nodes[1:-1], [a, b], gval)
    nint = n_fine - 1
    K = sp.diags([-np.ones(nint - 1), 2 * np.ones(nint), -np.ones(nint - 1)], [-1, 0, 1]) / h
    pre = spla.splu(K.tocsc()).solve
    res = minimize(energy, x0, options or config.options(), precondition=pre)
    if not res.converged:
        raise StudyError(f"reference minimisation ended with status {res.status}")
    return FEReference(nodes, full(res.x), res)


# -- studies ----------------------------------------------------------------

def _dr_level(config, n, guess=None):
    mesh = build_mesh(config, n)
    space = DGSpace(mesh, config.degree)
    setup = EnergySetup(space, plaplace_density(config.p, config.forcing),
                        GradientKind(config.gradient_kind), g=config.boundary)
    if guess is not None:
        x0 = project_local_l2(space, lambda x: sample(guess, x)).coeffs
    elif config.initial_guess == "boundary":
        x0 = project_local_l2(space, config.boundary).coeffs
    else:
        x0 = np.zeros(space.ndof)
    pre = setup.preconditioner() if config.precondition else None
    res = minimize(setup, x0, config.options(), precondition=pre)
    u = space.function(res.x)
    return setup, u, res


def _gradient_field(setup, u):
    kind = setup.gradient_kind
    if kind is GradientKind.DGFE_CENTRAL:
        return numerical_gradient(u)
    if kind is GradientKind.PIECEWISE:
        return piecewise_gradient(u)
    return piecewise_gradient(u) + lifting(u)


def run_study(config, progress=None):
    """Run every level of ``config`` and collect errors and rates.

    A level whose minimisation fails ends the study; the partial table
    carries the reason in ``failure``.
    """
    table = ConvergenceTable(config.problem)
    if config.problem == "table1_poisson":
        for n in config.levels:
            table.append(_table1_row(config, n))
        return table
    exact, grad_exact = config.exact, config.grad_exact
    subdiv = {}
    if exact is None:
        if config.dimension != 1:
            raise ConfigError("a study without an exact solution must be 1D")
        if config.reference_n < 2 * config.levels[-1]:
            raise ConfigError("reference_n must be at least twice the finest level")
        ref = fe_reference(config, config.reference_n)
        exact, grad_exact = ref, ref.gradient
        subdiv = {n: max(1, config.reference_n // n) for n in config.levels}
    guess = None
    for n in config.levels:
        setup, u, res = _dr_level(config, n, guess if config.warm_start else None)
        sub = subdiv.get(n, 1)
        lp = lp_norm(u, config.p, exact=exact, subdivisions=sub)
        w1p = lp_norm(_gradient_field(setup, u), config.p, exact=grad_exact, subdivisions=sub)
        pen = sum(setup.penalty(u.coeffs))
        table.append(StudyRow(n, lp, w1p, res.iterations, res.energy, pen, res.status))
        if progress is not None:
            progress(table.rows[-1])
        if not res.converged:
            table.failure = f"level 1/h={n}: optimizer ended with status {res.status}"
            break
        guess = u
    return table


def piecewise_h1_error(u, grad_exact):
    """Unweighted piecewise H1 error ||grad(u - u_h)||_{L2(T_h)}."""
    return lp_norm(piecewise_gradient(u), 2, exact=grad_exact)


def _table1_row(config, n):
    mesh = build_mesh(config, n)
    space = DGSpace(mesh, config.degree)
    scheme = assemble(Scheme.PW, space, config.gamma, config.forcing, config.boundary)
    u = solve(scheme)
    return StudyRow(n, lp_norm(u, 2, exact=config.exact), piecewise_h1_error(u, config.grad_exact),
                    0, float("nan"))


def run_table1(gammas=(10.0, 100.0, 1000.0), levels=(2, 4, 8, 16, 32, 64)):
    """Piecewise H1 errors of the piecewise-gradient scheme for several penalties."""
    tables = {}
    for gam in gammas:
        cfg = StudyConfig.for_problem("table1_poisson", gamma=float(gam), levels=tuple(levels))
        tables[gam] = run_study(cfg)
    return tables


def emit_table1(tables):
    """CSV with one error/rate column pair per penalty value."""
    gammas = list(tables)
    header = ["1/h"]
    for gam in gammas:
        header += [f"H1_error_gamma_{gam:g}", f"rate_gamma_{gam:g}"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    nrows = len(next(iter(tables.values())).rows)
    for i in range(nrows):
        row = [str(tables[gammas[0]].rows[i].inv_h)]
        for gam in gammas:
            r = tables[gam].rows[i]
            row += [_sci(r.w1p_error), _rate(r.w1p_rate)]
        w.writerow(row)
    return buf.getvalue()


def plot_data(config, points_per_cell=5):
    """Rows ``(1/h, x[, y], u_h, u)`` sampling each level's minimiser."""
    rows = []
    ref = None
    exact = config.exact
    if exact is None:
        ref = fe_reference(config, config.reference_n)
        exact = ref
    guess = None
    for n in config.levels:
        if config.problem == "table1_poisson":
            space = DGSpace(build_mesh(config, n), config.degree)
            u = solve(assemble(Scheme.PW, space, config.gamma, config.forcing, config.boundary))
        else:
            _, u, _ = _dr_level(config, n, guess if config.warm_start else None)
            guess = u
        pts = _plot_points(u.space, points_per_cell)
        uh = sample(u, pts)
        ue = np.asarray(exact(pts), dtype=float)
        for x, a, b in zip(pts, uh, ue):
            rows.append((n, *x, a, b))
    return rows


def _plot_points(space, k):
    m = space.mesh
    if m.dim == 1:
        t = (np.arange(k) + 0.5) / k
        x0 = m.vertices[m.cells[:, 0], 0]
        x1 = m.vertices[m.cells[:, 1], 0]
        return (x0[:, None] + (x1 - x0)[:, None] * t[None, :]).reshape(-1, 1)
    return m.centroids.copy()


def emit_plot_data(rows, dim):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["1/h", "x"] + (["y"] if dim == 2 else []) + ["u_h", "u"])
    for r in rows:
        w.writerow([str(r[0])] + [repr(float(v)) for v in r[1:]])
    return buf.getvalue()


# -- config files -----------------------------------------------------------

_FIELD_TYPES = {f.name: f for f in fields(StudyConfig)}
_EXPR_KEYS = ("exact", "grad_exact", "forcing", "boundary")
_MATH = {name: getattr(np, name) for name in (
    "sin", "cos", "tan", "exp", "log", "sqrt", "abs", "sign", "pi", "e", "sinh", "cosh",
    "tanh", "arctan", "minimum", "maximum", "where")}


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _expression(text, dim, components=1):
    """Vectorised callable from an expression in x (and y)."""
    parts = [s.strip() for s in text.split(";")]
    if len(parts) != components:
        raise ConfigError(f"expected {components} expression(s) in {text!r}")
    codes = []
    for s in parts:
        try:
            codes.append(compile(s, "<config>", "eval"))
        except SyntaxError as exc:
            raise ConfigError(f"bad expression {s!r}: {exc}") from exc

    def f(pts):
        env = dict(_MATH)
        env["x"] = pts[:, 0]
        if dim == 2:
            env["y"] = pts[:, 1]
        vals = [np.broadcast_to(np.asarray(eval(c, {"__builtins__": {}}, env), dtype=float), (len(pts),))
                for c in codes]
        return vals[0] if components == 1 else np.column_stack(vals)

    return f


def _tuple(text, cast):
    return tuple(cast(s) for s in text.replace(",", " ").split())


def _convert(key, value):
    if key in ("dimension", "degree", "max_iter", "memory", "reference_n"):
        return int(value)
    if key in ("p", "gamma", "gtol"):
        return float(value)
    if key == "levels":
        return _tuple(value, int)
    if key in ("domain", "origin"):
        return _tuple(value, float)
    if key in ("precondition", "warm_start"):
        return _bool(value)
    return value


def parse_config(text):
    """Parse ``key = value`` lines into a :class:`StudyConfig`.

    Blank lines and ``#`` comments are ignored; unknown keys are errors.
    """
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        raw[key] = value
    problem = raw.pop("problem", "custom")
    if problem not in PROBLEMS:
        raise ConfigError(f"unknown problem {problem!r}")
    values = {}
    for key, value in raw.items():
        if key in _EXPR_KEYS:
            continue
        try:
            values[key] = _convert(key, value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {value!r}") from exc
    if problem != "custom":
        base = _REGISTRY[problem]()
        base.update(values)
        values = base
    dim = values.get("dimension", 1)
    for key in _EXPR_KEYS:
        if key in raw:
            comps = dim if key == "grad_exact" else 1
            values[key] = _expression(raw[key], dim, comps)
    try:
        return StudyConfig(problem=problem, **values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path):
    with open(path) as fh:
        return parse_config(fh.read())


def with_levels(config, levels):
    return replace(config, levels=tuple(levels))
