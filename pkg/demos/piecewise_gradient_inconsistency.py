"""
Why the piecewise gradient alone is not enough
==============================================

For the Poisson problem on (-1/2, 1/2)^2 the scheme built from elementwise
gradients plus jump penalties stops converging: its error plateaus at a
level set by the penalty. The symmetric interior penalty scheme, which adds
the consistency flux terms, converges at the optimal rate.
"""

from dritz import DGSpace, build_unit_square_tri_mesh
from dritz.harness import StudyConfig, compute_rate, piecewise_h1_error
from dritz.poisson_linear import Scheme, assemble, consistency_residual, solve

data = StudyConfig.for_problem("table1_poisson")
levels = (4, 8, 16)
for kind in (Scheme.PW, Scheme.SIPDG):
    for gamma in (10.0, 100.0):
        errors = []
        for n in levels:
            space = DGSpace(build_unit_square_tri_mesh(n, gamma, data.origin), 2)
            u = solve(assemble(kind, space, gamma, data.forcing, data.boundary))
            errors.append(piecewise_h1_error(u, data.grad_exact))
        rates = [compute_rate(a, b, 1 / m, 1 / n) for a, b, m, n in zip(errors, errors[1:], levels, levels[1:])]
        print(f"{kind.value:>6} gamma={gamma:<6g} errors", " ".join(f"{e:.2e}" for e in errors),
              " rates", " ".join(f"{r:.2f}" for r in rates))

# the defect of the exact solution in each scheme, measured in a dual norm
for kind in (Scheme.PW, Scheme.SIPDG):
    space = DGSpace(build_unit_square_tri_mesh(16, 10.0, data.origin), 2)
    r = consistency_residual(kind, space, data.exact, data.forcing, data.grad_exact)
    print(f"consistency residual of {kind.value} at 1/h = 16: {r:.2e}")
