"""
Sensitivity of the 2D gradient error to the triangulation
=========================================================

With P1 elements the computed gradient is close to piecewise constant, so
its error cannot drop much below the best piecewise constant approximation
of the exact gradient. Splitting each square into four triangles instead of
two halves that level at the same 1/h.
"""

from dritz import DGSpace, lp_norm, project_local_l2
from dritz.harness import StudyConfig, build_mesh, emit_table, run_study

for pattern in ("diagonal", "crisscross"):
    config = StudyConfig.for_problem("test4_2d_p2.5", levels=(4, 8, 16), mesh=pattern)
    print(pattern)
    print(emit_table(run_study(config), "markdown"))
    space = DGSpace(build_mesh(config, 16), 0)
    best = lp_norm(project_local_l2(space, config.grad_exact, components=2), config.p, exact=config.grad_exact)
    print(f"best piecewise constant gradient error at 1/h = 16: {best:.2e}\n")
