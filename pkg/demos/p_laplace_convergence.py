"""
Discontinuous Ritz convergence for a p-Laplace problem
======================================================

Minimise the penalised p = 2.5 energy with exact solution u = x^3 on a
sequence of meshes and print the error table.
"""

from dritz.harness import StudyConfig, emit_table, run_study

config = StudyConfig.for_problem("test1_p2.5", levels=(10, 20, 40, 80))
table = run_study(config, progress=lambda row: print(f"  1/h = {row.inv_h} done"))
print(emit_table(table, "markdown", extended=True))

# the jump penalties of the minimisers vanish under refinement
for row in table.rows:
    print(f"1/h = {row.inv_h:>3}  penalty = {row.penalty:.3e}")
