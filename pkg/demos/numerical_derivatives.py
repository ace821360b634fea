"""
Numerical derivatives of a discontinuous function
=================================================

A piecewise constant step on two cells of (0, 1) has a zero elementwise
derivative. The DG numerical derivatives see the jump at x = 1/2 and the
boundary traces, and the lifting carries the jump into the gradient.
"""

import numpy as np

from dritz import (DGSpace, Side, assemble_partial, build_interval_mesh, decomposition_residual,
                   lifting, numerical_gradient, piecewise_gradient, project_local_l2)

space = DGSpace(build_interval_mesh(2), 0)
v = space.function([0.0, 1.0])

# one-sided and central derivatives, one coefficient per cell
for side in (Side.MINUS, Side.CENTRAL, Side.PLUS):
    print(f"{side.name.lower():>8}:", assemble_partial(space, 0, side)(v).coeffs)

# the central derivative splits into the piecewise gradient plus the lifting
print("piecewise:", piecewise_gradient(v).coeffs)
print("  lifting:", lifting(v).coeffs)
print("identity residual:", decomposition_residual(v))

# on a smooth function the numerical gradient reproduces the exact one
space = DGSpace(build_interval_mesh(8), 2)
u = project_local_l2(space, lambda x: x[:, 0] ** 2)
err = np.abs(numerical_gradient(u).quad_values()[:, 0] - 2 * space.points_flat[:, 0]).max()
print("max error of the numerical gradient of x^2 with k = 2:", err)
