"""Discontinuous Ritz methods: direct minimisation of penalised energies on DG spaces."""

from .dg_space import (DGFunction, DGSpace, broken_w1p_norm, broken_w1p_seminorm, evaluate,
                       lp_norm, piecewise_gradient, project_local_l2)
from .energy import (Density, EnergySetup, GradientKind, discrete_energy, discrete_energy_gradient,
                     plaplace_density, sipdg_energy)
from .mesh import Edge, Mesh, build_interval_mesh, build_unit_square_tri_mesh
from .numderiv import (DerivativeOperator, Side, assemble_partial, decomposition_residual, lifting,
                       numerical_gradient)
from .optimizer import MinimizeOptions, MinimizeResult, minimize

__version__ = "0.1.0"
