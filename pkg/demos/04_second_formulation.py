"""A lower-order alternative: bilinear adjoint, multiplier in L2(0,T; H^1_0).

Moving one space derivative onto the multiplier lets phi live in a bilinear
space.  The equal-order choice (bilinear multiplier too) is degenerate: the
constraint matrix is square and invertible, so the only admissible adjoint
is phi = 0.  Taking the multiplier piecewise constant in time fixes this.

Run:  python3 demos/04_second_formulation.py
"""

import numpy as np

from heatctl.assembly import ProblemSpec, assemble_mf2
from heatctl.mesh import build_mesh
from heatctl.oracle import build_and_solve, error_report
from heatctl.solvers import residual_norm, solve_direct

spec = ProblemSpec(eps=1e-4, r=1.0)

eq = assemble_mf2(build_mesh(10, 5, spec.T), spec, multiplier="q1")
print(f"equal-order pair: B is {eq.B.shape[0]}x{eq.B.shape[1]} with rank {np.linalg.matrix_rank(eq.B.toarray())}")

oracle = build_and_solve(50, spec)
for Nx, Nt in [(10, 5), (20, 10), (40, 20), (80, 40)]:
    sol = solve_direct(assemble_mf2(build_mesh(Nx, Nt, spec.T), spec))
    rep = error_report(oracle, sol)
    print(f"{Nx:>3}x{Nt:<3} control error {rep.control_error:.3e}  state error {rep.state_error:.3e}  "
          f"H^-1 residual {residual_norm(sol):.3e}")
