"""Null controllability (eps = 0) through the normalised variable psi = phi / rho0.

With eps = 0 the adjoint blows up like exp(K1 / (T - t)) near the final time.
Writing phi = rho0 psi removes that singularity: the unknowns psi and the
multiplier stay bounded and the control is read off directly as rho0 v = psi
on omega.  CG on the dual problem needs a handful of iterations per mesh.

The forward solve at the end integrates the heat equation with the computed
control; its final state shrinks as the mesh is refined.

Run:  python3 demos/03_null_control.py
"""

from heatctl.assembly import ProblemSpec, assemble_mf3norm
from heatctl.forward import final_norm, solve_forward
from heatctl.mesh import build_mesh
from heatctl.solvers import cg_dual, residual_norm, state_norm, weighted_control_norm

spec = ProblemSpec(eps=0.0, r=1.0)
print(f"{'mesh':>8} {'iters':>6} {'||rho0 v||':>11} {'||y||':>8} {'residual':>9} {'||y(T)||':>9}")
for Nx, Nt in [(20, 10), (40, 20), (80, 40)]:
    system = assemble_mf3norm(build_mesh(Nx, Nt, spec.T), spec)
    sol = cg_dual(system)
    yT = final_norm(solve_forward(spec, sol, Nx_f=2 * Nx, Nt_f=4 * Nt))
    print(f"{Nx:>4}x{Nt:<3} {sol.iterations:>6} {weighted_control_norm(sol):11.4f} {state_norm(sol):8.4f} "
          f"{residual_norm(sol):9.4f} {yT:9.2e}")
