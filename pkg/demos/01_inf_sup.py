"""How stable is the mixed pair?  Discrete inf-sup constants for the eps > 0 problem.

The constant delta_h is the square root of the smallest eigenvalue of
B A^{-1} B^T measured in the multiplier Gram matrix J.  When it stays away
from zero as h shrinks, the saddle-point system is uniformly well posed and
CG on the dual problem converges in a mesh-independent number of steps.

Run:  python3 demos/01_inf_sup.py
"""

from heatctl.assembly import ProblemSpec, assemble_mf1
from heatctl.mesh import build_mesh
from heatctl.solvers import cg_condition_bound, infsup_delta

meshes = [(10, 5), (20, 10), (40, 20)]

print("delta_h for eps = 1e-2 and three augmentation parameters r")
print(f"{'mesh':>8} {'r=1e-2':>10} {'r=1':>10} {'r=1e2':>10}")
for Nx, Nt in meshes:
    mesh = build_mesh(Nx, Nt, 0.5)
    deltas = [infsup_delta(assemble_mf1(mesh, ProblemSpec(r=r))).delta for r in (1e-2, 1.0, 1e2)]
    print(f"{Nx:>4}x{Nt:<3} " + " ".join(f"{d:10.5f}" for d in deltas))

# delta scales like r^{-1/2} once r is large enough; r^{-1} delta^{-2} then stays near 1
mesh = build_mesh(20, 10, 0.5)
for r in (1.0, 1e2):
    system = assemble_mf1(mesh, ProblemSpec(r=r))
    print(f"r = {r:g}: r^-1 delta^-2 = {cg_condition_bound(system):.4f}")
