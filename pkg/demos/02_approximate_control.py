"""Approximate controllability (eps > 0) and a check against the Fourier oracle.

The penalised problem drives y(., T) to a state of size about sqrt(eps).
For constant coefficients the optimal adjoint is a sine series whose
coefficients solve a small dense system; we use it to measure the error of
the space-time finite element solution, then integrate the heat equation
forward with the computed control to see where the state actually lands.

Run:  python3 demos/02_approximate_control.py [output-dir]
"""

import sys

from heatctl.assembly import ProblemSpec, assemble_mf1
from heatctl.forward import final_norm, solve_forward
from heatctl.mesh import build_mesh
from heatctl.oracle import build_and_solve, error_report
from heatctl.report import parse_config, run
from heatctl.solvers import cg_dual, final_multiplier_norm

spec = ProblemSpec(eps=1e-2, r=1.0)
oracle = build_and_solve(50, spec)
yT = oracle.y_modes(spec.T)[0]
print(f"oracle: ||phi_T|| = {oracle.phi_T_norm():.5f}, ||y(T)|| = {(0.5 * yT @ yT) ** 0.5:.5f}")

system = assemble_mf1(build_mesh(40, 20, spec.T), spec)
sol = cg_dual(system)
rep = error_report(oracle, sol)
print(f"40x20 mesh, {sol.iterations} CG iterations: relative control error {rep.control_error:.2e}, "
      f"state error {rep.state_error:.2e}")
print(f"||lambda_h(., T)|| = {final_multiplier_norm(sol):.5f}")

free = final_norm(solve_forward(spec, None, Nx_f=80, Nt_f=160))
ctrl = final_norm(solve_forward(spec, sol, Nx_f=80, Nt_f=160))
print(f"forward solve: ||y(T)|| without control {free:.5f}, with the computed control {ctrl:.5f}")

# the same study as a CSV with fitted rates
out = sys.argv[1] if len(sys.argv) > 1 else None
cfg = parse_config("mesh.family = 10x5, 20x10, 40x20, 80x40\noutput.name = approximate\n")
if out:
    cfg.output.dir = out
report = run(cfg)
for key, (slope, _, n) in report.slopes.items():
    print(f"rate of {key}: {slope:.2f} over {n} meshes")
