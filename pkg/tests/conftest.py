"""Shared fixtures for the acceptance suite.

The expensive computations (mesh families up to 160x80 and the 640x320
eps = 0 references) run once per session.  Set HEATCTL_ACCEPTANCE_CACHE to a
directory to keep their numeric results as JSON between sessions; delete the
directory to force a recomputation.
"""

from __future__ import annotations

import gc
import json
import os
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

ACCEPTANCE_LINES: list[str] = []

MF1_MESHES = [(10, 5), (20, 10), (40, 20), (80, 40), (160, 80)]
MF3_MESHES = [(40, 20), (80, 40), (160, 80), (320, 160)]
MF3_REFERENCE = (640, 320)
R_TAGS = {"r001": 0.01, "r1": 1.0, "r100": 100.0}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def record():
    def _record(n: int, ok: bool, detail: str) -> bool:
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return _record


def _cached(name: str, compute):
    root = os.environ.get("HEATCTL_ACCEPTANCE_CACHE")
    if not root:
        return compute()
    path = Path(root) / f"{name}.json"
    if path.exists():
        return json.loads(path.read_text())
    out = compute()
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(out, indent=1))
    return out


def _rows(rep) -> list[dict]:
    clean = []
    for row in rep.rows:
        clean.append({k: (float(v) if isinstance(v, (float, np.floating)) else v) for k, v in row.items()})
    return clean


def _config(**kw):
    from heatctl.report import RunConfig
    cfg = RunConfig()
    for key, value in kw.items():
        section, name = key.split("__")
        setattr(cfg, section, replace(getattr(cfg, section), **{name: value}))
    return cfg


@pytest.fixture(scope="session")
def infsup_tables():
    """The three MF1 inf-sup tables, computed by the table pipeline."""
    from heatctl.report import table

    def compute():
        return {tag: _rows(table(f"infsup-{tag}")) for tag in R_TAGS}
    return _cached("infsup", compute)


@pytest.fixture(scope="session")
def mf1_runs():
    """r = 1 direct solves for eps = 1e-2 and 1e-4 on the five MF1 meshes."""
    from heatctl.report import run

    def compute():
        out = {}
        for eps in (1e-2, 1e-4):
            rep = run(_config(problem__eps=eps, problem__r=1.0, mesh__family=tuple(MF1_MESHES),
                              solver__formulation="mf1"))
            out[f"{eps:g}"] = {"rows": _rows(rep), "slopes": {k: v[0] for k, v in rep.slopes.items()}}
        return out
    return _cached("mf1", compute)


@pytest.fixture(scope="session")
def cg_runs():
    """CG iteration counts for every (r, eps) on the five MF1 meshes, plus CG/direct gaps."""
    from heatctl.assembly import ProblemSpec, assemble_mf1
    from heatctl.mesh import build_mesh
    from heatctl.report import run
    from heatctl.solvers import cg_dual, solve_direct

    def compute():
        counts = {}
        for tag, r in R_TAGS.items():
            for eps in (1e-2, 1e-4, 1e-8):
                rep = run(_config(problem__eps=eps, problem__r=r, mesh__family=tuple(MF1_MESHES),
                                  solver__formulation="mf1", solver__path="cg", oracle__enabled=False))
                counts[f"{tag} {eps:g}"] = [int(row["iterations"]) for row in rep.rows]
        gaps = {}
        for tag, r in R_TAGS.items():
            for eps in (1e-2, 1e-8):
                system = assemble_mf1(build_mesh(80, 40, 0.5), ProblemSpec(eps=eps, r=r))
                d, c = solve_direct(system), cg_dual(system)
                gaps[f"{tag} {eps:g}"] = max(
                    float(np.linalg.norm(c.phi - d.phi) / np.linalg.norm(d.phi)),
                    float(np.linalg.norm(c.lam - d.lam) / np.linalg.norm(d.lam)))
        return {"counts": counts, "gaps": gaps}
    return _cached("cg", compute)


@pytest.fixture(scope="session")
def mf3_runs():
    """eps = 0 runs per r against a self-computed 640x320 reference.

    The reference solution itself supplies the norms (and, for r = 1, the
    controlled forward norm) on the finest published mesh.
    """
    from heatctl.assembly import assemble_mf3norm
    from heatctl.forward import final_norm, solve_forward
    from heatctl.mesh import build_mesh
    from heatctl.report import reference_from_solution, solve_mesh
    from heatctl.solvers import cg_dual

    def compute():
        out = {}
        for tag, r in R_TAGS.items():
            cfg = _config(problem__eps=0.0, problem__r=r, solver__path="cg", solver__formulation="mf3",
                          forward__enabled=(r == 1.0), mesh__family=tuple(MF3_MESHES))
            spec = cfg.problem_spec()
            system = assemble_mf3norm(build_mesh(*MF3_REFERENCE, spec.T), spec)
            sol = cg_dual(system, gamma=cfg.solver.gamma)
            ref = reference_from_solution(sol, cfg.reference.lattice_q)
            fine = {"h": system.mesh.h, "Nx": MF3_REFERENCE[0], "Nt": MF3_REFERENCE[1],
                    "control_norm": ref.control_norm, "state_norm": ref.state_norm,
                    "iterations": sol.iterations}
            if r == 1.0:
                fwd = solve_forward(spec, sol, Nx_f=2 * MF3_REFERENCE[0], Nt_f=4 * MF3_REFERENCE[1])
                fine["forward_final"] = final_norm(fwd)
            del system, sol
            gc.collect()
            rows = [solve_mesh(cfg, nx, nt, ref) for nx, nt in MF3_MESHES]
            out[tag] = {"rows": [{k: (float(v) if isinstance(v, np.floating) else v) for k, v in row.items()}
                                 for row in rows] + [fine]}
            del ref
            gc.collect()
        return out
    return _cached("mf3", compute)


@pytest.fixture(scope="session")
def mf2_runs():
    from heatctl.report import run

    def compute():
        rep = run(_config(problem__eps=1e-4, problem__r=1.0, mesh__family=tuple(MF1_MESHES),
                          solver__formulation="mf2"))
        return {"rows": _rows(rep), "slopes": {k: v[0] for k, v in rep.slopes.items()}}
    return _cached("mf2", compute)
