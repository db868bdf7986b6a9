"""Forward heat solver used to check computed controls.

C1 cubic Hermite elements in space, BDF2 (Gear) in time with a backward
Euler first step.  The control load is taken at the new time level.
"""

from __future__ import annotations

from dataclasses import dataclass
import numpy as np
import scipy.sparse.linalg as spla

from .assembly import ForwardOperators, ProblemSpec, assemble_forward
from .mesh import hermite1d


@dataclass
class ForwardRun:
    ops: ForwardOperators
    Nt_f: int
    times: np.ndarray
    trajectory: np.ndarray  # (Nt_f + 1, n_dofs)

    @property
    def Nx_f(self) -> int:
        return self.ops.space.Nx

    @property
    def final(self) -> np.ndarray:
        return self.trajectory[-1]

    def norm_at(self, k: int) -> float:
        y = self.trajectory[k]
        return float(np.sqrt(y @ (self.ops.M @ y)))

    def sample(self, x: np.ndarray, k: int = -1) -> np.ndarray:
        """Values of the state at step ``k`` on points ``x`` of [0, 1]."""
        sp_ = self.ops.space
        x = np.asarray(x, dtype=float)
        i = np.clip(np.floor(x / sp_.dx).astype(int), 0, sp_.Nx - 1)
        s = x / sp_.dx - i
        H = hermite1d(s, sp_.dx)  # (4, n)
        idx = sp_.cell_dofs[i]  # (n, 4)
        y = np.concatenate([self.trajectory[k], [0.0]])
        return np.einsum("nk,kn->n", y[np.where(idx >= 0, idx, -1)], H)


def _control_callable(control):
    if control is None:
        return None
    if callable(control):
        return control
    if hasattr(control, "control"):
        return control.control
    raise TypeError("control must be None, a callable v(x, t), or a solution object")


def solve_forward(spec: ProblemSpec, control=None, Nx_f: int = 64, Nt_f: int = 200, q: int = 6) -> ForwardRun:
    """Integrate y_t - (c y_x)_x + d y = v 1_omega, y(0) = y0, on (0, T)."""
    ops = assemble_forward(Nx_f, spec, q)
    v = _control_callable(control)
    dt = spec.T / Nt_f
    M, K = ops.M.tocsc(), ops.K.tocsc()
    times = np.linspace(0.0, spec.T, Nt_f + 1)
    Y = np.zeros((Nt_f + 1, ops.space.n_dofs))
    Y[0] = ops.project(spec.y0)

    def load(t):
        return ops.load(v, t) if v is not None else 0.0

    if Nt_f >= 1:
        be = spla.splu((M + dt * K).tocsc())
        Y[1] = be.solve(M @ Y[0] + dt * load(times[1]))
    if Nt_f >= 2:
        bdf = spla.splu((1.5 * M + dt * K).tocsc())
        for n in range(1, Nt_f):
            rhs = M @ (2.0 * Y[n] - 0.5 * Y[n - 1]) + dt * load(times[n + 1])
            Y[n + 1] = bdf.solve(rhs)
    return ForwardRun(ops, Nt_f, times, Y)


def final_norm(run: ForwardRun) -> float:
    """L2(0, 1) norm of the state at t = T, sqrt(y^T M y)."""
    return run.norm_at(-1)
