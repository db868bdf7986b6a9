"""Solution paths for a :class:`~heatctl.assembly.MixedSystem`.

* :func:`solve_direct` factors the symmetric block matrix once.
* :func:`infsup_delta` runs the power iteration whose limit gives the
  discrete inf-sup constant.
* :func:`cg_dual` runs conjugate gradient on the dual functional, in
  multiplier coordinates with the Gram matrix ``J`` as inner product.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import weights as W
from .assembly import MixedSystem, lstar_op, normalized_op
from .linalg import DEFAULT_SEED, Factorization, FactorizationError, factor
from .mesh import (Block, Space, domain_blocks, edge_blocks, eval_at_points, eval_on_block, gauss01,
                   local_coeffs, omega_blocks)


class SolverError(RuntimeError):
    pass


@dataclass
class MixedSolution:
    """Discrete adjoint ``phi`` (psi for MF3norm) and multiplier ``lam``."""

    phi: np.ndarray
    lam: np.ndarray
    system: MixedSystem
    iterations: int = 0
    residuals: dict = field(default_factory=dict)

    @property
    def tag(self) -> str:
        return self.system.tag

    # values at quadrature points -------------------------------------------
    def weighted_control_on(self, block: Block) -> np.ndarray:
        """rho0 * v_h at block points (the control vanishes outside omega)."""
        vals = eval_on_block(self.system.phi_map, self.phi, block)
        if self.tag == "MF3norm":
            return vals
        _, Tm = block.points(self.system.mesh)
        return W.eval_rho0_inv(self.system.spec.rho0, Tm) * vals

    def control_on(self, block: Block) -> np.ndarray:
        _, Tm = block.points(self.system.mesh)
        return W.eval_rho0_inv(self.system.spec.rho0, Tm) * self.weighted_control_on(block)

    def state_on(self, block: Block) -> np.ndarray:
        vals = eval_on_block(self.system.lam_map, self.lam, block)
        if self.tag == "MF3norm":
            _, Tm = block.points(self.system.mesh)
            return W.eval_rho_inv(self.system.spec.rho, Tm) * vals
        return vals

    # point evaluators --------------------------------------------------------
    def control(self, x, t):
        """v_h(x, t), zero outside omega."""
        x, t = np.broadcast_arrays(np.asarray(x, float), np.asarray(t, float))
        vals = eval_at_points(self.system.phi_map, self.phi, x, t)
        spec = self.system.spec
        wt = W.eval_rho0_inv(spec.rho0, t)
        vals = vals * (wt if self.tag == "MF3norm" else wt**2)
        a, b = spec.omega
        return np.where((x > a) & (x < b), vals, 0.0)

    def state(self, x, t):
        x, t = np.broadcast_arrays(np.asarray(x, float), np.asarray(t, float))
        vals = eval_at_points(self.system.lam_map, self.lam, x, t)
        if self.tag == "MF3norm":
            vals = vals * W.eval_rho_inv(self.system.spec.rho, t)
        return vals


# ---------------------------------------------------------------- direct


def factor_saddle(system: MixedSystem) -> Factorization:
    try:
        return factor(system.block_matrix(), "indef")
    except FactorizationError as exc:
        raise SolverError(f"saddle-point factorization failed: {exc}") from exc


def solve_direct(system: MixedSystem, fact: Factorization | None = None) -> MixedSolution:
    fact = fact or factor_saddle(system)
    rhs = system.rhs()
    z = fact.solve(rhs)
    # one step of iterative refinement tames the equilibrated LU on stiff blocks
    K = system.block_matrix()
    z = z + fact.solve(rhs - K @ z)
    phi, lam = z[: system.n], z[system.n:]
    r1 = system.A @ phi + system.B.T @ lam - system.L
    r2 = system.B @ phi
    res = {
        "row1": float(np.linalg.norm(r1) / max(np.linalg.norm(system.L), 1e-300)),
        "row2": float(np.linalg.norm(r2, np.inf) / (1 + np.linalg.norm(phi, np.inf))),
    }
    return MixedSolution(phi, lam, system, 0, res)


# ---------------------------------------------------------------- inf-sup


@dataclass
class InfSupResult:
    delta: float
    converged: bool
    iterations: int

    def __float__(self):
        return self.delta


def infsup_delta(system: MixedSystem, tol: float = 1e-8, maxit: int = 1000,
                 fact: Factorization | None = None, seed: int = DEFAULT_SEED,
                 method: str = "lanczos") -> InfSupResult:
    """Discrete inf-sup constant delta, with delta^2 the smallest eigenvalue of S v = mu J v.

    Here S = B A^{-1} B^T.  Every application of S^{-1} J is one solve of the
    block system with right-hand side (0, -J v).

    ``method='power'`` is the plain coupled power iteration: normalize
    v <- lam / |lam|_2 and read the estimate |lam|_2^{-1/2}; it stops when two
    successive estimates agree to ``tol``.  For r >= 1 the extreme eigenvalue
    sits in a tight cluster and this iteration stalls, so the default
    ``method='lanczos'`` feeds the same solves to an implicitly restarted
    Lanczos iteration (ARPACK) on the pencil (J, S).
    """
    fact = fact or factor_saddle(system)
    n, m = system.n, system.m
    v0 = np.random.default_rng(seed).standard_normal(m)
    rhs = np.zeros(n + m)

    def s_inv_j(v):
        rhs[n:] = -(system.J @ v)
        return fact.solve(rhs)[n:].copy()

    if method == "power":
        v = v0 / np.linalg.norm(v0)
        est = np.nan
        for it in range(1, maxit + 1):
            lam = s_inv_j(v)
            nl = np.linalg.norm(lam)
            new = nl ** -0.5
            v = lam / nl
            if np.isfinite(est) and abs(new - est) <= tol * new:
                return InfSupResult(float(new), True, it)
            est = new
        return InfSupResult(float(est), False, maxit)
    if method != "lanczos":
        raise ValueError("method must be 'lanczos' or 'power'")
    # S^{-1} J is self-adjoint in the J inner product: eigsh in regular mode
    # on the pencil (J S^{-1} J, J) returns its dominant eigenvalue 1/delta^2.
    Jf = factor(system.J, "spd")
    counter = {"n": 0}

    def op(v):
        counter["n"] += 1
        return system.J @ s_inv_j(v)

    Aop = spla.LinearOperator((m, m), matvec=op, dtype=float)
    Mop = spla.LinearOperator((m, m), matvec=lambda v: system.J @ v, dtype=float)
    Minv = spla.LinearOperator((m, m), matvec=Jf.solve, dtype=float)
    try:
        mu = spla.eigsh(Aop, k=1, M=Mop, Minv=Minv, which="LA", tol=tol * 1e-2, v0=v0,
                        maxiter=maxit, return_eigenvectors=False)
        return InfSupResult(float(mu[0]) ** -0.5, True, counter["n"])
    except spla.ArpackNoConvergence as exc:
        vals = exc.eigenvalues
        est = float(vals[0]) ** -0.5 if len(vals) else np.nan
        return InfSupResult(est, False, counter["n"])


def cg_condition_bound(system: MixedSystem, delta: float | InfSupResult | None = None) -> float:
    """Condition-number proxy r^{-1} delta^{-2} of the dual operator."""
    if delta is None:
        delta = infsup_delta(system)
    return 1.0 / (system.spec.r * float(delta) ** 2)


# ---------------------------------------------------------------- conjugate gradient


def dual_operator(system: MixedSystem, factA: Factorization | None = None,
                  factJ: Factorization | None = None):
    """w -> J^{-1} B A^{-1} B^T w, self-adjoint and positive in the J inner product."""
    factA = factA or factor(system.A, "spd")
    factJ = factJ or factor(system.J, "spd")

    def apply(w):
        phi = factA.solve(-(system.B.T @ w))
        return factJ.solve(-(system.B @ phi))
    return apply


def cg_dual(system: MixedSystem, gamma: float = 1e-10, maxit: int = 1000,
            factA: Factorization | None = None, factJ: Factorization | None = None) -> MixedSolution:
    try:
        factA = factA or factor(system.A, "spd")
        factJ = factJ or factor(system.J, "spd")
    except FactorizationError as exc:
        raise SolverError(f"CG setup failed: {exc}") from exc
    B, J = system.B, system.J
    lam = np.zeros(system.m)
    phi = factA.solve(system.L - B.T @ lam)
    g = factJ.solve(-(B @ phi))
    w = g.copy()
    gg0 = float(g @ (J @ g))
    gg = gg0
    it = 0
    if gg0 == 0.0:
        return MixedSolution(phi, lam, system, 0, {"cg_ratio": 0.0})
    while True:
        it += 1
        if it > maxit:
            raise SolverError(f"CG did not converge in {maxit} iterations")
        phib = factA.solve(-(B.T @ w))
        wb = factJ.solve(-(B @ phib))
        denom = float(wb @ (J @ w))
        if denom <= 0:
            raise SolverError("CG breakdown: dual operator not positive")
        rho = gg / denom
        lam -= rho * w
        g -= rho * wb
        gg_new = float(g @ (J @ g))
        if np.sqrt(gg_new) <= gamma * np.sqrt(gg0):
            break
        w = g + (gg_new / gg) * w
        gg = gg_new
    rhs = system.L - B.T @ lam
    phi = factA.solve(rhs)
    phi = phi + factA.solve(rhs - system.A @ phi)  # one refinement step, as in solve_direct
    res = {
        "cg_ratio": float(np.sqrt(gg_new / gg0)),
        "row2": float(np.linalg.norm(B @ phi, np.inf) / (1 + np.linalg.norm(phi, np.inf))),
    }
    return MixedSolution(phi, lam, system, it, res)


# ---------------------------------------------------------------- norms


def _l2(block_vals_weights) -> float:
    s = 0.0
    for vals, w in block_vals_weights:
        s += float(np.sum(w * vals**2))
    return np.sqrt(s)


def _bw(block: Block, mesh):
    X, _ = block.points(mesh)
    return np.broadcast_to(block.weights()[None, :], X.shape)


def residual_norm(sol: MixedSolution) -> float:
    """L2(Q_T) norm of L*phi_h (MF1), of the normalized residual w(psi_h) (MF3norm).

    For MF2 the residual is a distribution in x; its L2(0,T; H^-1) norm is
    returned, estimated with a Riesz representer on a four times finer
    piecewise-linear spatial space (see :func:`hminus1_residual`).
    """
    sys = sol.system
    mesh, spec = sys.mesh, sys.spec
    if sys.tag == "MF2":
        return hminus1_residual(sol)
    op = normalized_op(Space.BFS, mesh, spec) if sys.tag == "MF3norm" else lstar_op(Space.BFS, mesh, spec)
    acc = []
    for b in domain_blocks(mesh, sys.q):
        X, Tm = b.points(mesh)
        loc = local_coeffs(sys.phi_map, sol.phi, b.cells)
        O = np.broadcast_to(op(b, X, Tm), (X.shape[0], 16, X.shape[1]))
        vals = np.einsum("ek,ekq->eq", loc, O)
        acc.append((vals, _bw(b, mesh)))
    return _l2(acc)


def hminus1_residual(sol: MixedSolution, refine: int = 4) -> float:
    """||L* phi_h||_{L2(0,T;H^-1(0,1))} for a bilinear phi_h, c and d constant.

    At each time Gauss node, the functional mu -> -(phi_t, mu) + c (phi_x, mu_x)
    - d (phi, mu) is represented in a refined P1 space of H^1_0 and its dual norm
    is the representer's energy.
    """
    sys = sol.system
    mesh, spec = sys.mesh, sys.spec
    if not spec.constant_coeffs:
        raise NotImplementedError("H^-1 residual needs constant coefficients")
    c, d = float(spec.c), float(spec.d)
    nf = mesh.Nx * refine
    hf = 1.0 / nf
    gx, wx = gauss01(3)
    # fine-cell quadrature points in x
    xq = ((np.arange(nf)[:, None] + gx[None, :]) * hf).ravel()
    wq = np.tile(wx * hf, nf)
    # fine hat functions at xq (interior nodes 1..nf-1)
    cell = np.repeat(np.arange(nf), gx.size)
    loc = np.tile(gx, nf)
    rows = np.concatenate([cell, cell + 1]) - 1
    vals = np.concatenate([1 - loc, loc])
    dvals = np.concatenate([-np.ones_like(loc), np.ones_like(loc)]) / hf
    cols = np.concatenate([np.arange(xq.size)] * 2)
    ok = (rows >= 0) & (rows < nf - 1)
    Hv = sp.csr_matrix((vals[ok], (rows[ok], cols[ok])), shape=(nf - 1, xq.size))
    Hd = sp.csr_matrix((dvals[ok], (rows[ok], cols[ok])), shape=(nf - 1, xq.size))
    K = (Hd @ sp.diags(wq) @ Hd.T).tocsc()
    Kf = spla.splu(K)
    gt, wt = gauss01(sys.q)
    total = 0.0
    for j in range(mesh.Nt):
        for tq, wtq in zip(gt, wt):
            t = (j + tq) * mesh.dt
            tt = np.full_like(xq, t)
            u = eval_at_points(sys.phi_map, sol.phi, xq, tt)
            ut = eval_at_points(sys.phi_map, sol.phi, xq, tt, "dt")
            ux = eval_at_points(sys.phi_map, sol.phi, xq, tt, "dx")
            F = Hv @ (wq * (-ut + d * u)) + Hd @ (wq * c * ux)
            z = Kf.solve(F)
            total += wtq * mesh.dt * float(F @ z)
    return float(np.sqrt(total))


def weighted_control_norm(sol: MixedSolution) -> float:
    """||rho0 v_h||_{L2(q_T)}."""
    mesh = sol.system.mesh
    return _l2([(sol.weighted_control_on(b), _bw(b, mesh))
                for b in omega_blocks(mesh, sol.system.spec.omega, sol.system.q)])


def state_norm(sol: MixedSolution) -> float:
    """||y_h||_{L2(Q_T)} (rho^{-1} lam_h for MF3norm)."""
    mesh = sol.system.mesh
    return _l2([(sol.state_on(b), _bw(b, mesh)) for b in domain_blocks(mesh, sol.system.q)])


def final_multiplier_norm(sol: MixedSolution) -> float:
    """||lam_h(., T)||_{L2(0,1)}."""
    sys = sol.system
    return _l2([(eval_on_block(sys.lam_map, sol.lam, b), _bw(b, sys.mesh))
                for b in edge_blocks(sys.mesh, "top", sys.q)])


def final_adjoint_norm(sol: MixedSolution) -> float:
    sys = sol.system
    return _l2([(eval_on_block(sys.phi_map, sol.phi, b), _bw(b, sys.mesh))
                for b in edge_blocks(sys.mesh, "top", sys.q)])


def penalty_identity_defect(sol: MixedSolution) -> float:
    """||lam_h(., T) + eps * phi_h(., T)||_{L2(0,1)}."""
    sys = sol.system
    acc = []
    for b in edge_blocks(sys.mesh, "top", sys.q):
        v = eval_on_block(sys.lam_map, sol.lam, b) + sys.spec.eps * eval_on_block(sys.phi_map, sol.phi, b)
        acc.append((v, _bw(b, sys.mesh)))
    return _l2(acc)


def constraint_residual(sol: MixedSolution) -> float:
    """||B phi||_inf / (1 + ||phi||_inf)."""
    return float(np.linalg.norm(sol.system.B @ sol.phi, np.inf) / (1 + np.linalg.norm(sol.phi, np.inf)))
