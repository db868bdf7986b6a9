"""Sparse assembly of the discrete mixed formulations and the forward solver.

Every integral is computed with tensor Gauss rules over :class:`~heatctl.mesh.Block`
groups of cells, so that cells cut by an endpoint of the control interval get
their own sub-rule.  Element matrices are formed in vectorized chunks of
cells and scattered through the dof maps.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import weights as W
from .mesh import (
    Block, DofMap, DirichletMode, HermiteSpace1D, SpaceTimeMesh, Space, build_dofmap,
    domain_blocks, edge_blocks, gauss01, hermite1d, hermite1d_space_basis, omega_blocks,
)

Scalar = float | Callable


def sine1(x):
    return np.sin(np.pi * x)


def zero_datum(x):
    return np.zeros_like(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class ProblemSpec:
    """Data of the controlled heat equation and of the discrete formulation.

    ``c`` may be a constant or a callable ``c(x)``; then ``c_prime`` supplies
    its derivative (a centred difference is used when omitted).  ``d`` is a
    constant or a callable ``d(x, t)``.
    """

    c: Scalar = 0.1
    d: Scalar = 0.0
    omega: tuple[float, float] = (0.2, 0.5)
    T: float = 0.5
    y0: Callable = sine1
    eps: float = 1e-2
    r: float = 1.0
    eta: float = 1.0
    K1: float = 0.75
    rho0: W.WeightSpec | None = None
    rho: W.WeightSpec | None = None
    c_prime: Callable | None = None
    y0_modes: tuple[float, ...] | None = None  # sine coefficients of y0 when known

    def __post_init__(self):
        a, b = self.omega
        if not (0 <= a < b <= 1):
            raise ValueError(f"control interval must satisfy 0 <= a < b <= 1, got {self.omega}")
        if not callable(self.c) and not self.c > 0:
            raise ValueError("diffusion coefficient must be positive")
        if self.eps < 0:
            raise ValueError("eps must be nonnegative")
        if self.y0_modes is None and self.y0 is sine1:
            object.__setattr__(self, "y0_modes", (1.0,))
        if self.rho0 is None:
            object.__setattr__(self, "rho0", W.rho0_default(self.T, self.K1))
        if self.rho is None:
            object.__setattr__(self, "rho", W.rho_default(self.T, self.K1))

    def with_(self, **kw) -> "ProblemSpec":
        kw = dict(kw)
        # weights follow T and K1 unless given explicitly
        if ("T" in kw or "K1" in kw) and "rho0" not in kw:
            kw.setdefault("rho0", None)
            kw.setdefault("rho", None)
        if "y0" in kw:
            kw.setdefault("y0_modes", None)
        return replace(self, **kw)

    # coefficient evaluation at arrays of points
    def c_at(self, X):
        return self.c(X) if callable(self.c) else np.full_like(X, float(self.c))

    def c_prime_at(self, X):
        if not callable(self.c):
            return np.zeros_like(X)
        if self.c_prime is not None:
            return self.c_prime(X)
        e = 1e-6
        return (self.c(X + e) - self.c(X - e)) / (2 * e)

    def d_at(self, X, Tm):
        return self.d(X, Tm) if callable(self.d) else np.full_like(X, float(self.d))

    @property
    def constant_coeffs(self) -> bool:
        return not callable(self.c) and not callable(self.d)


@dataclass
class MixedSystem:
    """Block system [[A, B^T], [B, 0]] [phi; lam] = [L; 0] with multiplier Gram J."""

    A: sp.csr_matrix
    B: sp.csr_matrix
    J: sp.csr_matrix
    L: np.ndarray
    tag: str
    mesh: SpaceTimeMesh
    spec: ProblemSpec
    phi_map: DofMap
    lam_map: DofMap
    q: int = 6
    parts: dict = field(default_factory=dict, repr=False)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[0]

    def block_matrix(self) -> sp.csr_matrix:
        return sp.bmat([[self.A, self.B.T], [self.B, None]], format="csr")

    def rhs(self) -> np.ndarray:
        return np.concatenate([self.L, np.zeros(self.m)])


# ---------------------------------------------------------------- generic forms

_CHUNK_POINTS = 400_000  # cells * points per chunk, bounds temporary memory


def _row_chunks(block: Block):
    per_row = block.cols.size * block.xpts.size * block.tpts.size
    step = max(1, _CHUNK_POINTS // max(per_row, 1))
    for s in range(0, block.rows.size, step):
        yield replace(block, rows=block.rows[s:s + step])


def _scatter_matrix(dm_r: DofMap, dm_c: DofMap, cells, Ke, shape):
    ir = dm_r.cell_dofs[cells]
    ic = dm_c.cell_dofs[cells]
    R = np.broadcast_to(ir[:, :, None], Ke.shape)
    C = np.broadcast_to(ic[:, None, :], Ke.shape)
    ok = (R >= 0) & (C >= 0)
    return sp.csr_matrix((Ke[ok], (R[ok], C[ok])), shape=shape)


def assemble_bilinear(dm_r: DofMap, dm_c: DofMap, blocks, op_r, op_c, weight=None,
                      symmetric=False) -> sp.csr_matrix:
    """Matrix of sum_blocks  integral weight * op_c(u) * op_r(v).

    ``op_r`` / ``op_c`` map (block, X, T) to an array (E or 1, n_local, nq) of
    the operator applied to each local shape at each point; ``weight`` maps
    (X, T) to (E, nq) or is None for unit weight.
    """
    shape = (dm_r.n_dofs, dm_c.n_dofs)
    out = sp.csr_matrix(shape)
    for blk in blocks:
        for b in _row_chunks(blk):
            X, Tm = b.points(dm_r.mesh)
            w = np.broadcast_to(b.weights()[None, :], X.shape)
            if weight is not None:
                w = w * weight(X, Tm)
            Or = op_r(b, X, Tm)
            Oc = Or if op_c is op_r else op_c(b, X, Tm)
            Ke = np.einsum("ekq,elq->ekl", Or * w[:, None, :], np.broadcast_to(Oc, (X.shape[0],) + Oc.shape[1:]))
            if symmetric:
                Ke = 0.5 * (Ke + Ke.transpose(0, 2, 1))
            out = out + _scatter_matrix(dm_r, dm_c, b.cells, Ke, shape)
    out = out.tocsr()
    out.sum_duplicates()
    if symmetric:
        out = ((out + out.T) * 0.5).tocsr()
    return out


def assemble_linear(dm: DofMap, blocks, op, f) -> np.ndarray:
    """Vector of sum_blocks integral f * op(v)."""
    out = np.zeros(dm.n_dofs)
    for blk in blocks:
        for b in _row_chunks(blk):
            X, Tm = b.points(dm.mesh)
            w = b.weights()[None, :] * f(X, Tm)
            O = np.broadcast_to(op(b, X, Tm), (X.shape[0],) + op(b, X, Tm).shape[1:])
            Fe = np.einsum("ekq,eq->ek", O, w)
            idx = dm.cell_dofs[b.cells]
            ok = idx >= 0
            np.add.at(out, idx[ok], Fe[ok])
    return out


def shape_op(space: Space, mesh: SpaceTimeMesh, deriv: str = "val"):
    def op(b, X, Tm):
        return b.tab(space, mesh, deriv)[None]
    return op


def lstar_op(space: Space, mesh: SpaceTimeMesh, spec: ProblemSpec):
    """Strong-form adjoint operator -u_t - (c u_x)_x + d u applied to each shape."""
    def op(b, X, Tm):
        dt = b.tab(space, mesh, "dt")
        dxx = b.tab(space, mesh, "dxx")
        val = b.tab(space, mesh, "val")
        if spec.constant_coeffs:
            return (-dt - float(spec.c) * dxx + float(spec.d) * val)[None]
        c = spec.c_at(X)[:, None, :]
        cp = spec.c_prime_at(X)[:, None, :]
        d = spec.d_at(X, Tm)[:, None, :]
        dx = b.tab(space, mesh, "dx")
        return -dt[None] - c * dxx[None] - cp * dx[None] + d * val[None]
    return op


def normalized_op(space: Space, mesh: SpaceTimeMesh, spec: ProblemSpec):
    """w(u) = alpha1 L*u + alpha0 u, the normalized adjoint operator."""
    lop = lstar_op(space, mesh, spec)

    def op(b, X, Tm):
        a1, a0 = W.normalized_coeffs(spec.rho0, spec.rho, Tm)
        val = b.tab(space, mesh, "val")[None]
        return a1[:, None, :] * lop(b, X, Tm) + a0[:, None, :] * val
    return op


# ---------------------------------------------------------------- formulations


def _check_r(spec: ProblemSpec):
    if not spec.r > 0:
        raise ValueError("the augmentation parameter r must be positive")


def q1_mass(dm: DofMap, q: int = 6) -> sp.csr_matrix:
    blocks = domain_blocks(dm.mesh, q)
    op = shape_op(dm.space, dm.mesh)
    return assemble_bilinear(dm, dm, blocks, op, op, symmetric=True)


def assemble_mf1(mesh: SpaceTimeMesh, spec: ProblemSpec, q: int = 6,
                 dirichlet: str = "eliminate") -> MixedSystem:
    """Penalized mixed formulation with BFS adjoint and Q1 multiplier."""
    if not spec.eps > 0:
        raise ValueError("eps = 0 needs the normalized formulation (assemble_mf3norm)")
    _check_r(spec)
    phi = build_dofmap(mesh, Space.BFS, dirichlet)
    lam = build_dofmap(mesh, Space.Q1, DirichletMode.KEEP)
    val = shape_op(Space.BFS, mesh)
    lst = lstar_op(Space.BFS, mesh, spec)
    dom = domain_blocks(mesh, q)

    A_omega = assemble_bilinear(phi, phi, omega_blocks(mesh, spec.omega, q), val, val,
                                weight=lambda X, Tm: W.eval_rho0_inv2(spec.rho0, Tm), symmetric=True)
    A_T = assemble_bilinear(phi, phi, edge_blocks(mesh, "top", q), val, val, symmetric=True)
    A_L = assemble_bilinear(phi, phi, dom, lst, lst, symmetric=True)
    A = (A_omega + spec.eps * A_T + spec.r * A_L).tocsr()
    A = ((A + A.T) * 0.5).tocsr()
    B = -assemble_bilinear(lam, phi, dom, shape_op(Space.Q1, mesh), lst)
    J = q1_mass(lam, q)
    L = -assemble_linear(phi, edge_blocks(mesh, "bottom", q), val, lambda X, Tm: spec.y0(X))
    return MixedSystem(A, B.tocsr(), J, L, "MF1", mesh, spec, phi, lam, q,
                       parts={"omega": A_omega, "top": A_T, "lstar": A_L})


def assemble_mf3norm(mesh: SpaceTimeMesh, spec: ProblemSpec, q: int = 6,
                     dirichlet: str = "eliminate") -> MixedSystem:
    """Limit formulation (eps = 0) in the normalized variable psi = phi / rho0."""
    if spec.eps != 0:
        raise ValueError("the normalized formulation is the eps = 0 limit")
    _check_r(spec)
    W.normalized_coeffs(spec.rho0, spec.rho, 0.0)  # validates the weight pair
    psi = build_dofmap(mesh, Space.BFS, dirichlet)
    lam = build_dofmap(mesh, Space.Q1, DirichletMode.KEEP)
    val = shape_op(Space.BFS, mesh)
    wop = normalized_op(Space.BFS, mesh, spec)
    dom = domain_blocks(mesh, q)

    A_omega = assemble_bilinear(psi, psi, omega_blocks(mesh, spec.omega, q), val, val, symmetric=True)
    A_L = assemble_bilinear(psi, psi, dom, wop, wop, symmetric=True)
    A = (A_omega + spec.r * A_L).tocsr()
    A = ((A + A.T) * 0.5).tocsr()
    B = -assemble_bilinear(lam, psi, dom, shape_op(Space.Q1, mesh), wop)
    J = q1_mass(lam, q)
    r00 = float(W.eval_rho0(spec.rho0, 0.0))
    L = -assemble_linear(psi, edge_blocks(mesh, "bottom", q), val, lambda X, Tm: r00 * spec.y0(X))
    return MixedSystem(A, B.tocsr(), J, L, "MF3norm", mesh, spec, psi, lam, q,
                       parts={"omega": A_omega, "lstar": A_L})


def _stiffness_1d(Nx: int) -> np.ndarray:
    """P1 stiffness on interior nodes of a uniform grid of [0, 1]."""
    n = Nx - 1
    h = 1.0 / Nx
    return (np.diag(np.full(n, 2.0)) - np.diag(np.ones(n - 1), 1) - np.diag(np.ones(n - 1), -1)) / h


def assemble_mf2(mesh: SpaceTimeMesh, spec: ProblemSpec, q: int = 6,
                 dirichlet: str = "eliminate", multiplier: str = "q1p0") -> MixedSystem:
    """Relaxed mixed formulation with piecewise-linear adjoint.

    ``multiplier='q1p0'`` (default) takes the multiplier continuous piecewise
    linear in x and piecewise constant in t; ``multiplier='q1'`` takes it
    bilinear like the adjoint.  With equal-order bilinear spaces the
    constraint matrix is square and generically invertible, which forces the
    discrete adjoint to zero; the default avoids that degeneracy.
    """
    if not spec.eps > 0:
        raise ValueError("eps must be positive for this formulation")
    _check_r(spec)
    phi = build_dofmap(mesh, Space.Q1, dirichlet)
    lspace = Space.Q1P0 if multiplier == "q1p0" else Space.Q1
    if multiplier not in ("q1p0", "q1"):
        raise ValueError("multiplier must be 'q1p0' or 'q1'")
    lam = build_dofmap(mesh, lspace, DirichletMode.ELIMINATE)
    dom = domain_blocks(mesh, q)
    pval = shape_op(Space.Q1, mesh)

    A_omega = assemble_bilinear(phi, phi, omega_blocks(mesh, spec.omega, q), pval, pval,
                                weight=lambda X, Tm: W.eval_rho0_inv2(spec.rho0, Tm), symmetric=True)
    A_T = assemble_bilinear(phi, phi, edge_blocks(mesh, "top", q), pval, pval, symmetric=True)

    # b(phi, lam) = int phi_t lam - c phi_x lam_x - d phi lam
    lv = shape_op(lspace, mesh)
    lx = shape_op(lspace, mesh, "dx")
    B = assemble_bilinear(lam, phi, dom, lv, shape_op(Space.Q1, mesh, "dt"))
    B = B - assemble_bilinear(lam, phi, dom, lx, shape_op(Space.Q1, mesh, "dx"),
                              weight=lambda X, Tm: spec.c_at(X))
    if callable(spec.d) or float(spec.d) != 0.0:
        B = B - assemble_bilinear(lam, phi, dom, lv, pval, weight=lambda X, Tm: spec.d_at(X, Tm))
    B = B.tocsr()

    J = assemble_bilinear(lam, lam, dom, lx, lx, symmetric=True)
    Kinv = np.linalg.inv(_stiffness_1d(mesh.Nx))
    if lspace == Space.Q1P0:
        Jinv = sp.kron(sp.identity(mesh.Nt) / mesh.dt, sp.csr_matrix(Kinv), format="csr")
    else:
        if lam.n_dofs > 4000:
            raise MemoryError("bilinear multiplier Gram inverse is dense; mesh too large")
        Jinv = sp.csr_matrix(np.linalg.inv(J.toarray()))
    A_aug = (B.T @ Jinv @ B).tocsr()
    A = (A_omega + spec.eps * A_T + spec.r * A_aug).tocsr()
    A = ((A + A.T) * 0.5).tocsr()
    L = -assemble_linear(phi, edge_blocks(mesh, "bottom", q), pval, lambda X, Tm: spec.y0(X))
    return MixedSystem(A, B, J.tocsr(), L, "MF2", mesh, spec, phi, lam, q,
                       parts={"omega": A_omega, "top": A_T, "aug": A_aug, "Jinv": Jinv})


# ---------------------------------------------------------------- forward problem


@dataclass
class ForwardOperators:
    space: HermiteSpace1D
    M: sp.csr_matrix
    K: sp.csr_matrix
    spec: ProblemSpec
    q: int = 6

    def _omega_rule(self):
        a, b = self.spec.omega
        g = gauss01(self.q)
        h = self.space.dx
        cells, xs, ws = [], [], []
        for i in range(self.space.Nx):
            lo, hi = max(i * h, a), min((i + 1) * h, b)
            if hi - lo <= 1e-14 * h:
                continue
            s0, s1 = lo / h - i, hi / h - i
            cells.append(i)
            xs.append(s0 + (s1 - s0) * g[0])
            ws.append((s1 - s0) * g[1] * h)
        return np.array(cells), np.array(xs), np.array(ws)

    def load(self, v: Callable, t: float) -> np.ndarray:
        """Vector of integral over omega of v(x, t) * N_i(x) dx."""
        if not hasattr(self, "_rule"):
            cells, xs, ws = self._omega_rule()
            shapes = np.stack([hermite1d(s, self.space.dx) for s in xs])  # (nc, 4, nq)
            self._rule = (cells, xs, ws, shapes)
        cells, xs, ws, shapes = self._rule
        if cells.size == 0:
            return np.zeros(self.space.n_dofs)
        X = (cells[:, None] + xs) * self.space.dx
        vals = v(X, np.full_like(X, t)) * ws
        Fe = np.einsum("ckq,cq->ck", shapes, vals)
        idx = self.space.cell_dofs[cells]
        out = np.zeros(self.space.n_dofs)
        ok = idx >= 0
        np.add.at(out, idx[ok], Fe[ok])
        return out

    def project(self, f: Callable) -> np.ndarray:
        """L2 projection of f(x) on the spatial space."""
        return spla.spsolve(self.M.tocsc(), _assemble_1d_load(self.space, f, self.q))


def _assemble_1d(space: HermiteSpace1D, coef_terms, q):
    g = gauss01(q)
    h = space.dx
    Nx = space.Nx
    X = (np.arange(Nx)[:, None] + g[0][None, :]) * h
    Ke = np.zeros((Nx, 4, 4))
    for (oa, ob, coef) in coef_terms:
        Ha = hermite1d(g[0], h, oa)
        Hb = hermite1d(g[0], h, ob)
        w = coef(X) * g[1][None, :] * h
        Ke += np.einsum("kq,lq,eq->ekl", Ha, Hb, w)
    Ke = 0.5 * (Ke + Ke.transpose(0, 2, 1))
    idx = space.cell_dofs
    R = np.broadcast_to(idx[:, :, None], Ke.shape)
    C = np.broadcast_to(idx[:, None, :], Ke.shape)
    ok = (R >= 0) & (C >= 0)
    return sp.csr_matrix((Ke[ok], (R[ok], C[ok])), shape=(space.n_dofs, space.n_dofs))


def _assemble_1d_load(space: HermiteSpace1D, f, q):
    g = gauss01(q)
    h = space.dx
    X = (np.arange(space.Nx)[:, None] + g[0][None, :]) * h
    H = hermite1d(g[0], h, 0)
    Fe = np.einsum("kq,eq->ek", H, f(X) * g[1][None, :] * h)
    out = np.zeros(space.n_dofs)
    idx = space.cell_dofs
    ok = idx >= 0
    np.add.at(out, idx[ok], Fe[ok])
    return out


def assemble_forward(Nx_f: int, spec: ProblemSpec, q: int = 6) -> ForwardOperators:
    """Mass and stiffness (+ potential) for the Hermite-cubic spatial space.

    A potential ``d(x, t)`` given as a callable is frozen at t = 0.
    """
    space = hermite1d_space_basis(Nx_f)
    one = lambda X: np.ones_like(X)
    M = _assemble_1d(space, [(0, 0, one)], q)
    terms = [(1, 1, spec.c_at)]
    if callable(spec.d) or float(spec.d) != 0.0:
        terms.append((0, 0, lambda X: spec.d_at(X, np.zeros_like(X))))
    K = _assemble_1d(space, terms, q)
    return ForwardOperators(space, M, K, spec, q)
