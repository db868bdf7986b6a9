"""Uniform space-time meshes, C1 and Q1 shape functions, dof maps and quadrature.

Conventions
-----------
Nodes are numbered lexicographically, ``n = j*(Nx+1) + i`` for the node at
``(x_i, t_j)``; cells likewise, ``e = j*Nx + i``.  A cell's local corners are
ordered ``(0,0), (1,0), (0,1), (1,1)`` in reference coordinates ``(xi, tau)``.

Bogner-Fox-Schmit (BFS) local dof ``k = 4*corner + kind`` with kinds
``0: value, 1: d/dx, 2: d/dt, 3: d2/dxdt``.  The shape function is the tensor
product of two scaled 1D cubic Hermite functions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

# derivative keys understood by the tabulation routines: (order in x, order in t)
DERIVS = {
    "val": (0, 0),
    "dx": (1, 0),
    "dt": (0, 1),
    "dxx": (2, 0),
    "dxt": (1, 1),
    "dtt": (0, 2),
}


class DirichletMode(str, Enum):
    ELIMINATE = "eliminate"
    KEEP = "keep"


class Space(str, Enum):
    BFS = "bfs"
    Q1 = "q1"
    Q1P0 = "q1p0"  # piecewise linear in x, piecewise constant in t


@dataclass(frozen=True)
class SpaceTimeMesh:
    Nx: int
    Nt: int
    T: float
    Lx: float = 1.0

    def __post_init__(self):
        if self.Nx < 2 or self.Nt < 1:
            raise ValueError(f"mesh needs Nx >= 2 and Nt >= 1, got {self.Nx}x{self.Nt}")
        if not self.T > 0:
            raise ValueError("final time must be positive")

    @property
    def dx(self) -> float:
        return self.Lx / self.Nx

    @property
    def dt(self) -> float:
        return self.T / self.Nt

    @property
    def h(self) -> float:
        return float(np.hypot(self.dx, self.dt))

    @property
    def n_nodes(self) -> int:
        return (self.Nx + 1) * (self.Nt + 1)

    @property
    def n_cells(self) -> int:
        return self.Nx * self.Nt

    @property
    def x(self) -> np.ndarray:
        return np.linspace(0.0, self.Lx, self.Nx + 1)

    @property
    def t(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.Nt + 1)


def build_mesh(Nx: int, Nt: int, T: float) -> SpaceTimeMesh:
    return SpaceTimeMesh(int(Nx), int(Nt), float(T))


# ---------------------------------------------------------------- 1D bases


def gauss01(q: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [0, 1] (weights sum to 1)."""
    if q < 1:
        raise ValueError("quadrature order must be >= 1")
    x, w = np.polynomial.legendre.leggauss(q)
    return 0.5 * (x + 1.0), 0.5 * w


def hermite1d(s, length: float, order: int = 0) -> np.ndarray:
    """Cubic Hermite functions on a cell of given length, shape (4, len(s)).

    Rows: value at 0, slope at 0, value at 1, slope at 1.  ``order`` is the
    derivative order with respect to the physical coordinate.
    """
    s = np.atleast_1d(np.asarray(s, dtype=float))
    h = length
    if order == 0:
        return np.array([
            1 - 3 * s**2 + 2 * s**3,
            h * (s - 2 * s**2 + s**3),
            3 * s**2 - 2 * s**3,
            h * (-(s**2) + s**3),
        ])
    if order == 1:
        return np.array([
            (-6 * s + 6 * s**2) / h,
            1 - 4 * s + 3 * s**2,
            (6 * s - 6 * s**2) / h,
            -2 * s + 3 * s**2,
        ])
    if order == 2:
        return np.array([
            (-6 + 12 * s) / h**2,
            (-4 + 6 * s) / h,
            (6 - 12 * s) / h**2,
            (-2 + 6 * s) / h,
        ])
    if order == 3:
        one = np.ones_like(s)
        return np.array([12 * one / h**3, 6 * one / h**2, -12 * one / h**3, 6 * one / h**2])
    return np.zeros((4, s.size))


def linear1d(s, length: float, order: int = 0) -> np.ndarray:
    """Linear Lagrange functions on a cell, shape (2, len(s))."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    if order == 0:
        return np.array([1 - s, s])
    if order == 1:
        one = np.ones_like(s)
        return np.array([-one / length, one / length])
    return np.zeros((2, s.size))


def const1d(s, length: float, order: int = 0) -> np.ndarray:
    s = np.atleast_1d(np.asarray(s, dtype=float))
    return np.ones((1, s.size)) if order == 0 else np.zeros((1, s.size))


# local (x-index, t-index) into the 1D bases, per space
def _bfs_local():
    idx = []
    for corner in range(4):
        a, b = corner % 2, corner // 2
        for kind in range(4):
            p, q = kind % 2, kind // 2
            idx.append((2 * a + p, 2 * b + q))
    return np.array(idx)


_LOCAL = {
    Space.BFS: (_bfs_local(), hermite1d, hermite1d),
    Space.Q1: (np.array([(0, 0), (1, 0), (0, 1), (1, 1)]), linear1d, linear1d),
    Space.Q1P0: (np.array([(0, 0), (1, 0)]), linear1d, const1d),
}


def n_local(space: Space) -> int:
    return len(_LOCAL[Space(space)][0])


def tabulate(space: Space, xi, tau, dx: float, dt: float, deriv: str = "val") -> np.ndarray:
    """Tensor tabulation: array (n_local, len(xi), len(tau)) of a derivative of each shape."""
    idx, fx, ft = _LOCAL[Space(space)]
    ox, ot = DERIVS[deriv]
    X = fx(xi, dx, ox)
    Tt = ft(tau, dt, ot)
    return X[idx[:, 0]][:, :, None] * Tt[idx[:, 1]][:, None, :]


def bfs_shape(k: int, xi: float, tau: float, dx: float, dt: float):
    """(value, dx, dt, dxx, dxt, dtt) of BFS local shape ``k`` at one point."""
    if not 0 <= k < 16:
        raise IndexError("BFS local index must be in 0..15")
    return tuple(float(tabulate(Space.BFS, [xi], [tau], dx, dt, d)[k, 0, 0])
                 for d in ("val", "dx", "dt", "dxx", "dxt", "dtt"))


def q1_shape(k: int, xi: float, tau: float, dx: float = 1.0, dt: float = 1.0):
    """(value, dx, dt) of Q1 local shape ``k``; derivatives are physical."""
    if not 0 <= k < 4:
        raise IndexError("Q1 local index must be in 0..3")
    return tuple(float(tabulate(Space.Q1, [xi], [tau], dx, dt, d)[k, 0, 0])
                 for d in ("val", "dx", "dt"))


# ---------------------------------------------------------------- dof maps


@dataclass(frozen=True)
class DofMap:
    """Global numbering of a finite element space on a space-time mesh.

    ``cell_dofs[e, k]`` is the global index of local dof ``k`` on cell ``e``,
    or ``-1`` when that dof is eliminated by the Dirichlet condition.
    """

    mesh: SpaceTimeMesh
    space: Space
    mode: DirichletMode
    cell_dofs: np.ndarray
    n_dofs: int
    full_to_global: np.ndarray = field(repr=False)

    @property
    def per_node(self) -> int:
        return 4 if self.space == Space.BFS else 1


def _cell_node_ids(mesh: SpaceTimeMesh, corners, stride_t):
    i = np.tile(np.arange(mesh.Nx), mesh.Nt)
    j = np.repeat(np.arange(mesh.Nt), mesh.Nx)
    out = []
    for a, b in corners:
        out.append((j + b) * stride_t + (i + a))
    return np.stack(out, axis=1)


def build_dofmap(mesh: SpaceTimeMesh, space: Space | str, mode: DirichletMode | str = "eliminate") -> DofMap:
    space, mode = Space(space), DirichletMode(mode)
    nxn = mesh.Nx + 1
    if space == Space.Q1P0:
        nodes = _cell_node_ids(mesh, [(0, 0), (1, 0)], nxn)
        n_full, kinds = nxn * mesh.Nt, 1
    else:
        nodes = _cell_node_ids(mesh, [(0, 0), (1, 0), (0, 1), (1, 1)], nxn)
        n_full, kinds = mesh.n_nodes, (4 if space == Space.BFS else 1)
    node_i = np.arange(n_full) % nxn
    on_bnd = (node_i == 0) | (node_i == mesh.Nx)
    keep = np.ones((n_full, kinds), dtype=bool)
    if mode == DirichletMode.ELIMINATE:
        if space == Space.BFS:
            keep[on_bnd, 0] = False  # value
            keep[on_bnd, 2] = False  # d/dt of the value
        else:
            keep[on_bnd, 0] = False
    keep = keep.ravel()
    full_to_global = np.full(keep.size, -1, dtype=np.int64)
    full_to_global[keep] = np.arange(int(keep.sum()))
    if space == Space.BFS:
        full = (4 * nodes[:, :, None] + np.arange(4)[None, None, :]).reshape(nodes.shape[0], 16)
    else:
        full = nodes
    return DofMap(mesh, space, mode, full_to_global[full], int(keep.sum()), full_to_global)


@dataclass(frozen=True)
class HermiteSpace1D:
    """C1 piecewise-cubic space on [0, 1] with homogeneous Dirichlet values."""

    Nx: int
    cell_dofs: np.ndarray  # (Nx, 4), -1 = eliminated
    n_dofs: int

    @property
    def dx(self) -> float:
        return 1.0 / self.Nx


def hermite1d_space_basis(Nx: int) -> HermiteSpace1D:
    if Nx < 2:
        raise ValueError("need at least two cells")
    keep = np.ones((Nx + 1, 2), dtype=bool)
    keep[[0, Nx], 0] = False
    f2g = np.full(keep.size, -1, dtype=np.int64)
    f2g[keep.ravel()] = np.arange(int(keep.sum()))
    i = np.arange(Nx)
    full = np.stack([2 * i, 2 * i + 1, 2 * i + 2, 2 * i + 3], axis=1)
    return HermiteSpace1D(Nx, f2g[full], int(keep.sum()))


# ---------------------------------------------------------------- quadrature


@dataclass(frozen=True)
class QuadRule:
    q: int = 6

    def nodes(self):
        return gauss01(self.q)


@dataclass(frozen=True)
class Block:
    """A set of cells sharing one tensor quadrature rule in reference coordinates.

    The cells are all pairs (cols x rows).  ``jac`` multiplies the reference
    weights (cell area for area integrals, cell width for edge integrals).
    Points are flattened with the x-index slowest.
    """

    cols: np.ndarray
    rows: np.ndarray
    xpts: np.ndarray
    xwts: np.ndarray
    tpts: np.ndarray
    twts: np.ndarray
    jac: float

    @property
    def cells(self) -> np.ndarray:
        return (self.rows[:, None] * self.mesh_Nx + self.cols[None, :]).ravel()

    mesh_Nx: int = 0

    def cell_count(self) -> int:
        return self.cols.size * self.rows.size

    def points(self, mesh: SpaceTimeMesh):
        """Physical coordinates (X, T) of shape (n_cells, nq), in ``cells`` order."""
        xc = (self.cols[:, None] + self.xpts[None, :]) * mesh.dx  # (ncol, nqx)
        tc = (self.rows[:, None] + self.tpts[None, :]) * mesh.dt  # (nrow, nqt)
        nr, nc = self.rows.size, self.cols.size
        nqx, nqt = self.xpts.size, self.tpts.size
        X = np.broadcast_to(xc[None, :, :, None], (nr, nc, nqx, nqt)).reshape(nr * nc, nqx * nqt)
        Tm = np.broadcast_to(tc[:, None, None, :], (nr, nc, nqx, nqt)).reshape(nr * nc, nqx * nqt)
        return X, Tm

    def weights(self) -> np.ndarray:
        return (self.xwts[:, None] * self.twts[None, :]).ravel() * self.jac

    def tab(self, space: Space, mesh: SpaceTimeMesh, deriv: str) -> np.ndarray:
        """Reference tabulation (n_local, nq)."""
        v = tabulate(space, self.xpts, self.tpts, mesh.dx, mesh.dt, deriv)
        return v.reshape(v.shape[0], -1)


def _block(mesh, cols, rows, xr, tr, jac):
    return Block(np.asarray(cols, dtype=np.int64), np.asarray(rows, dtype=np.int64),
                 np.asarray(xr[0], float), np.asarray(xr[1], float),
                 np.asarray(tr[0], float), np.asarray(tr[1], float), float(jac), mesh.Nx)


def domain_blocks(mesh: SpaceTimeMesh, q: int = 6) -> list[Block]:
    g = gauss01(q)
    return [_block(mesh, np.arange(mesh.Nx), np.arange(mesh.Nt), g, g, mesh.dx * mesh.dt)]


def omega_blocks(mesh: SpaceTimeMesh, omega: tuple[float, float], q: int = 6) -> list[Block]:
    """Blocks covering omega x (0, T); cells cut by an endpoint get a sub-rule."""
    a, b = omega
    g = gauss01(q)
    full, blocks = [], []
    for i in range(mesh.Nx):
        x0, x1 = i * mesh.dx, (i + 1) * mesh.dx
        lo, hi = max(x0, a), min(x1, b)
        if hi - lo <= 1e-14 * mesh.dx:
            continue
        s0, s1 = (lo - x0) / mesh.dx, (hi - x0) / mesh.dx
        if s0 <= 1e-14 and s1 >= 1 - 1e-14:
            full.append(i)
        else:
            blocks.append(_block(mesh, [i], np.arange(mesh.Nt), (s0 + (s1 - s0) * g[0], (s1 - s0) * g[1]),
                                 g, mesh.dx * mesh.dt))
    if full:
        blocks.insert(0, _block(mesh, full, np.arange(mesh.Nt), g, g, mesh.dx * mesh.dt))
    return blocks


def edge_blocks(mesh: SpaceTimeMesh, which: str, q: int = 6) -> list[Block]:
    """Line rule on the bottom (t=0) or top (t=T) edge of the space-time domain."""
    g = gauss01(q)
    if which == "bottom":
        row, tau = 0, 0.0
    elif which == "top":
        row, tau = mesh.Nt - 1, 1.0
    else:
        raise ValueError(which)
    return [_block(mesh, np.arange(mesh.Nx), [row], g, (np.array([tau]), np.array([1.0])), mesh.dx)]


# ---------------------------------------------------------------- field evaluation


def local_coeffs(dm: DofMap, u: np.ndarray, cells: np.ndarray) -> np.ndarray:
    """Gather coefficients (n_cells, n_local); eliminated dofs read as 0."""
    idx = dm.cell_dofs[cells]
    uu = np.concatenate([np.asarray(u, dtype=float), [0.0]])
    return uu[np.where(idx >= 0, idx, -1)]


def eval_on_block(dm: DofMap, u: np.ndarray, block: Block, deriv: str = "val") -> np.ndarray:
    """Values of a discrete field (or one derivative) at block points, (n_cells, nq)."""
    return local_coeffs(dm, u, block.cells) @ block.tab(dm.space, dm.mesh, deriv)


def eval_at_points(dm: DofMap, u: np.ndarray, x, t, deriv: str = "val") -> np.ndarray:
    """Evaluate a discrete field at arbitrary points of the closed domain."""
    mesh = dm.mesh
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    x, t = np.broadcast_arrays(x, t)
    shape = x.shape
    x, t = x.ravel(), t.ravel()
    i = np.clip(np.floor(x / mesh.dx).astype(np.int64), 0, mesh.Nx - 1)
    j = np.clip(np.floor(t / mesh.dt).astype(np.int64), 0, mesh.Nt - 1)
    xi = x / mesh.dx - i
    tau = t / mesh.dt - j
    idx, fx, ft = _LOCAL[dm.space]
    ox, ot = DERIVS[deriv]
    X = fx(xi, mesh.dx, ox)  # (nb, npts)
    Tt = ft(tau, mesh.dt, ot)
    shapes = X[idx[:, 0]] * Tt[idx[:, 1]]  # (n_local, npts)
    loc = local_coeffs(dm, u, j * mesh.Nx + i)
    return np.einsum("pk,kp->p", loc, shapes).reshape(shape)


def interpolate_bfs(dm: DofMap, f, fx, ft, fxt) -> np.ndarray:
    """BFS interpolant from a function and its derivatives (callables of x, t)."""
    if dm.space != Space.BFS:
        raise ValueError("BFS dof map required")
    mesh = dm.mesh
    X, Tm = np.meshgrid(mesh.x, mesh.t)
    vals = np.stack([f(X, Tm), fx(X, Tm), ft(X, Tm), fxt(X, Tm)], axis=-1).reshape(-1)
    u = np.zeros(dm.n_dofs)
    keep = dm.full_to_global >= 0
    u[dm.full_to_global[keep]] = vals[keep]
    return u


def interpolate_nodal(dm: DofMap, f) -> np.ndarray:
    """Nodal interpolant for Q1 (or Q1P0 at slab midpoints)."""
    mesh = dm.mesh
    if dm.space == Space.Q1:
        X, Tm = np.meshgrid(mesh.x, mesh.t)
    elif dm.space == Space.Q1P0:
        X, Tm = np.meshgrid(mesh.x, 0.5 * (mesh.t[:-1] + mesh.t[1:]))
    else:
        raise ValueError("nodal space required")
    vals = np.asarray(f(X, Tm), dtype=float).ravel()
    u = np.zeros(dm.n_dofs)
    keep = dm.full_to_global >= 0
    u[dm.full_to_global[keep]] = vals[keep]
    return u
