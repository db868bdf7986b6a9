"""Direct factorizations, power iteration and condition estimates.

SPD matrices go through CHOLMOD when scikit-sparse is installed and fall back
to SuperLU with a symmetric ordering otherwise.  Symmetric indefinite
(saddle-point) matrices are equilibrated and factored by SuperLU.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

try:  # optional accelerated sparse Cholesky
    from sksparse.cholmod import CholmodNotPositiveDefiniteError, cholesky as _cholmod
except ImportError:  # pragma: no cover - exercised when the extra is missing
    _cholmod = None

    class CholmodNotPositiveDefiniteError(Exception):
        pass


class FactorizationError(RuntimeError):
    pass


DEFAULT_SEED = 20240917


@dataclass
class Factorization:
    kind: str  # "cholesky" or "lu"
    n: int
    _solve: Callable
    backend: str

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        if rhs.shape[0] != self.n:
            raise ValueError(f"rhs has length {rhs.shape[0]}, expected {self.n}")
        return self._solve(rhs)


def _ruiz(M: sp.csr_matrix, sweeps: int = 5) -> np.ndarray:
    """Symmetric Ruiz scaling vector d so that diag(d) M diag(d) has unit row maxima."""
    d = np.ones(M.shape[0])
    A = abs(M).tocsr()
    for _ in range(sweeps):
        S = sp.diags(d) @ A @ sp.diags(d)
        rmax = np.asarray(S.max(axis=1).todense()).ravel()
        rmax[rmax == 0] = 1.0
        d /= np.sqrt(rmax)
    return d


def _factor_spd(A: sp.spmatrix) -> Factorization:
    n = A.shape[0]
    if _cholmod is not None:
        try:
            F = _cholmod(sp.csc_matrix(A))
        except CholmodNotPositiveDefiniteError as exc:
            raise FactorizationError(f"matrix is not positive definite: {exc}") from exc
        # the simplicial LDL^T path factors indefinite matrices without complaint
        if not np.all(F.D() > 0):
            raise FactorizationError("matrix is not positive definite")
        return Factorization("cholesky", n, F.solve_A, "cholmod")
    # fallback: LU without pivoting on a symmetric ordering; SPD iff all pivots > 0
    d = np.sqrt(np.abs(A.diagonal()))
    if np.any(d == 0):
        raise FactorizationError("matrix is not positive definite (zero diagonal)")
    Ds = sp.diags(1.0 / d)
    As = sp.csc_matrix(Ds @ A @ Ds)
    try:
        lu = spla.splu(As, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                       options={"SymmetricMode": True})
    except RuntimeError as exc:
        raise FactorizationError(str(exc)) from exc
    if np.any(lu.U.diagonal() <= 0):
        raise FactorizationError("matrix is not positive definite")

    def solve(b):
        dd = d[:, None] if b.ndim == 2 else d
        return lu.solve(b / dd) / dd

    return Factorization("cholesky", n, solve, "superlu")


def _factor_lu(M: sp.spmatrix) -> Factorization:
    n = M.shape[0]
    M = sp.csr_matrix(M)
    d = _ruiz(M)
    Ms = sp.csc_matrix(sp.diags(d) @ M @ sp.diags(d))
    try:
        lu = spla.splu(Ms, permc_spec="COLAMD")
    except RuntimeError as exc:
        raise FactorizationError(str(exc)) from exc

    def solve(b):
        dd = d[:, None] if b.ndim == 2 else d
        return lu.solve(b * dd) * dd

    return Factorization("lu", n, solve, "superlu")


def factor(matrix, kind: str = "auto") -> Factorization:
    """Factor a square sparse matrix.

    ``kind='spd'`` takes the Cholesky path and raises :class:`FactorizationError`
    on non-SPD input; ``'indef'`` uses equilibrated pivoted LU; ``'auto'``
    tries Cholesky first and falls back to LU.
    """
    M = sp.csr_matrix(matrix, dtype=float)
    if M.shape[0] != M.shape[1] or M.shape[0] == 0:
        raise ValueError("factor needs a nonempty square matrix")
    if not np.all(np.isfinite(M.data)):
        raise ValueError("matrix has non-finite entries")
    if kind == "spd":
        return _factor_spd(M)
    if kind == "indef":
        return _factor_lu(M)
    if kind == "auto":
        try:
            return _factor_spd(M)
        except FactorizationError:
            return _factor_lu(M)
    raise ValueError(f"unknown factorization kind {kind!r}")


def solve(fact: Factorization, rhs: np.ndarray) -> np.ndarray:
    return fact.solve(rhs)


@dataclass
class EigenEstimate:
    value: float
    converged: bool
    iterations: int
    vector: np.ndarray | None = None


def _as_apply(M):
    if callable(M):
        return M
    return lambda x: M @ x


def extreme_eigen(applyM, J=None, which: str = "largest", tol: float = 1e-8,
                  maxit: int = 1000, seed: int = DEFAULT_SEED, x0=None, n: int | None = None
                  ) -> EigenEstimate:
    """Extreme eigenvalue of the pencil (M, J) by power iteration.

    ``which='largest'``: ``applyM`` applies M; iterates x <- J^{-1} M x.
    ``which='smallest'``: ``applyM`` applies M^{-1}; iterates x <- M^{-1} J x
    and returns the reciprocal of the dominant Rayleigh quotient.
    Convergence is declared when the estimate changes by less than ``tol``
    relatively between two iterations.
    """
    apply = _as_apply(applyM)
    if J is None:
        Jmul = lambda x: x
        Jsol = lambda x: x
        size = n
    else:
        Jm = sp.csr_matrix(J)
        Jmul = lambda x: Jm @ x
        size = Jm.shape[0]
        Jsol = factor(Jm, "spd").solve if which == "largest" else None
    if x0 is None:
        if size is None:
            raise ValueError("dimension unknown; pass n or J or x0")
        x = np.random.default_rng(seed).standard_normal(size)
    else:
        x = np.asarray(x0, dtype=float).copy()
    x /= np.sqrt(x @ Jmul(x))
    est = np.nan
    for it in range(1, maxit + 1):
        if which == "largest":
            y = Jsol(apply(x))
        elif which == "smallest":
            y = apply(Jmul(x))
        else:
            raise ValueError("which must be 'largest' or 'smallest'")
        Jy = Jmul(y)
        ray = float(x @ Jy)  # (x, y)_J with ||x||_J = 1
        new = ray if which == "largest" else 1.0 / ray
        nrm = np.sqrt(float(y @ Jy))
        x = y / nrm
        if np.isfinite(est) and abs(new - est) <= tol * abs(new):
            return EigenEstimate(new, True, it, x)
        est = new
    return EigenEstimate(est, False, maxit, x)


def cond_estimate(matrix, tol: float = 1e-6, fact: Factorization | None = None,
                  maxiter: int | None = None) -> float:
    """Spectral condition number |lambda|max / |lambda|min of a symmetric matrix.

    Both extremes come from Lanczos iterations (ARPACK), the small end through
    the inverse operator supplied by a direct factorization.
    """
    M = sp.csr_matrix(matrix, dtype=float)
    n = M.shape[0]
    if n <= 200:
        ev = np.linalg.eigvalsh(M.toarray())
        a = np.abs(ev)
        return float(a.max() / a.min())
    if fact is None:
        fact = factor(M, "auto")
    v0 = np.random.default_rng(DEFAULT_SEED).standard_normal(n)
    big = spla.eigsh(M, k=1, which="LM", tol=tol, v0=v0, return_eigenvectors=False, maxiter=maxiter)
    inv = spla.LinearOperator((n, n), matvec=fact.solve, dtype=float)
    small = spla.eigsh(inv, k=1, which="LM", tol=tol, v0=v0, return_eigenvectors=False, maxiter=maxiter)
    return float(abs(big[0]) * abs(small[0]))
