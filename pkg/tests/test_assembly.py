"""Assembly checked against naive point-by-point quadrature loops."""

import numpy as np
import pytest

from heatctl import weights as W
from heatctl.assembly import (
    ProblemSpec, assemble_forward, assemble_mf1, assemble_mf2, assemble_mf3norm, zero_datum,
)
from heatctl.linalg import factor
from heatctl.mesh import bfs_shape, build_mesh, interpolate_nodal, q1_shape

T = 0.5
UNIT = W.WeightSpec(W.Unit(), T)


def _gauss(lo, hi, n):
    g, w = np.polynomial.legendre.leggauss(n)
    return lo + (hi - lo) * (g + 1) / 2, w * (hi - lo) / 2


def _bfs_global(mesh, i, j, k):
    corner, kind = divmod(k, 4)
    a, b = corner % 2, corner // 2
    return 4 * ((j + b) * (mesh.Nx + 1) + i + a) + kind


def _q1_global(mesh, i, j, k):
    a, b = k % 2, k // 2
    return (j + b) * (mesh.Nx + 1) + i + a


def _naive(mesh, spec, normalized, n):
    """Dense keep-mode A, B, J, L by explicit loops over cells and points."""
    N4, N1 = 4 * mesh.n_nodes, mesh.n_nodes
    A, B, J, L = np.zeros((N4, N4)), np.zeros((N1, N4)), np.zeros((N1, N1)), np.zeros(N4)
    dx, dt = mesh.dx, mesh.dt
    c, d = float(spec.c), float(spec.d)
    a_om, b_om = spec.omega
    for j in range(mesh.Nt):
        for i in range(mesh.Nx):
            x0, t0 = i * dx, j * dt
            tq, tw = _gauss(t0, t0 + dt, n)

            def shapes(x, t):
                out = []
                for k in range(16):
                    v, fx, ft, fxx, _, _ = bfs_shape(k, (x - x0) / dx, (t - t0) / dt, dx, dt)
                    ls = -ft - c * fxx + d * v
                    if normalized:
                        a1, a0 = W.normalized_coeffs(spec.rho0, spec.rho, t)
                        ls = a1 * ls + a0 * v
                    out.append((v, ls))
                return out

            xq, xw = _gauss(x0, x0 + dx, n)
            for x, wx in zip(xq, xw):
                for t, wt in zip(tq, tw):
                    s = shapes(x, t)
                    lam = [q1_shape(k, (x - x0) / dx, (t - t0) / dt)[0] for k in range(4)]
                    for k in range(16):
                        gk = _bfs_global(mesh, i, j, k)
                        for m in range(16):
                            A[gk, _bfs_global(mesh, i, j, m)] += spec.r * wx * wt * s[k][1] * s[m][1]
                        for m in range(4):
                            B[_q1_global(mesh, i, j, m), gk] -= wx * wt * s[k][1] * lam[m]
                    for k in range(4):
                        for m in range(4):
                            J[_q1_global(mesh, i, j, k), _q1_global(mesh, i, j, m)] += wx * wt * lam[k] * lam[m]
            # control support
            lo, hi = max(x0, a_om), min(x0 + dx, b_om)
            if hi > lo:
                xo, wo = _gauss(lo, hi, n)
                for x, wx in zip(xo, wo):
                    for t, wt in zip(tq, tw):
                        wgt = 1.0 if normalized else W.eval_rho0_inv2(spec.rho0, t)
                        s = shapes(x, t)
                        for k in range(16):
                            for m in range(16):
                                A[_bfs_global(mesh, i, j, k), _bfs_global(mesh, i, j, m)] += wgt * wx * wt * s[k][0] * s[m][0]
            # final time and initial time edges
            for x, wx in zip(xq, xw):
                if j == mesh.Nt - 1 and not normalized:
                    v = [bfs_shape(k, (x - x0) / dx, 1.0, dx, dt)[0] for k in range(16)]
                    for k in range(16):
                        for m in range(16):
                            A[_bfs_global(mesh, i, j, k), _bfs_global(mesh, i, j, m)] += spec.eps * wx * v[k] * v[m]
                if j == 0:
                    scale = float(W.eval_rho0(spec.rho0, 0.0)) if normalized else 1.0
                    for k in range(16):
                        v = bfs_shape(k, (x - x0) / dx, 0.0, dx, dt)[0]
                        L[_bfs_global(mesh, i, j, k)] -= scale * wx * float(spec.y0(x)) * v
    return A, B, J, L


def test_mf1_matches_naive_dense_assembly():
    mesh = build_mesh(2, 1, T)
    spec = ProblemSpec(eps=1.0, r=1.0, d=0.3, rho0=UNIT, rho=UNIT)
    sysm = assemble_mf1(mesh, spec, q=6, dirichlet="keep")
    A, B, J, L = _naive(mesh, spec, normalized=False, n=8)
    np.testing.assert_allclose(sysm.A.toarray(), A, rtol=1e-12, atol=1e-12 * np.abs(A).max())
    np.testing.assert_allclose(sysm.B.toarray(), B, rtol=1e-12, atol=1e-12 * np.abs(B).max())
    np.testing.assert_allclose(sysm.J.toarray(), J, rtol=1e-12, atol=1e-15)
    # sin(pi x) is not polynomial: the two rules differ at the 1e-11 level
    np.testing.assert_allclose(sysm.L, L, rtol=1e-9, atol=1e-10)


def test_mf3norm_matches_naive_dense_assembly():
    # the alpha0^2 term is only defined through the Gauss rule: use the same q
    mesh = build_mesh(2, 1, T)
    spec = ProblemSpec(eps=0.0, r=1.0)
    sysm = assemble_mf3norm(mesh, spec, q=6, dirichlet="keep")
    A, B, J, L = _naive(mesh, spec, normalized=True, n=6)
    np.testing.assert_allclose(sysm.A.toarray(), A, rtol=1e-11, atol=1e-12 * np.abs(A).max())
    np.testing.assert_allclose(sysm.B.toarray(), B, rtol=1e-11, atol=1e-12 * np.abs(B).max())
    np.testing.assert_allclose(sysm.L, L, rtol=1e-12, atol=1e-15)


def test_eliminate_mode_is_a_restriction_of_keep_mode():
    mesh = build_mesh(4, 3, T)
    spec = ProblemSpec()
    keep = assemble_mf1(mesh, spec, dirichlet="keep")
    elim = assemble_mf1(mesh, spec, dirichlet="eliminate")
    f2g = elim.phi_map.full_to_global
    kept = np.flatnonzero(f2g >= 0)
    np.testing.assert_allclose(elim.A.toarray(), keep.A.toarray()[np.ix_(kept, kept)], rtol=1e-13, atol=1e-14)
    np.testing.assert_allclose(elim.B.toarray(), keep.B.toarray()[:, kept], rtol=1e-13, atol=1e-14)


def test_multiplier_mass_partition_of_unity():
    sysm = assemble_mf1(build_mesh(10, 5, T), ProblemSpec())
    one = np.ones(sysm.m)
    assert one @ sysm.J @ one == pytest.approx(0.5, rel=1e-14)


@pytest.mark.parametrize("assemble, eps", [(assemble_mf1, 1e-2), (assemble_mf3norm, 0.0), (assemble_mf2, 1e-4)])
def test_zero_initial_datum_gives_zero_load(assemble, eps):
    sysm = assemble(build_mesh(6, 3, T), ProblemSpec(eps=eps, y0=zero_datum))
    assert np.all(sysm.L == 0)


@pytest.mark.parametrize("assemble, eps", [(assemble_mf1, 1e-2), (assemble_mf3norm, 0.0), (assemble_mf2, 1e-4)])
def test_exact_symmetry(assemble, eps):
    sysm = assemble(build_mesh(8, 4, T), ProblemSpec(eps=eps))
    assert abs(sysm.A - sysm.A.T).max() == 0
    assert abs(sysm.J - sysm.J.T).max() == 0
    K = sysm.block_matrix()
    assert abs(K - K.T).max() == 0


@pytest.mark.parametrize("r", [1e-2, 1.0, 1e2])
@pytest.mark.parametrize("assemble, eps", [(assemble_mf1, 1e-8), (assemble_mf3norm, 0.0), (assemble_mf2, 1e-4)])
def test_A_is_spd(assemble, eps, r):
    sysm = assemble(build_mesh(8, 4, T), ProblemSpec(eps=eps, r=r))
    factor(sysm.A, "spd")


def test_r_must_be_positive():
    with pytest.raises(ValueError):
        assemble_mf1(build_mesh(4, 2, T), ProblemSpec(r=0.0))
    with pytest.raises(ValueError):
        assemble_mf1(build_mesh(4, 2, T), ProblemSpec(eps=0.0))
    with pytest.raises(ValueError):
        assemble_mf3norm(build_mesh(4, 2, T), ProblemSpec(eps=1e-2))


def test_augmentation_is_linear_in_r():
    mesh = build_mesh(6, 3, T)
    a1 = assemble_mf1(mesh, ProblemSpec(r=1.0))
    a4 = assemble_mf1(mesh, ProblemSpec(r=4.0))
    diff = (a4.A - a1.A) - 3.0 * a1.parts["lstar"]
    assert abs(diff).max() <= 1e-12 * abs(a1.A).max()


def test_mf2_constraint_on_a_single_hat():
    # b(phi, lam) with phi = lam = hat at one interior node: int phi_t phi = 0, so
    # b = -c int phi_x^2 = -c (2 / dx) (2 dt / 3)
    mesh = build_mesh(6, 4, T)
    spec = ProblemSpec(eps=1e-4, c=0.1)
    sysm = assemble_mf2(mesh, spec, multiplier="q1")
    node = 2 * (mesh.Nx + 1) + 3
    i, j = sysm.lam_map.full_to_global[node], sysm.phi_map.full_to_global[node]
    assert sysm.B[i, j] == pytest.approx(-0.1 * (2 / mesh.dx) * (2 * mesh.dt / 3), rel=1e-13)


def test_mf2_equal_order_degeneracy():
    # bilinear adjoint and multiplier: square constraint of full rank
    sysm = assemble_mf2(build_mesh(6, 3, T), ProblemSpec(eps=1e-4), multiplier="q1")
    assert sysm.B.shape[0] == sysm.B.shape[1]
    assert np.linalg.matrix_rank(sysm.B.toarray()) == sysm.B.shape[0]


def test_mf2_constraint_consistency_with_strong_form():
    # b(phi, lam) = int (phi_t + c phi_xx) lam for lam vanishing at x = 0, 1
    phi = lambda x, t: np.sin(np.pi * x) * (1 + t**2)
    lam = lambda x, t: x * (1 - x) * np.cos(t)
    c = 0.1
    from scipy.integrate import dblquad
    exact, _ = dblquad(lambda t, x: (np.sin(np.pi * x) * 2 * t - c * np.pi**2 * np.sin(np.pi * x) * (1 + t**2))
                       * lam(x, t), 0, 1, 0, T, epsabs=1e-13)
    errs = []
    for n in (8, 16, 32):
        sysm = assemble_mf2(build_mesh(n, n // 2, T), ProblemSpec(eps=1e-4, c=c))
        u = interpolate_nodal(sysm.phi_map, phi)
        mu = interpolate_nodal(sysm.lam_map, lam)
        errs.append(abs(mu @ (sysm.B @ u) - exact))
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 2e-3 * abs(exact)


def test_forward_mass_and_spectrum():
    ops = assemble_forward(64, ProblemSpec())
    u = ops.project(lambda x: np.sin(np.pi * x))
    assert u @ ops.M @ u == pytest.approx(0.5, rel=1e-10)
    import scipy.linalg as sla
    lam = sla.eigh(ops.K.toarray(), ops.M.toarray(), eigvals_only=True, subset_by_index=[0, 0])[0]
    assert lam == pytest.approx(0.1 * np.pi**2, rel=1e-3)
    assert abs(ops.M - ops.M.T).max() < 1e-15 and abs(ops.K - ops.K.T).max() < 1e-15
