"""Semi-explicit Fourier reference solution for constant coefficients and eps > 0.

With phi(x, t) = sum_p a_p exp(c pi^2 p^2 (t - T)) sin(p pi x), the optimality
condition of the penalized dual functional is the dense SPD system M a = F with

    M_pq = 1/2 c_pq(omega) int_0^T rho0^{-2} e^{c pi^2 (p^2+q^2)(t-T)} dt + eps/2 delta_pq
    F_p  = -1/2 b_p e^{-c pi^2 p^2 T}

where c_pq(omega) = 2 int_omega sin(p pi x) sin(q pi x) dx and b_p are the sine
coefficients of y0.  The controlled state is propagated mode by mode (Duhamel).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from . import weights as W
from .assembly import ProblemSpec
from .mesh import Block, domain_blocks, gauss01, omega_blocks

_GL = 16  # Gauss points per panel for time integrals


def c_pq(omega, p, q):
    """2 * integral over omega of sin(p pi x) sin(q pi x) (closed form)."""
    a, b = omega
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    p, q = np.broadcast_arrays(p, q)
    out = np.empty(p.shape)
    same = p == q
    # p == q: 2 int sin^2 = (b - a) - [sin(2 p pi x) / (2 p pi)]_a^b
    ps = p[same]
    out[same] = (b - a) - (np.sin(2 * ps * np.pi * b) - np.sin(2 * ps * np.pi * a)) / (2 * ps * np.pi)
    # p != q: 2 sin sin = cos((p-q) pi x) - cos((p+q) pi x)
    pd, qd = p[~same], q[~same]
    m, s = (pd - qd) * np.pi, (pd + qd) * np.pi
    out[~same] = (np.sin(m * b) - np.sin(m * a)) / m - (np.sin(s * b) - np.sin(s * a)) / s
    return out[()]


def _panels_to_T(T: float, levels: int = 40, ratio: float = 0.5):
    """Panel edges on [0, T], geometrically refined toward t = T."""
    tau = T * ratio ** np.arange(levels + 1)  # distances to T
    return np.unique(np.concatenate([np.linspace(0.0, T / 2, 9), T - tau[1:], [T]]))


def _composite(edges, n=_GL):
    g, w = gauss01(n)
    lo, hi = edges[:-1], edges[1:]
    s = (lo[:, None] + (hi - lo)[:, None] * g[None, :]).ravel()
    ws = ((hi - lo)[:, None] * w[None, :]).ravel()
    return s, ws


def d_pq(t, p, q, rho0: W.WeightSpec, c: float = 0.1, T: float | None = None, panels: int | None = None):
    """int_0^t rho0^{-2}(s) exp(c pi^2 (p^2 (s - T) + q^2 (s - t))) ds.

    The exponent is nonpositive on [0, t]; panels are sized so that the fast
    exponential factor varies by O(1) per panel.
    """
    T = rho0.T if T is None else T
    t = float(t)
    if t <= 0:
        return 0.0
    k = c * np.pi**2 * (p**2 + q**2)
    n = panels or int(min(4000, max(8, np.ceil(k * t))))
    s, ws = _composite(np.linspace(0.0, t, n + 1))
    f = W.eval_rho0_inv2(rho0, s) * np.exp(c * np.pi**2 * (p**2 * (s - T) + q**2 * (s - t)))
    return float(np.sum(ws * f))


def sine_coefficients(f, N: int, n_quad: int = 2048) -> np.ndarray:
    """b_p = 2 int_0^1 f(x) sin(p pi x) dx for p = 1..N."""
    edges = np.linspace(0.0, 1.0, n_quad // 16 + 1)
    x, w = _composite(edges)
    p = np.arange(1, N + 1)
    return 2.0 * (np.sin(np.pi * np.outer(p, x)) @ (w * f(x)))


@dataclass
class FourierOracle:
    N: int
    a: np.ndarray
    b0: np.ndarray
    spec: ProblemSpec
    M: np.ndarray = field(repr=False)
    F: np.ndarray = field(repr=False)
    C: np.ndarray = field(repr=False)  # c_pq(omega)

    @property
    def modes(self) -> np.ndarray:
        return np.arange(1, self.N + 1)

    @property
    def kappa(self) -> np.ndarray:
        return float(self.spec.c) * np.pi**2 * self.modes**2

    @property
    def tail_ratio(self) -> float:
        """|a_N| / ||a||, the relative weight of the last retained mode."""
        n = np.linalg.norm(self.a)
        return float(abs(self.a[-1]) / n) if n > 0 else 0.0

    def phi_T_norm(self) -> float:
        return float(np.sqrt(0.5 * np.sum(self.a**2)))

    def dual_value(self) -> float:
        """J*(phi_T) = 1/2 a^T M a - F^T a at the optimum."""
        return float(0.5 * self.a @ self.M @ self.a - self.F @ self.a)

    # mode amplitudes -------------------------------------------------------
    def phi_modes(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return self.a[None, :] * np.exp(self.kappa[None, :] * (t[:, None] - self.spec.T))

    def y_modes(self, t) -> np.ndarray:
        """State sine coefficients Y_q(t), shape (len(t), N)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        order = np.argsort(t, kind="stable")
        ts = t[order]
        T, kap, spec = self.spec.T, self.kappa, self.spec
        out = np.empty((ts.size, self.N))
        z = np.zeros(self.N)
        prev = 0.0
        # panel width so that e^{-kappa_N * width} stays O(1)
        hmax = min(T / 64, 2.0 / kap[-1]) if self.N > 1 else T / 64

        def source(s):
            # f_q(s) = rho0^{-2}(s) sum_p c_qp a_p e^{kappa_p (s - T)}
            em = self.a[None, :] * np.exp(kap[None, :] * (s[:, None] - T))
            return W.eval_rho0_inv2(spec.rho0, s)[:, None] * (em @ self.C.T)

        for k, tk in enumerate(ts):
            if tk > prev:
                npan = int(np.ceil((tk - prev) / hmax))
                edges = np.linspace(prev, tk, npan + 1)
                s, ws = _composite(edges, 8)
                decay = np.exp(-kap[None, :] * (tk - s[:, None]))
                z = np.exp(-kap * (tk - prev)) * z + np.sum((ws[:, None] * decay) * source(s), axis=0)
                prev = tk
            out[k] = np.exp(-kap * tk) * self.b0 + z
        res = np.empty_like(out)
        res[order] = out
        return res

    # point evaluators -------------------------------------------------------
    def _field(self, modes_t, x, t):
        x = np.asarray(x, dtype=float)
        t = np.asarray(t, dtype=float)
        x, t = np.broadcast_arrays(x, t)
        tu, inv = np.unique(t.ravel(), return_inverse=True)
        A = modes_t(tu)[inv]  # (npts, N)
        S = np.sin(np.pi * x.ravel()[:, None] * self.modes[None, :])
        return np.sum(A * S, axis=1).reshape(x.shape)

    def phi(self, x, t):
        return self._field(self.phi_modes, x, t)

    def v(self, x, t):
        x = np.asarray(x, dtype=float)
        t = np.asarray(t, dtype=float)
        a, b = self.spec.omega
        val = W.eval_rho0_inv2(self.spec.rho0, t) * self.phi(x, t)
        return np.where((x > a) & (x < b), val, 0.0)

    def y(self, x, t):
        return self._field(self.y_modes, x, t)

    # fields on quadrature blocks (tensor structure exploited) ----------------
    def _on_block(self, modes_t, block: Block, mesh) -> np.ndarray:
        X, Tm = block.points(mesh)
        nr, nc = block.rows.size, block.cols.size
        nqx, nqt = block.xpts.size, block.tpts.size
        tvals = ((block.rows[:, None] + block.tpts[None, :]) * mesh.dt).ravel()  # (nr*nqt)
        xvals = ((block.cols[:, None] + block.xpts[None, :]) * mesh.dx).ravel()  # (nc*nqx)
        A = modes_t(tvals)  # (nr*nqt, N)
        S = np.sin(np.pi * xvals[:, None] * self.modes[None, :])  # (nc*nqx, N)
        G = (A @ S.T).reshape(nr, nqt, nc, nqx)
        return G.transpose(0, 2, 3, 1).reshape(nr * nc, nqx * nqt)

    def phi_on(self, block, mesh):
        return self._on_block(self.phi_modes, block, mesh)

    def y_on(self, block, mesh):
        return self._on_block(self.y_modes, block, mesh)


def build_and_solve(N: int, spec: ProblemSpec, b0: np.ndarray | None = None) -> FourierOracle:
    """Assemble and solve the modal optimality system."""
    if not spec.eps > 0:
        raise ValueError("the modal system is ill-posed for eps = 0")
    if not spec.constant_coeffs or float(spec.d) != 0.0:
        raise ValueError("the oracle needs constant c and d = 0")
    c, T = float(spec.c), spec.T
    p = np.arange(1, N + 1)
    if b0 is None:
        if spec.y0_modes is not None:
            b0 = np.zeros(N)
            k = min(N, len(spec.y0_modes))
            b0[:k] = spec.y0_modes[:k]
        else:
            b0 = sine_coefficients(spec.y0, N)
    b0 = np.asarray(b0, dtype=float)[:N]
    C = c_pq(spec.omega, p[:, None], p[None, :])
    C = 0.5 * (C + C.T)
    s, ws = _composite(_panels_to_T(T))
    w = ws * W.eval_rho0_inv2(spec.rho0, s)
    kap = c * np.pi**2 * p**2
    E = np.exp(kap[None, :] * (s[:, None] - T))  # (ns, N)
    I = (E * w[:, None]).T @ E  # int rho0^-2 e^{(k_p + k_q)(t - T)}
    M = 0.5 * C * I + 0.5 * spec.eps * np.eye(N)
    M = 0.5 * (M + M.T)
    F = -0.5 * b0 * np.exp(-kap * T)
    a = sla.cho_solve(sla.cho_factor(M), F)
    orc = FourierOracle(N, a, b0, spec, M, F, C)
    if orc.tail_ratio > 1e-10:
        warnings.warn(f"oracle truncation: last mode carries {orc.tail_ratio:.2e} of ||a||; raise N",
                      RuntimeWarning, stacklevel=2)
    return orc


def eval_phi(oracle: FourierOracle, x, t):
    return oracle.phi(x, t)


def eval_v(oracle: FourierOracle, x, t):
    return oracle.v(x, t)


def eval_y(oracle: FourierOracle, x, t):
    return oracle.y(x, t)


@dataclass
class ErrorReport:
    control_error: float
    state_error: float
    control_norm: float
    state_norm: float


def error_report(oracle: FourierOracle, sol) -> ErrorReport:
    """Relative errors of rho0 v_h on q_T and of y_h on Q_T against the oracle."""
    sys = sol.system
    if sys.spec.eps != oracle.spec.eps or sys.spec.omega != oracle.spec.omega or sys.spec.T != oracle.spec.T:
        raise ValueError("oracle and solution describe different problems")
    mesh = sys.mesh
    num = den = 0.0
    for b in omega_blocks(mesh, sys.spec.omega, sys.q):
        _, Tm = b.points(mesh)
        ref = W.eval_rho0_inv(sys.spec.rho0, Tm) * oracle.phi_on(b, mesh)
        w = b.weights()[None, :]
        num += float(np.sum(w * (ref - sol.weighted_control_on(b)) ** 2))
        den += float(np.sum(w * ref**2))
    cnum, cden = num, den
    num = den = 0.0
    for b in domain_blocks(mesh, sys.q):
        ref = oracle.y_on(b, mesh)
        w = b.weights()[None, :]
        num += float(np.sum(w * (ref - sol.state_on(b)) ** 2))
        den += float(np.sum(w * ref**2))
    return ErrorReport(relative(cnum, cden), relative(num, den), np.sqrt(cden), np.sqrt(den))


def relative(num_sq: float, den_sq: float) -> float:
    """sqrt(num/den); the absolute value sqrt(num) when the reference vanishes."""
    if den_sq == 0.0:
        return float(np.sqrt(num_sq))
    return float(np.sqrt(num_sq / den_sq))
