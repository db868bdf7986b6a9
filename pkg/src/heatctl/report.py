"""Run configuration, table drivers, rate fitting and CSV output.

A run is described by a flat ``key=value`` text file with dotted section
prefixes::

    # baseline, first mixed formulation
    problem.eps = 1e-2
    problem.r = 1
    mesh.family = 10x5, 20x10, 40x20
    solver.path = direct

Unknown keys and malformed values raise :class:`ConfigError` carrying the
offending line number.  Every field defaults to the baseline problem
(c = 0.1, d = 0, omega = (0.2, 0.5), T = 1/2, y0 = sin(pi x)).
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Callable, get_type_hints

import numpy as np
import scipy.sparse as sp

from . import weights as W
from .assembly import MixedSystem, ProblemSpec, assemble_mf1, assemble_mf2, assemble_mf3norm, sine1
from .forward import final_norm, solve_forward
from .linalg import cond_estimate
from .mesh import build_mesh, eval_at_points, gauss01
from .oracle import build_and_solve, error_report, relative
from .solvers import (
    MixedSolution, cg_dual, factor_saddle, final_multiplier_norm, infsup_delta, residual_norm,
    solve_direct, state_norm, weighted_control_norm,
)


class ConfigError(ValueError):
    """Invalid configuration text or values."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class ReferenceCapError(ConfigError):
    """The requested fine reference exceeds the configured size cap."""


# ---------------------------------------------------------------- configuration


@dataclass
class ProblemBlock:
    c: float = 0.1
    d: float = 0.0
    omega: tuple[float, ...] = (0.2, 0.5)
    T: float = 0.5
    y0: str = "sine1"  # sine1 | zero | series
    y0_modes: tuple[float, ...] = (1.0,)  # sine coefficients for y0 = series
    eps: float = 1e-2
    r: float = 1.0
    eta: float = 1.0


@dataclass
class WeightsBlock:
    kind: str = "polyexp"  # polyexp | unit
    K1: float = 0.75
    s: float = 1.5


@dataclass
class MeshBlock:
    Nx: int = 20
    Nt: int = 10
    family: tuple[tuple[int, int], ...] = ()


@dataclass
class SolverBlock:
    formulation: str = "auto"  # auto | mf1 | mf2 | mf3
    path: str = "direct"  # direct | cg | infsup
    gamma: float = 1e-10
    tol: float = 1e-8
    maxit: int = 1000
    dirichlet: str = "eliminate"
    quad_order: int = 6
    multiplier: str = "q1p0"
    kappa: bool = False
    infsup: bool = False
    workers: int = 1


@dataclass
class OracleBlock:
    enabled: bool = True
    N: int = 50


@dataclass
class ForwardBlock:
    enabled: bool = False
    x_factor: int = 2
    t_factor: int = 4


@dataclass
class ReferenceBlock:
    path: str = ""
    Nx: int = 0
    Nt: int = 0
    max_dofs: int = 1_500_000
    lattice_q: int = 2


@dataclass
class OutputBlock:
    dir: str = ""
    name: str = "run"
    dump_matrices: bool = False


_SECTIONS = {
    "problem": ProblemBlock, "weights": WeightsBlock, "mesh": MeshBlock, "solver": SolverBlock,
    "oracle": OracleBlock, "forward": ForwardBlock, "reference": ReferenceBlock, "output": OutputBlock,
}

_CHOICES = {
    ("problem", "y0"): {"sine1", "zero", "series"},
    ("weights", "kind"): {"polyexp", "unit"},
    ("solver", "formulation"): {"auto", "mf1", "mf2", "mf3"},
    ("solver", "path"): {"direct", "cg", "infsup"},
    ("solver", "dirichlet"): {"eliminate", "keep"},
    ("solver", "multiplier"): {"q1p0", "q1"},
}


@dataclass
class RunConfig:
    problem: ProblemBlock = field(default_factory=ProblemBlock)
    weights: WeightsBlock = field(default_factory=WeightsBlock)
    mesh: MeshBlock = field(default_factory=MeshBlock)
    solver: SolverBlock = field(default_factory=SolverBlock)
    oracle: OracleBlock = field(default_factory=OracleBlock)
    forward: ForwardBlock = field(default_factory=ForwardBlock)
    reference: ReferenceBlock = field(default_factory=ReferenceBlock)
    output: OutputBlock = field(default_factory=OutputBlock)

    # derived objects ---------------------------------------------------------
    def problem_spec(self) -> ProblemSpec:
        p, w = self.problem, self.weights
        if p.y0 == "sine1":
            y0, modes = sine1, (1.0,)
        elif p.y0 == "zero":
            y0, modes = _series(()), (0.0,)
        else:
            y0, modes = _series(p.y0_modes), tuple(p.y0_modes)
        if w.kind == "unit":
            rho0 = rho = W.WeightSpec(W.Unit(), p.T)
        else:
            rho0 = W.WeightSpec(W.PolyExp(w.s, w.K1), p.T)
            rho = W.WeightSpec(W.PolyExp(0.0, w.K1), p.T)
        return ProblemSpec(c=p.c, d=p.d, omega=tuple(p.omega), T=p.T, y0=y0, eps=p.eps, r=p.r,
                           eta=p.eta, K1=w.K1, rho0=rho0, rho=rho, y0_modes=modes)

    def formulation(self) -> str:
        f = self.solver.formulation
        if f == "auto":
            return "mf3" if self.problem.eps == 0 else "mf1"
        return f

    def meshes(self) -> list[tuple[int, int]]:
        return list(self.mesh.family) or [(self.mesh.Nx, self.mesh.Nt)]

    def set(self, key: str, value: str, line: int | None = None) -> None:
        """Assign ``section.field`` from its text form."""
        section, _, name = key.partition(".")
        if section not in _SECTIONS or not name:
            raise ConfigError(f"unknown key {key!r}", line)
        block = getattr(self, section)
        hints = get_type_hints(type(block))
        if name not in hints:
            raise ConfigError(f"unknown key {key!r}", line)
        try:
            val = _convert(hints[name], value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {key}: {value!r} ({exc})", line) from None
        allowed = _CHOICES.get((section, name))
        if allowed is not None and val not in allowed:
            raise ConfigError(f"{key} must be one of {sorted(allowed)}, got {val!r}", line)
        setattr(block, name, val)

    def to_text(self) -> str:
        out = []
        for section in _SECTIONS:
            for k, v in asdict(getattr(self, section)).items():
                out.append(f"{section}.{k} = {_unconvert(v)}")
        return "\n".join(out) + "\n"


def _series(coeffs) -> Callable:
    b = np.asarray(coeffs, dtype=float)

    def y0(x):
        x = np.asarray(x, dtype=float)
        p = np.arange(1, b.size + 1)
        return np.tensordot(np.sin(np.pi * x[..., None] * p), b, axes=([-1], [0])) if b.size else 0.0 * x
    return y0


def _convert(tp, text: str):
    text = text.strip()
    if tp is bool:
        low = text.lower()
        if low in {"1", "true", "yes", "on"}:
            return True
        if low in {"0", "false", "no", "off"}:
            return False
        raise ValueError("expected a boolean")
    if tp is int:
        return int(text)
    if tp is float:
        return float(text)
    if tp is str:
        return text
    if tp == tuple[float, ...]:
        return tuple(float(s) for s in text.split(",") if s.strip())
    if tp == tuple[tuple[int, int], ...]:
        out = []
        for item in text.split(","):
            item = item.strip().lower()
            if not item:
                continue
            a, sep, b = item.partition("x")
            if not sep:
                raise ValueError("mesh entries look like 20x10")
            out.append((int(a), int(b)))
        return tuple(out)
    raise TypeError(f"unsupported field type {tp}")


def _unconvert(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (tuple, list)):
        if v and isinstance(v[0], (tuple, list)):
            return ", ".join(f"{a}x{b}" for a, b in v)
        return ", ".join(repr(float(x)) for x in v)
    return str(v)


def parse_config(text: str, base: RunConfig | None = None) -> RunConfig:
    cfg = base or RunConfig()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"expected key = value, got {raw.strip()!r}", lineno)
        cfg.set(key.strip(), value, lineno)
    validate(cfg)
    return cfg


def load_config(path: str | os.PathLike) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text)


def validate(cfg: RunConfig) -> None:
    p = cfg.problem
    if len(p.omega) != 2 or not 0 <= p.omega[0] < p.omega[1] <= 1:
        raise ConfigError(f"problem.omega must be two numbers a < b in [0, 1], got {p.omega}")
    if p.eps < 0 or p.r <= 0 or p.T <= 0 or p.c <= 0 or p.eta <= 0:
        raise ConfigError("need eps >= 0 and r, T, c, eta > 0")
    for nx, nt in cfg.meshes():
        if nx < 2 or nt < 1:
            raise ConfigError(f"mesh {nx}x{nt} is too small")
    f = cfg.formulation()
    if f == "mf3" and p.eps != 0:
        raise ConfigError("solver.formulation = mf3 needs problem.eps = 0")
    if f in {"mf1", "mf2"} and p.eps == 0:
        raise ConfigError(f"solver.formulation = {f} needs problem.eps > 0")
    if f == "mf3" and cfg.weights.kind != "polyexp":
        raise ConfigError("the eps = 0 formulation needs weights.kind = polyexp")
    if cfg.solver.quad_order < 3:
        raise ConfigError("solver.quad_order must be at least 3")
    if cfg.solver.workers < 1:
        raise ConfigError("solver.workers must be positive")


# ---------------------------------------------------------------- reports and CSV


@dataclass
class ErrorReport:
    """Per-mesh rows (sorted by decreasing h) and fitted log-log rates."""

    name: str
    cites: str
    columns: list[str]
    rows: list[dict]
    slopes: dict = field(default_factory=dict)
    units: str = "h and norms dimensionless (unit interval, T = 1/2); errors relative unless marked"

    def column(self, key: str) -> list:
        return [row.get(key) for row in self.rows]

    def to_csv(self) -> str:
        lines = [f"# table: {self.name}; mirrors: {self.cites}", f"# units: {self.units}",
                 ",".join(self.columns)]
        for row in self.rows:
            lines.append(",".join(_fmt(row.get(c)) for c in self.columns))
        return "\n".join(lines) + "\n"

    def rates_csv(self) -> str:
        lines = [f"# table: {self.name}; least-squares fits of log(value) against log(h)",
                 "quantity,slope,intercept,points"]
        for k, (s, b, n) in self.slopes.items():
            lines.append(f"{k},{_fmt(s)},{_fmt(b)},{n}")
        return "\n".join(lines) + "\n"

    def write(self, out_dir: str | os.PathLike) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = [out / f"{self.name}.csv"]
        _write_text(paths[0], self.to_csv())
        if self.slopes:
            paths.append(out / f"{self.name}_rates.csv")
            _write_text(paths[1], self.rates_csv())
        return paths


def _write_text(path: Path, text: str) -> None:
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(text)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    v = float(v)
    if math.isnan(v):
        return ""
    return f"{v:.9g}"


def fit_rate(pairs) -> tuple[float, float]:
    """Least-squares line through (log h, log e); returns (slope, intercept)."""
    pts = [(float(h), float(e)) for h, e in pairs]
    if len(pts) < 3:
        raise ValueError("fit_rate needs at least three (h, error) pairs")
    if any(not (h > 0 and e > 0) for h, e in pts):
        raise ValueError("fit_rate needs positive h and error values")
    lh = np.log([h for h, _ in pts])
    le = np.log([e for _, e in pts])
    slope, intercept = np.polyfit(lh, le, 1)
    return float(slope), float(intercept)


def _add_slopes(report: ErrorReport, keys) -> None:
    for k in keys:
        pairs = [(row["h"], row[k]) for row in report.rows
                 if row.get(k) is not None and np.isfinite(row[k]) and row[k] > 0]
        if len(pairs) >= 3:
            s, b = fit_rate(pairs)
            report.slopes[k] = (s, b, len(pairs))


def write_coo(path: str | os.PathLike, matrix) -> None:
    """Coordinate-format dump: one ``row col value`` line per stored entry."""
    M = sp.coo_matrix(matrix)
    M.sum_duplicates()
    order = np.lexsort((M.col, M.row))
    lines = [f"# shape {M.shape[0]} {M.shape[1]} nnz {M.nnz}"]
    lines += [f"{i} {j} {v:.17g}" for i, j, v in zip(M.row[order], M.col[order], M.data[order])]
    _write_text(Path(path), "\n".join(lines) + "\n")


def dump_system(system: MixedSystem, out_dir: str | os.PathLike, stem: str) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, M in (("A", system.A), ("B", system.B), ("J", system.J)):
        p = out / f"{stem}_{name}.coo"
        write_coo(p, M)
        paths.append(p)
    p = out / f"{stem}_L.txt"
    _write_text(p, "\n".join(f"{v:.17g}" for v in system.L) + "\n")
    paths.append(p)
    return paths


# ---------------------------------------------------------------- fine reference (eps = 0)


@dataclass
class Reference:
    """Fine-mesh eps = 0 solution sampled on a tensor Gauss lattice.

    ``control`` holds rho0 v (zero outside omega) and ``state`` holds
    rho^{-1} lam, both shaped (len(t), len(x)).
    """

    x: np.ndarray
    wx: np.ndarray
    t: np.ndarray
    wt: np.ndarray
    control: np.ndarray
    state: np.ndarray
    Nx: int
    Nt: int
    r: float
    control_norm: float
    state_norm: float

    def save(self, path: str | os.PathLike) -> None:
        np.savez_compressed(path, **{k: getattr(self, k) for k in
                                     ("x", "wx", "t", "wt", "control", "state")},
                            meta=np.array([self.Nx, self.Nt, self.r, self.control_norm, self.state_norm]))

    @classmethod
    def load(cls, path: str | os.PathLike) -> "Reference":
        with np.load(path) as z:
            Nx, Nt, r, cn, sn = z["meta"]
            return cls(z["x"], z["wx"], z["t"], z["wt"], z["control"], z["state"],
                       int(Nx), int(Nt), float(r), float(cn), float(sn))

    def _w(self):
        return self.wt[:, None] * self.wx[None, :]

    def sample(self, sol: MixedSolution) -> tuple[np.ndarray, np.ndarray]:
        """(rho0 v_h, rho^{-1} lam_h) of a coarse solution on this lattice."""
        sysm = sol.system
        a, b = sysm.spec.omega
        ctl = np.zeros((self.t.size, self.x.size))
        inside = (self.x > a) & (self.x < b)
        st = np.empty_like(ctl)
        rinv = W.eval_rho_inv(sysm.spec.rho, self.t)
        for k, tk in enumerate(self.t):  # row by row keeps temporaries small
            tt = np.full(self.x.shape, tk)
            ctl[k, inside] = eval_at_points(sysm.phi_map, sol.phi, self.x[inside], tt[inside])
            st[k] = rinv[k] * eval_at_points(sysm.lam_map, sol.lam, self.x, tt)
        return ctl, st

    def errors(self, sol: MixedSolution) -> tuple[float, float]:
        """Relative L2 errors of the control (in rho0 v) and of the state."""
        ctl, st = self.sample(sol)
        w = self._w()
        ec = relative(float(np.sum(w * (ctl - self.control) ** 2)), float(np.sum(w * self.control**2)))
        es = relative(float(np.sum(w * (st - self.state) ** 2)), float(np.sum(w * self.state**2)))
        return ec, es


def _lattice(N: int, length: float, q: int):
    g, w = gauss01(q)
    h = length / N
    pts = ((np.arange(N)[:, None] + g[None, :]) * h).ravel()
    wts = np.tile(w * h, N)
    return pts, wts


def estimated_dofs(Nx: int, Nt: int) -> int:
    """Upper bound on n_h + m_h for the eps = 0 formulation (keep mode)."""
    return 5 * (Nx + 1) * (Nt + 1)


def fine_reference(config: RunConfig, Nx: int, Nt: int, path: str | os.PathLike | None = None) -> Reference:
    """Solve the eps = 0 problem on a fine mesh and sample it on a lattice.

    Refuses meshes whose dof count exceeds ``config.reference.max_dofs``.
    """
    if config.problem.eps != 0:
        raise ConfigError("fine_reference is for the eps = 0 formulation")
    n_est = estimated_dofs(Nx, Nt)
    if n_est > config.reference.max_dofs:
        raise ReferenceCapError(
            f"reference mesh {Nx}x{Nt} needs about {n_est} unknowns, above the cap "
            f"reference.max_dofs = {config.reference.max_dofs}; raise the cap or use a coarser mesh")
    spec = config.problem_spec()
    mesh = build_mesh(Nx, Nt, spec.T)
    system = assemble_mf3norm(mesh, spec, q=config.solver.quad_order, dirichlet=config.solver.dirichlet)
    sol = cg_dual(system, gamma=config.solver.gamma, maxit=config.solver.maxit)
    ref = reference_from_solution(sol, config.reference.lattice_q)
    if path is not None:
        ref.save(path)
    return ref


def reference_from_solution(sol: MixedSolution, lattice_q: int = 2) -> Reference:
    """Sample an eps = 0 solution on a Gauss lattice of its own mesh."""
    mesh, spec = sol.system.mesh, sol.system.spec
    x, wx = _lattice(mesh.Nx, 1.0, lattice_q)
    t, wt = _lattice(mesh.Nt, spec.T, lattice_q)
    ref = Reference(x, wx, t, wt, np.zeros((t.size, x.size)), np.zeros((t.size, x.size)),
                    mesh.Nx, mesh.Nt, spec.r, weighted_control_norm(sol), state_norm(sol))
    ref.control, ref.state = ref.sample(sol)
    return ref


# ---------------------------------------------------------------- one mesh of a run


def assemble(config: RunConfig, Nx: int, Nt: int, spec: ProblemSpec | None = None) -> MixedSystem:
    spec = spec or config.problem_spec()
    mesh = build_mesh(Nx, Nt, spec.T)
    s = config.solver
    f = config.formulation()
    if f == "mf1":
        return assemble_mf1(mesh, spec, q=s.quad_order, dirichlet=s.dirichlet)
    if f == "mf2":
        return assemble_mf2(mesh, spec, q=s.quad_order, dirichlet=s.dirichlet, multiplier=s.multiplier)
    return assemble_mf3norm(mesh, spec, q=s.quad_order, dirichlet=s.dirichlet)


def solve_mesh(config: RunConfig, Nx: int, Nt: int, reference: Reference | None = None,
               dump_dir: str | None = None) -> dict:
    """Assemble, solve and measure one mesh; returns a report row."""
    spec = config.problem_spec()
    system = assemble(config, Nx, Nt, spec)
    mesh = system.mesh
    row = {"h": mesh.h, "Nx": Nx, "Nt": Nt, "n_h": system.n, "m_h": system.m,
           "m_h+n_h": system.n + system.m}
    if dump_dir:
        dump_system(system, dump_dir, f"{config.output.name}_{Nx}x{Nt}")
    s = config.solver
    fact = None
    if s.path == "infsup" or s.infsup:
        fact = factor_saddle(system)
        d = infsup_delta(system, tol=s.tol, maxit=s.maxit, fact=fact)
        row.update(delta=d.delta, cond=1.0 / (spec.r * d.delta**2), infsup_converged=d.converged)
        if s.path == "infsup":
            return row
    if s.path == "cg":
        sol = cg_dual(system, gamma=s.gamma, maxit=s.maxit)
    else:
        fact = fact or factor_saddle(system)
        sol = solve_direct(system, fact)
    row["iterations"] = sol.iterations
    row["residual"] = residual_norm(sol)
    row["control_norm"] = weighted_control_norm(sol)
    row["state_norm"] = state_norm(sol)
    if system.tag != "MF3norm":
        row["final_multiplier"] = final_multiplier_norm(sol)
    if s.kappa:
        if s.path == "cg":
            row["kappa(A)"] = cond_estimate(system.A)
        else:
            row["kappa"] = cond_estimate(system.block_matrix(), fact=fact)
    if spec.eps > 0 and config.oracle.enabled and spec.constant_coeffs and float(spec.d) == 0.0:
        orc = build_and_solve(config.oracle.N, spec)
        rep = error_report(orc, sol)
        row.update(control_error=rep.control_error, state_error=rep.state_error,
                   control_norm_exact=rep.control_norm)
    elif reference is not None:
        row["control_error"], row["state_error"] = reference.errors(sol)
    if config.forward.enabled:
        run = solve_forward(spec, sol, Nx_f=config.forward.x_factor * Nx,
                            Nt_f=config.forward.t_factor * Nt, q=s.quad_order)
        row["forward_final"] = final_norm(run)
    return row


_RUN_COLUMNS = ["h", "Nx", "Nt", "n_h", "m_h", "residual", "control_error", "state_error",
                "control_norm", "state_norm", "final_multiplier", "forward_final", "kappa",
                "kappa(A)", "iterations", "delta", "cond"]


def _map_meshes(fn, config: RunConfig, meshes, *args):
    """Evaluate ``fn(config, Nx, Nt, *args)`` per mesh, concurrently if asked; results in mesh order."""
    if config.solver.workers > 1 and len(meshes) > 1:
        with ProcessPoolExecutor(max_workers=config.solver.workers) as ex:
            futs = [ex.submit(fn, config, nx, nt, *args) for nx, nt in meshes]
            return [f.result() for f in futs]
    return [fn(config, nx, nt, *args) for nx, nt in meshes]


def _resolve_reference(config: RunConfig) -> Reference | None:
    ref = config.reference
    if config.problem.eps != 0:
        return None
    if ref.path and Path(ref.path).exists():
        return Reference.load(ref.path)
    if ref.Nx > 0 and ref.Nt > 0:
        return fine_reference(config, ref.Nx, ref.Nt, ref.path or None)
    return None


def run(config: RunConfig) -> ErrorReport:
    """Execute the configured path over the mesh family and emit CSV files."""
    validate(config)
    meshes = config.meshes()
    reference = _resolve_reference(config)
    dump = config.output.dir if config.output.dump_matrices else None
    if dump is None and config.output.dump_matrices:
        dump = "."
    rows = _map_meshes(solve_mesh, config, meshes, reference, dump)
    rows.sort(key=lambda r: -r["h"])
    present = [c for c in _RUN_COLUMNS if any(c in r for r in rows)]
    rep = ErrorReport(config.output.name, f"configured run ({config.formulation()}, path {config.solver.path})",
                      present, rows)
    _add_slopes(rep, ["residual", "control_error", "state_error", "forward_final"])
    if config.output.dir:
        rep.write(config.output.dir)
    return rep


# ---------------------------------------------------------------- published tables


def published() -> dict:
    """Comparator values shipped with the package, keyed by table name."""
    with resources.files("heatctl").joinpath("data/published.json").open("r", encoding="utf-8") as fh:
        return json.load(fh)


@dataclass(frozen=True)
class Column:
    label: str  # CSV column name
    source: str  # key of the computed row entry
    published: str | None = None  # key in the published rows


@dataclass(frozen=True)
class Variant:
    """One parameter set solved on every mesh of a table."""

    eps: float
    r: float
    path: str
    columns: tuple[Column, ...]
    infsup: bool = False
    kappa: bool = False
    forward: bool = False
    formulation: str = "auto"


_EPS = (("e02", 1e-2), ("e04", 1e-4), ("e08", 1e-8))
_ETAG = {1e-2: "1e-2", 1e-4: "1e-4", 1e-8: "1e-8"}
_R = {"r001": 0.01, "r1": 1.0, "r100": 100.0}


def _infsup_variants(r: float) -> tuple[Variant, ...]:
    return tuple(Variant(e, r, "infsup", (Column(f"delta eps={_ETAG[e]}", "delta", f"delta eps={_ETAG[e]}"),))
                 for _, e in _EPS)


def _cond_variants(rs) -> tuple[Variant, ...]:
    out = []
    for r in rs:
        tag = "" if len(rs) == 1 else f" r={r:g}"
        for _, e in _EPS:
            out.append(Variant(e, r, "infsup", (Column(f"cond eps={_ETAG[e]}{tag}", "cond", f"cond eps={_ETAG[e]}"),)))
    return tuple(out)


def _mf1_variant(r: float, eps: float, name: str) -> tuple[Variant, ...]:
    cols = [Column("m_h+n_h", "m_h+n_h", "m_h+n_h"), Column("residual", "residual", "residual"),
            Column("control_error", "control_error", "control_error"),
            Column("state_error", "state_error", "state_error"),
            Column("final_multiplier", "final_multiplier", "final_multiplier"),
            Column("kappa", "kappa", "kappa")]
    if name == "mf1-r001-e08":
        cols.insert(3, Column("control_error_absolute", "control_error_absolute", "control_error_absolute"))
    return (Variant(eps, r, "direct", tuple(cols), kappa=True, formulation="mf1"),)


def _cg_variants(r: float, with_kappa: bool) -> tuple[Variant, ...]:
    out = []
    for _, e in _EPS:
        cols = [Column(f"iterations eps={_ETAG[e]}", "iterations", f"iterations eps={_ETAG[e]}")]
        if e == 1e-2:
            cols.insert(0, Column("m_h", "m_h", "m_h"))
            if with_kappa:
                cols.append(Column("kappa(A) eps=1e-2", "kappa(A)", "kappa(A) eps=1e-2"))
        out.append(Variant(e, r, "cg", tuple(cols), kappa=with_kappa and e == 1e-2, formulation="mf1"))
    return tuple(out)


def _mf3_variant(r: float) -> tuple[Variant, ...]:
    cols = tuple(Column(k, k, k) for k in ("residual", "control_error", "control_norm", "state_norm",
                                           "state_error", "iterations", "cond", "forward_final"))
    return (Variant(0.0, r, "cg", cols, infsup=True, forward=True, formulation="mf3"),)


def _mf3_infsup_variants() -> tuple[Variant, ...]:
    return tuple(Variant(0.0, r, "infsup", (Column(f"delta r={lab}", "delta", f"delta r={lab}"),),
                         formulation="mf3") for lab, r in (("1e2", 100.0), ("1", 1.0), ("1e-2", 0.01)))


def _table_registry() -> dict[str, tuple[Variant, ...]]:
    reg: dict[str, tuple[Variant, ...]] = {}
    for tag, r in _R.items():
        reg[f"infsup-{tag}"] = _infsup_variants(r)
    reg["infsup-mf3"] = _mf3_infsup_variants()
    for tag, r in _R.items():
        for etag, e in _EPS:
            reg[f"mf1-{tag}-{etag}"] = _mf1_variant(r, e, f"mf1-{tag}-{etag}")
    reg["mf2-r1-e04"] = (Variant(1e-4, 1.0, "direct", tuple(
        Column(k, k, k) for k in ("m_h+n_h", "residual", "control_error", "state_error")), formulation="mf2"),)
    reg["cond-r001"] = _cond_variants((0.01,))
    reg["cond-r1-r100"] = _cond_variants((1.0, 100.0))
    reg["cg-r1"] = _cg_variants(1.0, True)
    reg["cg-r100"] = _cg_variants(100.0, False)
    reg["cg-r001"] = _cg_variants(0.01, False)
    for tag, r in _R.items():
        reg[f"mf3-{tag}"] = _mf3_variant(r)
    return reg


TABLES = _table_registry()
ALIASES = {"cg-counts": ("cg-r1", "cg-r100", "cg-r001")}


def table_names() -> list[str]:
    return sorted(TABLES) + sorted(ALIASES)


# The ε = 0 tables compare against a self-computed fine solution; this is
# the largest mesh that fits in a few GB with the direct factorizations used.
DEFAULT_REFERENCE_MESH = (640, 320)
# δ on the eps = 0 meshes costs about 4 GB at 320x160; nothing is published beyond it
DEFAULT_INFSUP_MAX_CELLS = 320 * 160


def table_config(variant: Variant, base: RunConfig | None = None) -> RunConfig:
    cfg = replace(base or RunConfig())
    cfg.problem = replace(cfg.problem, eps=variant.eps, r=variant.r)
    cfg.solver = replace(cfg.solver, path=variant.path, formulation=variant.formulation,
                         infsup=variant.infsup, kappa=variant.kappa)
    cfg.forward = replace(cfg.forward, enabled=variant.forward)
    cfg.output = replace(cfg.output, dump_matrices=False)
    return cfg


def _table_meshes(entry: dict, pub: dict) -> list[tuple[int, int]]:
    return [tuple(pub["_meshes"][h]) for h in entry["h"]]


def table(name: str, base: RunConfig | None = None, meshes=None, out_dir: str | None = None,
          reference: Reference | None = None, reference_mesh=DEFAULT_REFERENCE_MESH,
          infsup_max_cells: int | None = DEFAULT_INFSUP_MAX_CELLS) -> ErrorReport:
    """Run the mesh and parameter family of a published table.

    ``meshes`` restricts the family to a subset; ``infsup_max_cells`` skips
    inf-sup estimates on larger meshes inside the eps = 0 tables (None: never).
    """
    if name in ALIASES:
        parts = [table(n, base, meshes, None, reference, reference_mesh, infsup_max_cells) for n in ALIASES[name]]
        rep = _merge_alias(name, parts)
        if out_dir:
            rep.write(out_dir)
        return rep
    if name not in TABLES:
        raise KeyError(f"unknown table {name!r}; available: {', '.join(table_names())}")
    pub = published()
    entry = pub[name]
    family = _table_meshes(entry, pub)
    if meshes is not None:
        wanted = {tuple(m) for m in meshes}
        family = [m for m in family if m in wanted]
    rows = {m: {"h": None, "Nx": m[0], "Nt": m[1]} for m in family}
    columns = ["h", "Nx", "Nt"]
    for variant in TABLES[name]:
        cfg = table_config(variant, base)
        ref = None
        if variant.eps == 0 and variant.path != "infsup":
            ref = reference or _table_reference(cfg, reference_mesh, out_dir)
        results = _map_meshes(_table_cell, cfg, family, ref, infsup_max_cells)
        for m, res in zip(family, results):
            row = rows[m]
            row["h"] = res["h"]
            if "control_error" in res and "control_norm_exact" in res:
                res["control_error_absolute"] = res["control_error"] * res["control_norm_exact"]
            for col in variant.columns:
                row[col.label] = res.get(col.source)
        for col in variant.columns:
            columns.append(col.label)
            if col.published is not None:
                columns.append(col.label + " (published)")
    for m in family:
        idx = entry["h"].index(_h_label(m, pub))
        for variant in TABLES[name]:
            for col in variant.columns:
                if col.published is not None:
                    vals = entry["rows"].get(col.published)
                    rows[m][col.label + " (published)"] = None if vals is None else vals[idx]
    out_rows = sorted(rows.values(), key=lambda r: -r["h"])
    rep = ErrorReport(name, entry["cites"], columns, out_rows)
    _add_slopes(rep, [c for c in ("residual", "control_error", "state_error", "forward_final") if c in columns])
    if out_dir:
        rep.write(out_dir)
    return rep


def _h_label(m, pub) -> str:
    for k, v in pub["_meshes"].items():
        if tuple(v) == tuple(m):
            return k
    raise KeyError(m)


def _table_cell(cfg: RunConfig, Nx: int, Nt: int, reference, infsup_max_cells) -> dict:
    if infsup_max_cells is not None and Nx * Nt > infsup_max_cells and cfg.solver.path != "infsup":
        cfg = replace(cfg, solver=replace(cfg.solver, infsup=False))
    return solve_mesh(cfg, Nx, Nt, reference)


def _table_reference(cfg: RunConfig, mesh, out_dir) -> Reference:
    Nx, Nt = mesh
    path = None
    if out_dir:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        path = Path(out_dir) / f"reference_r{cfg.problem.r:g}_{Nx}x{Nt}.npz"
        if path.exists():
            ref = Reference.load(path)
            if ref.r == cfg.problem.r:
                return ref
    return fine_reference(cfg, Nx, Nt, path)


def _merge_alias(name: str, parts: list[ErrorReport]) -> ErrorReport:
    columns = ["h", "Nx", "Nt"]
    rows: dict = {}
    for rep in parts:
        r_tag = rep.name.split("-", 1)[1]
        for col in rep.columns[3:]:
            columns.append(f"{r_tag} {col}")
        for row in rep.rows:
            key = (row["Nx"], row["Nt"])
            tgt = rows.setdefault(key, {"h": row["h"], "Nx": row["Nx"], "Nt": row["Nt"]})
            for col in rep.columns[3:]:
                tgt[f"{r_tag} {col}"] = row.get(col)
    cites = "; ".join(p.cites for p in parts)
    return ErrorReport(name, cites, columns, sorted(rows.values(), key=lambda r: -r["h"]))


def published_reference_row() -> dict:
    """The published fine-mesh norms for eps = 0, emitted verbatim."""
    return dict(published()["mf3-reference"]["rows"])
