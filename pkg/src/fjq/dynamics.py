"""Numerical integration of reduced models and of the unreduced constrained system.

Exact matrices are converted to floats once at setup; everything here is
plain floating point.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .constraint_assembly import ReducedSpace, assemble_pfaff, kernel_embedding
from .energy_symbolics import EnergyExpr, SourceCoupling, const, total_energy
from .exact_linalg import RationalMatrix, SingularMatrix, inverse, kernel_basis, rank
from .fj_reduction import HamiltonianModel, directional, gauge_subspace
from .netlist import CircuitGraph
from .symplectic_structure import build_structure


class SingularKineticForm(ValueError):
    """omega - F is exactly singular."""


class NewtonDivergence(RuntimeError):
    """Newton iteration for the implicit coordinates did not converge."""


class BifurcationProximity(RuntimeError):
    """The implicit-constraint Jacobian (normalised) came within 1e-9 of zero."""

    def __init__(self, message: str, t: float | None = None, value: float | None = None):
        super().__init__(message)
        self.t = t
        self.value = value


class NonlinearConstraintUnsupported(ValueError):
    """The unreduced oracle only handles constraints that are affine in the state."""


BIFURCATION_TOL = 1e-9


@dataclass
class SimConfig:
    t_end: float
    dt: float
    method: str = "RK4"  # or "ImplicitMidpoint"
    initial: Mapping[str, float] = field(default_factory=dict)
    newton_tol: float = 1e-12
    newton_max_iter: int = 50

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if self.method not in ("RK4", "ImplicitMidpoint"):
            raise ValueError(f"unknown method {self.method!r}")

    @property
    def steps(self) -> int:
        return max(1, int(round(self.t_end / self.dt)))


@dataclass
class Trajectory:
    names: tuple[str, ...]
    times: np.ndarray
    states: np.ndarray  # (len(times), len(names))
    energy: np.ndarray
    dissipated: np.ndarray  # cumulative integral of 2*Rayleigh
    rayleigh_power: np.ndarray
    residual: np.ndarray

    def series(self, name: str) -> np.ndarray:
        return self.states[:, self.names.index(name)]

    def balance(self) -> np.ndarray:
        return self.energy + self.dissipated


def write_csv(traj: Trajectory, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", *traj.names, "energy", "dissipated", "rayleigh_power", "residual"])
        for i, t in enumerate(traj.times):
            w.writerow([repr(float(t)), *(repr(float(x)) for x in traj.states[i]),
                        repr(float(traj.energy[i])), repr(float(traj.dissipated[i])),
                        repr(float(traj.rayleigh_power[i])), repr(float(traj.residual[i]))])


def _float_matrix(m: RationalMatrix) -> np.ndarray:
    return np.array([[float(x) for x in m.row(i)] for i in range(m.rows)], dtype=float).reshape(m.rows, m.cols)


def _waveform_values(sources: SourceCoupling, t: float) -> np.ndarray:
    return np.array(sources.values(t), dtype=float) if len(sources) else np.zeros(0)


def _waveform_rates(sources: SourceCoupling, t: float) -> np.ndarray:
    return np.array(sources.derivative_values(t), dtype=float) if len(sources) else np.zeros(0)


# ---------------------------------------------------------------------------
# compiled reduced model


class CompiledModel:
    """Float closures for H, its gradient and the implicit constraints of a model."""

    def __init__(self, model: HamiltonianModel):
        self.model = model
        n = model.n_canonical
        m = len(model.implicit)
        self.n, self.m = n, m
        a = model.two_form - model.rayleigh
        if n and rank(a) < n:
            raise SingularKineticForm("omega - F is singular")
        self.a_inv = _float_matrix(inverse(a)) if n else np.zeros((0, 0))
        self.f = _float_matrix(model.rayleigh) if n else np.zeros((0, 0))
        h = model.hamiltonian
        self.h = h.compile()
        self.grad = [h.diff(i).compile() for i in range(n)]
        nsrc = len(model.sources)
        self.src_grad = np.zeros((n, nsrc))
        for k, sig in enumerate(model.sources.exprs):
            for i in range(n):
                d = sig.diff(i)
                self.src_grad[i, k] = float(d.constant_term()) if d.is_constant() else math.nan
        self.sigma = [s.compile() for s in model.sources.exprs]
        idx = [c.index for c in model.implicit]
        self.implicit_idx = idx
        self.eq = [c.equation.compile() for c in model.implicit]
        self.eq_src = np.array([[float(x) for x in c.source_terms] for c in model.implicit]).reshape(m, nsrc)
        self.jac = [[c.equation.diff(j).compile() for j in idx] for c in model.implicit]
        self.eq_dxi = [[c.equation.diff(i).compile() for i in range(n)] for c in model.implicit]
        jc = [[c.equation.diff(j).constant_term() for j in idx] for c in model.implicit]
        self.jac_scale = 1.0
        if m:
            try:
                d0 = float(np.linalg.det(np.array([[float(x) for x in r] for r in jc])))
                self.jac_scale = d0 if d0 else 1.0
            except (TypeError, ValueError):
                self.jac_scale = 1.0
        self._w = np.zeros(m)

    # implicit coordinates -----------------------------------------------------
    def resolve(self, xi: np.ndarray, t: float, tol: float = 1e-12, max_iter: int = 50,
                guard: bool = True) -> np.ndarray:
        """Full coordinate vector (xi, w) with w solving the implicit constraints."""
        full = np.concatenate([np.asarray(xi, float), self._w.copy()])
        if not self.m:
            return full
        s = _waveform_values(self.model.sources, t)
        srcv = self.eq_src @ s if s.size else np.zeros(self.m)
        for it in range(max_iter):
            r = np.array([f(full) for f in self.eq]) + srcv
            jm = np.array([[f(full) for f in row] for row in self.jac])
            det = np.linalg.det(jm) / self.jac_scale
            if guard and abs(det) < BIFURCATION_TOL:
                raise BifurcationProximity("implicit-constraint Jacobian is singular", t, det)
            step = np.linalg.solve(jm, -r)
            lam = 1.0
            base = np.linalg.norm(r)
            while True:  # backtracking keeps the guarded Newton monotone
                trial = full.copy()
                trial[self.n:] += lam * step
                rt = np.array([f(trial) for f in self.eq]) + srcv
                if np.linalg.norm(rt) <= base or lam < 1e-6:
                    break
                lam *= 0.5
            full = trial
            if np.all(np.abs(lam * step) <= tol * (1.0 + np.abs(full[self.n:]))):
                self._w = full[self.n:].copy()
                return full
        raise NewtonDivergence(f"no convergence in {max_iter} iterations at t={t}")

    def residual(self, full: np.ndarray, t: float) -> float:
        if not self.m:
            return 0.0
        s = _waveform_values(self.model.sources, t)
        srcv = self.eq_src @ s if s.size else np.zeros(self.m)
        return float(np.max(np.abs(np.array([f(full) for f in self.eq]) + srcv)))

    def gradient_total(self, full: np.ndarray, t: float) -> np.ndarray:
        g = np.array([f(full) for f in self.grad])
        s = _waveform_values(self.model.sources, t)
        if s.size:
            g = g + self.src_grad @ s
        return g

    def energy(self, full: np.ndarray) -> float:
        return float(self.h(full))

    def source_energy(self, full: np.ndarray, t: float) -> float:
        s = _waveform_values(self.model.sources, t)
        return float(sum(sk * f(full) for sk, f in zip(s, self.sigma)))

    def velocity(self, xi: np.ndarray, t: float, tol=1e-12, max_iter=50) -> tuple[np.ndarray, np.ndarray]:
        full = self.resolve(xi, t, tol, max_iter)
        return self.a_inv @ self.gradient_total(full, t), full

    def implicit_rates(self, full: np.ndarray, xi_dot: np.ndarray, t: float) -> np.ndarray:
        """dw/dt from differentiating the implicit constraints along the flow."""
        if not self.m:
            return np.zeros(0)
        jm = np.array([[f(full) for f in row] for row in self.jac])
        dxi = np.array([[f(full) for f in row] for row in self.eq_dxi]).reshape(self.m, self.n)
        rhs = -(dxi @ xi_dot)
        ds = _waveform_rates(self.model.sources, t)
        if ds.size:
            rhs = rhs - self.eq_src @ ds
        return np.linalg.solve(jm, rhs)


def vector_field(model: HamiltonianModel | CompiledModel, state: Sequence[float], t: float) -> np.ndarray:
    """zdot = (omega - F)^-1 grad(H + S.z) on the canonical coordinates."""
    cm = model if isinstance(model, CompiledModel) else CompiledModel(model)
    v, _ = cm.velocity(np.asarray(state, float), t)
    return v


def branch_velocity(model: HamiltonianModel | CompiledModel, state: Sequence[float], t: float) -> np.ndarray:
    """Time derivative of the 2B branch variables at a canonical state."""
    cm = model if isinstance(model, CompiledModel) else CompiledModel(model)
    v, full = cm.velocity(np.asarray(state, float), t)
    wdot = cm.implicit_rates(full, v, t)
    lin = _float_matrix(cm.model.embedding.lin)
    out = lin @ np.concatenate([v, wdot])
    src = cm.model.embedding.src
    if src.cols:
        out = out + _float_matrix(src) @ _waveform_rates(cm.model.sources, t)
    return out


def reconstruct(model: HamiltonianModel, full: Sequence[float], t: float) -> np.ndarray:
    """Branch variables (charges then fluxes) at a full coordinate vector."""
    emb = model.embedding
    out = _float_matrix(emb.lin) @ np.asarray(full, float) + np.array([float(x) for x in emb.off])
    if emb.src.cols:
        out = out + _float_matrix(emb.src) @ _waveform_values(model.sources, t)
    return out


def initial_vector(model: HamiltonianModel, initial: Mapping[str, float]) -> np.ndarray:
    x = np.zeros(model.n_canonical)
    for k, v in initial.items():
        if k not in model.names[: model.n_canonical]:
            raise KeyError(f"unknown canonical coordinate {k!r}")
        x[model.names.index(k)] = float(v)
    return x


def integrate(model: HamiltonianModel, cfg: SimConfig, x0: Sequence[float] | None = None) -> Trajectory:
    """Fixed-step integration with energy, Rayleigh power and residual monitors.

    The dissipated energy is integrated alongside the state so the balance
    H + int 2F keeps the order of the integrator.
    """
    cm = CompiledModel(model)
    n = cm.n
    x = np.array(x0, float) if x0 is not None else initial_vector(model, cfg.initial)
    steps = cfg.steps
    dt = cfg.dt
    times = np.zeros(steps + 1)
    states = np.zeros((steps + 1, n + cm.m))
    energy = np.zeros(steps + 1)
    diss = np.zeros(steps + 1)
    power = np.zeros(steps + 1)
    resid = np.zeros(steps + 1)

    def f(xi, t):
        v, full = cm.velocity(xi, t, cfg.newton_tol, cfg.newton_max_iter)
        return v, float(v @ cm.f @ v) if n else 0.0, full

    def record(i, t, xi, d):
        v, p, full = f(xi, t)
        times[i] = t
        states[i] = full
        energy[i] = cm.energy(full)
        diss[i] = d
        power[i] = p
        resid[i] = cm.residual(full, t)

    t = 0.0
    d = 0.0
    try:
        record(0, t, x, d)
        for i in range(1, steps + 1):
            if cfg.method == "RK4":
                k1, p1, _ = f(x, t)
                k2, p2, _ = f(x + 0.5 * dt * k1, t + 0.5 * dt)
                k3, p3, _ = f(x + 0.5 * dt * k2, t + 0.5 * dt)
                k4, p4, _ = f(x + dt * k3, t + dt)
                x = x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
                d = d + dt / 6.0 * (p1 + 2 * p2 + 2 * p3 + p4)
            else:
                x, pm = _midpoint_step(f, x, t, dt, cfg)
                d = d + dt * pm
            t = i * dt
            record(i, t, x, d)
    except BifurcationProximity as exc:
        exc.t = t if exc.t is None else exc.t
        raise
    except NewtonDivergence as exc:
        raise NewtonDivergence(f"{exc} (step starting at t={t:.6g})") from exc
    return Trajectory(tuple(model.names), times, states, energy, diss, power, resid)


def _midpoint_step(f, x, t, dt, cfg):
    """Implicit midpoint x1 = x + dt f((x + x1)/2) by Newton with a difference Jacobian."""
    n = x.size
    v0, _, _ = f(x, t)
    x1 = x + dt * v0
    for _ in range(cfg.newton_max_iter):
        mid = 0.5 * (x + x1)
        vm, pm, _ = f(mid, t + 0.5 * dt)
        r = x1 - x - dt * vm
        if np.all(np.abs(r) <= cfg.newton_tol * (1.0 + np.abs(x1))):
            return x1, pm
        jac = np.eye(n)
        h = 1e-7
        for j in range(n):
            e = np.zeros(n)
            e[j] = h * (1.0 + abs(mid[j]))
            vp, _, _ = f(mid + 0.5 * e, t + 0.5 * dt)
            jac[:, j] -= dt * (vp - vm) / e[j]
        x1 = x1 - np.linalg.solve(jac, r)
    mid = 0.5 * (x + x1)
    vm, pm, _ = f(mid, t + 0.5 * dt)
    if np.linalg.norm(x1 - x - dt * vm) > 1e3 * cfg.newton_tol * (1.0 + np.linalg.norm(x1)):
        raise NewtonDivergence("implicit midpoint step did not converge")
    return x1, pm


# ---------------------------------------------------------------------------
# characteristic frequencies


def linear_frequencies(model: HamiltonianModel) -> list[float]:
    """Angular frequencies of the quadratic part of H about the origin (no damping)."""
    n = model.n_canonical
    if not n or model.implicit:
        return []
    hess = np.zeros((n, n))
    for i in range(n):
        gi = model.hamiltonian.diff(i)
        for j in range(n):
            c = gi.diff(j).substitute({k: const(0) for k in range(n)}).constant_term()
            hess[i, j] = float(c)
    a = _float_matrix(inverse(model.two_form)) @ hess
    ev = np.linalg.eigvals(a)
    return sorted({round(abs(x.imag), 12) for x in ev if abs(x.imag) > 1e-12})


# ---------------------------------------------------------------------------
# unreduced oracle on the kernel of the constraint matrix


@dataclass
class OracleSystem:
    space: ReducedSpace
    a: np.ndarray
    k: np.ndarray
    off: np.ndarray
    grad: list
    hess: list
    src_grad: np.ndarray
    sources: SourceCoupling
    c: np.ndarray  # affine constraint rows C z = d0 + D s(t)
    d0: np.ndarray
    dsrc: np.ndarray
    f: np.ndarray
    h: object


def build_oracle(graph: CircuitGraph, offsets: Sequence | None = None) -> OracleSystem:
    """Constrained first-order system (E - F) zdot = grad(H + S z) on ker F, no elimination."""
    space = kernel_embedding(assemble_pfaff(graph), graph)
    bundle = build_structure(space, graph)
    energy = total_energy(graph, space, offsets)
    h = energy.h
    m = space.dim
    a_exact = bundle.e_reduced - bundle.rayleigh
    left = kernel_basis(a_exact.T)
    rows, d0, dsrc = [], [], []
    nsrc = len(bundle.sources)
    for u in left.columns():
        g = directional(h, u)
        if not g.is_affine():
            raise NonlinearConstraintUnsupported("a zero-mode constraint is not affine in the state")
        rows.append([float(g.linear_coefficient(j)) for j in range(m)])
        d0.append(-float(g.constant_term()))
        dsrc.append([-float(directional(s, u).constant_term()) for s in bundle.sources.exprs])
    src_grad = np.zeros((m, nsrc))
    for k, sig in enumerate(bundle.sources.exprs):
        for j in range(m):
            src_grad[j, k] = float(sig.diff(j).constant_term())
    return OracleSystem(
        space, _float_matrix(a_exact), _float_matrix(space.k),
        np.array([float(x) for x in energy.offsets]),
        [h.diff(j).compile() for j in range(m)],
        [[h.diff(i).diff(j).compile() for j in range(m)] for i in range(m)],
        src_grad, bundle.sources,
        np.array(rows).reshape(len(rows), m), np.array(d0), np.array(dsrc).reshape(len(rows), nsrc),
        _float_matrix(bundle.rayleigh), h.compile(),
    )


def _oracle_rhs(sys_: OracleSystem, z: np.ndarray, t: float) -> np.ndarray:
    g = np.array([f(z) for f in sys_.grad])
    s = _waveform_values(sys_.sources, t)
    if s.size:
        g = g + sys_.src_grad @ s
    if not sys_.c.shape[0]:
        return np.linalg.solve(sys_.a, g)
    ds = _waveform_rates(sys_.sources, t)
    ddot = sys_.dsrc @ ds if ds.size else np.zeros(sys_.c.shape[0])
    stacked = np.vstack([sys_.a, sys_.c])
    rhs = np.concatenate([g, ddot])
    return np.linalg.lstsq(stacked, rhs, rcond=None)[0]


def _oracle_project(sys_: OracleSystem, z: np.ndarray, t: float) -> np.ndarray:
    if not sys_.c.shape[0]:
        return z
    s = _waveform_values(sys_.sources, t)
    d = sys_.d0 + (sys_.dsrc @ s if s.size else 0.0)
    r = sys_.c @ z - d
    return z - np.linalg.pinv(sys_.c) @ r


def full_system_oracle(graph: CircuitGraph, cfg: SimConfig, branch0: Sequence[float],
                       offsets: Sequence | None = None) -> Trajectory:
    """Integrate the unreduced constrained system from branch initial values.

    The state lives on ker F (z with branch variables K z + offsets); the
    zero-mode constraints are affine and re-imposed by projection after
    every RK4 step. Returns a branch-variable trajectory.
    """
    sys_ = build_oracle(graph, offsets)
    z = np.linalg.lstsq(sys_.k, np.asarray(branch0, float) - sys_.off, rcond=None)[0]
    z = _oracle_project(sys_, z, 0.0)
    steps, dt = cfg.steps, cfg.dt
    nb2 = sys_.k.shape[0]
    times = np.zeros(steps + 1)
    states = np.zeros((steps + 1, nb2))
    energy = np.zeros(steps + 1)
    diss = np.zeros(steps + 1)
    power = np.zeros(steps + 1)
    resid = np.zeros(steps + 1)
    d = 0.0

    def f(zz, tt):
        v = _oracle_rhs(sys_, zz, tt)
        return v, float(v @ sys_.f @ v)

    def record(i, tt, zz, dd):
        v, p = f(zz, tt)
        times[i] = tt
        states[i] = sys_.k @ zz + sys_.off
        energy[i] = sys_.h(zz)
        diss[i] = dd
        power[i] = p
        if sys_.c.shape[0]:
            s = _waveform_values(sys_.sources, tt)
            resid[i] = float(np.max(np.abs(sys_.c @ zz - sys_.d0 - (sys_.dsrc @ s if s.size else 0.0))))

    t = 0.0
    record(0, t, z, d)
    for i in range(1, steps + 1):
        k1, p1 = f(z, t)
        k2, p2 = f(z + 0.5 * dt * k1, t + 0.5 * dt)
        k3, p3 = f(z + 0.5 * dt * k2, t + 0.5 * dt)
        k4, p4 = f(z + dt * k3, t + dt)
        z = z + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        d = d + dt / 6.0 * (p1 + 2 * p2 + 2 * p3 + p4)
        t = i * dt
        z = _oracle_project(sys_, z, t)
        record(i, t, z, d)
    ids = [b.id for b in graph.branches]
    names = tuple([f"q_{b}" for b in ids] + [f"phi_{b}" for b in ids])
    return Trajectory(names, times, states, energy, diss, power, resid)


def branch_trajectory(model: HamiltonianModel, traj: Trajectory) -> np.ndarray:
    """Reduced trajectory mapped to the 2B branch variables."""
    return np.array([reconstruct(model, traj.states[i], traj.times[i]) for i in range(len(traj.times))])


def gauge_projector(model: HamiltonianModel, graph: CircuitGraph) -> np.ndarray:
    """Orthogonal projector removing branch directions moved by gauge modes."""
    space = kernel_embedding(assemble_pfaff(graph), graph)
    bundle = build_structure(space, graph)
    energy = total_energy(graph, space)
    ker = kernel_basis(bundle.e_reduced)
    vecs = [list(c) for c in ker.columns()]
    nb2 = space.k.rows
    if not vecs:
        return np.eye(nb2)
    g = gauge_subspace(vecs, energy.h, bundle.sources)
    dirs = []
    for c in range(g.cols):
        z = [sum(g[i, c] * vecs[i][a] for i in range(len(vecs))) for a in range(space.dim)]
        dirs.append([float(sum(space.k[r, a] * z[a] for a in range(space.dim))) for r in range(nb2)])
    if not dirs:
        return np.eye(nb2)
    q, _ = np.linalg.qr(np.array(dirs).T)
    return np.eye(nb2) - q @ q.T


# ---------------------------------------------------------------------------
# slaved pairs


@dataclass(frozen=True)
class SlavedPair:
    direction: tuple[Fraction, ...]  # u: dH/du = 0 apart from source terms
    conjugate: tuple[Fraction, ...]  # gradient of f with {f, g} = dg/du
    rates: tuple[Fraction, ...]  # df/dt = sum_k rates[k] s_k(t)
    active: tuple[bool, ...] = ()  # waveform k not identically zero

    @property
    def driven(self) -> bool:
        """False when the pair is an ignorable coordinate with a conserved conjugate."""
        act = self.active or (True,) * len(self.rates)
        return any(r and a for r, a in zip(self.rates, act))


@dataclass
class SlavedReport:
    pairs: list[SlavedPair]
    deviation: float | None = None

    def __len__(self) -> int:
        return len(self.pairs)


def slaved_pair_report(model: HamiltonianModel, trajectory: Trajectory | None = None) -> SlavedReport:
    """Coordinates whose motion is fixed by the waveforms alone.

    A direction u of the canonical coordinates along which the source-free H
    is constant generates a function f = (E^T u).xi with df/dt = dH_T/du,
    a combination of the waveforms only. With an active source f is slaved;
    with inactive sources it is an ignorable coordinate and f is conserved.
    Sourceless circuits give an empty report.
    """
    if not len(model.sources):
        return SlavedReport([])
    n = model.n_canonical
    units = [[Fraction(int(i == j)) for j in range(n + len(model.implicit))] for i in range(n)]
    g = gauge_subspace(units, model.hamiltonian)
    pairs = []
    live = set(model.sources.active())
    active = tuple(k in live for k in range(len(model.sources)))
    e_t = model.two_form.T
    for c in range(g.cols):
        u = [g[i, c] for i in range(n)]
        grad_f = [sum(e_t[a, b] * u[b] for b in range(n)) for a in range(n)]
        rates = []
        for sig in model.sources.exprs:
            d = directional(sig, u + [Fraction(0)] * len(model.implicit))
            rates.append(d.constant_term().as_fraction())
        pairs.append(SlavedPair(tuple(u), tuple(grad_f), tuple(rates), active))
    rep = SlavedReport(pairs)
    if trajectory is not None and pairs:
        dev = 0.0
        t = trajectory.times
        for sp in pairs:
            fvals = trajectory.states[:, :n] @ np.array([float(x) for x in sp.conjugate])
            rate = np.array([sum(float(r) * v for r, v in zip(sp.rates, model.sources.values(tt))) for tt in t])
            integral = np.concatenate([[0.0], np.cumsum(0.5 * (rate[1:] + rate[:-1]) * np.diff(t))])
            scale = max(1.0, float(np.max(np.abs(fvals))))
            dev = max(dev, float(np.max(np.abs(fvals - fvals[0] - integral))) / scale)
        rep.deviation = dev
    return rep


# ---------------------------------------------------------------------------
# reduced versus unreduced comparison


@dataclass
class OracleComparison:
    deviation: float  # sup-norm of the gauge-projected branch difference, relative
    reduced: Trajectory
    oracle: Trajectory


def characteristic_period(model: HamiltonianModel) -> float:
    """Period of the slowest linear mode, or 2 pi when there is none."""
    w = [x for x in linear_frequencies(model) if x > 0]
    return 2 * math.pi / min(w) if w else 2 * math.pi


def compare_with_oracle(graph: CircuitGraph, model: HamiltonianModel, cfg: SimConfig,
                        x0: Sequence[float] | None = None) -> OracleComparison:
    """Integrate both systems from the same branch state and compare branch trajectories.

    Directions moved by gauge modes are projected out before comparing since
    the reduced model does not carry them.
    """
    red = integrate(model, cfg, x0)
    branches_red = branch_trajectory(model, red)
    orc = full_system_oracle(graph, cfg, branches_red[0])
    proj = gauge_projector(model, graph)
    diff = (branches_red - orc.states) @ proj.T
    scale = max(float(np.max(np.abs(branches_red @ proj.T))), 1e-300)
    return OracleComparison(float(np.max(np.abs(diff))) / scale, red, orc)
