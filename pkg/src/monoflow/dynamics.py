"""Implicit finite-volume discretization of the coupled network IVP.

Unknown layout
--------------
For every edge, in graph order, the ``cells + 1`` grid densities
``rho_0 .. rho_N`` at ``x_k = k * dx``; then one nodal density per node.

Rows
----
* interior point ``k`` of an edge (backward Euler, face fluxes from ``f``)::

      rho_k - rho_k^n - dt * ((F_{k+1/2} - F_{k-1/2}) / dx + eps) = 0

  with ``F = f(t, (rho_k + rho_{k+1}) / 2, (rho_{k+1} - rho_k) / dx)``
  evaluated at the new time level; the edge flux is ``phi = -F``.
* edge endpoints: ``rho_0 = alpha_lo(t) rho_i`` and ``rho_N = alpha_hi(t) rho_j``.
* density node: ``rho_j = prescribed(t)``.
* injection node: nodal flux balance over the control volume made of the
  adjacent half cells. The endpoint fluxes include the half-cell storage, so the
  trapezoid-weighted edge mass changes by exactly ``dt * (sum q + eps * sum L)``
  per step. Injections enter as their average over the step.

Injection-node rows are divided by the control-volume length so every row is
measured in density units; Newton stops at
``max |residual| <= rtol * (1 + max |state|)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
import scipy.sparse as sp
from scipy.integrate import quad
from scipy.sparse.linalg import spsolve

from . import kernels
from .netgraph import MetricGraph, Scenario, initial_nodal_densities
from .series import PiecewiseLinear


class SolverError(RuntimeError):
    """A time step could not be completed."""

    def __init__(self, message: str, *, time: float | None = None, location: str | None = None,
                 residual: float | None = None):
        self.time = None if time is None else float(time)
        self.location = location
        self.residual = None if residual is None else float(residual)
        super().__init__(message)

    def to_dict(self) -> dict:
        return {"error": "solver", "kind": type(self).__name__, "message": str(self), "time": self.time,
                "location": self.location, "residual": self.residual}


class NewtonFailure(SolverError):
    pass


class NegativeDensity(SolverError):
    pass


@dataclass(frozen=True)
class NewtonSettings:
    rtol: float = 1e-10
    max_iter: int = 50
    max_halvings: int = 20


@dataclass(frozen=True)
class PerturbationSetting:
    """Source strength and initial-density offset ``eps`` of the perturbed system."""

    epsilon: float = 0.0

    def __post_init__(self):
        if not (self.epsilon >= 0.0 and math.isfinite(self.epsilon)):
            raise ValueError(f"epsilon must be a finite non-negative number, got {self.epsilon}")


@dataclass
class StepResult:
    state: np.ndarray
    iterations: int
    residual: float
    faces: dict[str, np.ndarray]


def time_grid(horizon: float, dt: float) -> np.ndarray:
    """``0, dt, 2 dt, ..., T``; the last step is shortened to land on ``T``."""
    n = int(math.ceil(horizon / dt - 1e-9))
    ts = np.arange(n + 1, dtype=float) * dt
    ts[-1] = horizon
    return ts


class DiscreteSystem:
    """Discretized network: layout, sparsity pattern and residual/Jacobian assembly."""

    def __init__(self, graph: MetricGraph, scenario: Scenario, dt: float, newton: NewtonSettings | None = None,
                 kernel=None):
        if not (dt > 0.0 and math.isfinite(dt)):
            raise ValueError(f"time step must be > 0, got {dt}")
        self.graph = graph
        self.scenario = scenario
        self.dt = float(dt)
        self.newton = newton or NewtonSettings()
        self.kernel = kernel or kernels.backend
        self.times = time_grid(scenario.horizon, self.dt)

        self.edge_offset: dict[str, int] = {}
        off = 0
        for e in graph.edges:
            self.edge_offset[e.id] = off
            off += e.cells + 1
        self.n_edge_unknowns = off
        self.node_index = {nid: off + k for k, nid in enumerate(graph.node_ids)}
        self.n_unknowns = off + len(graph.nodes)
        self.injection = [n.id for n in graph.nodes if n.kind == "injection"]
        self.prescribed = [n.id for n in graph.nodes if n.kind == "density"]
        self.control_volume = {nid: 0.0 for nid in graph.node_ids}
        for e in graph.edges:
            self.control_volume[e.source] += 0.5 * e.dx
            self.control_volume[e.target] += 0.5 * e.dx
        self._build_pattern()

    # -- layout -----------------------------------------------------------
    def edge_slice(self, edge_id: str) -> slice:
        o = self.edge_offset[edge_id]
        return slice(o, o + self.graph.edge(edge_id).cells + 1)

    def describe_row(self, i: int) -> str:
        if i >= self.n_edge_unknowns:
            nid = self.graph.node_ids[i - self.n_edge_unknowns]
            return f"node {nid}"
        for e in self.graph.edges:
            o = self.edge_offset[e.id]
            if o <= i <= o + e.cells:
                k = i - o
                return f"edge {e.id} x={k * e.dx:.6g} (k={k})"
        raise IndexError(i)

    def _build_pattern(self):
        rows, cols = [], []
        self._edge_meta = []
        pos = 0
        for e in self.graph.edges:
            o, n = self.edge_offset[e.id], e.cells
            ni, nj = self.node_index[e.source], self.node_index[e.target]
            k = np.arange(1, n)
            rows += [o + k, o + k, o + k]
            cols += [o + k - 1, o + k, o + k + 1]
            interior = pos
            pos += 3 * (n - 1)
            rows += [np.array([o, o, o + n, o + n])]
            cols += [np.array([o, ni, o + n, nj])]
            ends = pos
            pos += 4
            tail = head = None
            if self.graph.node(e.source).kind == "injection":
                rows += [np.array([ni, ni])]
                cols += [np.array([o, o + 1])]
                tail = pos
                pos += 2
            if self.graph.node(e.target).kind == "injection":
                rows += [np.array([nj, nj])]
                cols += [np.array([o + n - 1, o + n])]
                head = pos
                pos += 2
            c0, c1 = e.dissipation.coefficients()
            self._edge_meta.append((e, o, n, ni, nj, e.dissipation.code, c0, c1, interior, ends, tail, head))
        dens = np.array([self.node_index[nid] for nid in self.prescribed], dtype=int)
        rows.append(dens)
        cols.append(dens)
        self._dens_pos = pos
        pos += len(dens)
        self._rows = np.concatenate(rows).astype(np.int64)
        self._cols = np.concatenate(cols).astype(np.int64)
        self._nnz = pos
        self._cv = np.array([self.control_volume[nid] for nid in self.graph.node_ids])

    # -- assembly ----------------------------------------------------------
    def assemble(self, x: np.ndarray, x_old: np.ndarray, t_new: float, h: float, eps: float,
                 qbar: Mapping[str, float], want_jacobian: bool = True):
        """Residual vector and (optionally) Jacobian values in pattern order, plus face fluxes."""
        scn = self.scenario
        r = np.empty(self.n_unknowns)
        data = np.empty(self._nnz) if want_jacobian else None
        acc = np.zeros(len(self.graph.nodes))
        faces = {}
        base = self.n_edge_unknowns
        for (e, o, n, ni, nj, code, c0, c1, interior, ends, tail, head) in self._edge_meta:
            rho = x[o:o + n + 1]
            old = x_old[o:o + n + 1]
            F, dFl, dFr = np.empty(n), np.empty(n), np.empty(n)
            res, jl, jd, ju = np.empty(n - 1), np.empty(n - 1), np.empty(n - 1), np.empty(n - 1)
            self.kernel.assemble_edge(code, c0, c1, rho, old, e.dx, h, eps, F, dFl, dFr, res, jl, jd, ju)
            faces[e.id] = F
            r[o + 1:o + n] = res
            alo = scn.alpha_lo[e.id](t_new)
            ahi = scn.alpha_hi[e.id](t_new)
            r[o] = rho[0] - alo * x[ni]
            r[o + n] = rho[n] - ahi * x[nj]
            half = 0.5 * e.dx
            acc[ni - base] += half * (rho[0] - old[0]) - h * (F[0] + eps * half)
            acc[nj - base] += half * (rho[n] - old[n]) - h * (-F[n - 1] + eps * half)
            if want_jacobian:
                m = n - 1
                data[interior:interior + m] = jl
                data[interior + m:interior + 2 * m] = jd
                data[interior + 2 * m:interior + 3 * m] = ju
                data[ends:ends + 4] = (1.0, -alo, 1.0, -ahi)
                if tail is not None:
                    cv = self._cv[ni - base]
                    data[tail] = (half - h * dFl[0]) / cv
                    data[tail + 1] = -h * dFr[0] / cv
                if head is not None:
                    cv = self._cv[nj - base]
                    data[head] = h * dFl[n - 1] / cv
                    data[head + 1] = (half + h * dFr[n - 1]) / cv
        for nid in self.injection:
            i = self.node_index[nid]
            r[i] = (acc[i - base] - h * qbar[nid]) / self._cv[i - base]
        for nid in self.prescribed:
            i = self.node_index[nid]
            r[i] = x[i] - scn.density[nid](t_new)
        if want_jacobian:
            data[self._dens_pos:] = 1.0
        return r, data, faces

    def jacobian(self, data: np.ndarray) -> sp.csc_matrix:
        return sp.csc_matrix((data, (self._rows, self._cols)), shape=(self.n_unknowns, self.n_unknowns))

    # -- states ------------------------------------------------------------
    def initial_state(self, epsilon: float = 0.0) -> np.ndarray:
        x = np.empty(self.n_unknowns)
        nodal = initial_nodal_densities(self.graph, self.scenario, rtol=np.inf)
        for e in self.graph.edges:
            vals = np.asarray(self.scenario.initial_rho[e.id](e.grid()), dtype=float) * np.ones(e.cells + 1)
            x[self.edge_slice(e.id)] = vals + epsilon
        for nid, v in nodal.items():
            x[self.node_index[nid]] = v
        return x

    def injection_means(self, t0: float, t1: float) -> dict[str, float]:
        return {nid: self.scenario.injection[nid].mean(t0, t1) for nid in self.injection}

    def _predict(self, state: np.ndarray, t_new: float) -> np.ndarray:
        x = state.copy()
        for nid in self.prescribed:
            x[self.node_index[nid]] = self.scenario.density[nid](t_new)
        for e in self.graph.edges:
            o = self.edge_offset[e.id]
            x[o] = self.scenario.alpha_lo[e.id](t_new) * x[self.node_index[e.source]]
            x[o + e.cells] = self.scenario.alpha_hi[e.id](t_new) * x[self.node_index[e.target]]
        return x

    def edge_positive(self, x: np.ndarray) -> bool:
        return bool(np.min(x) > 0.0)


def advance(system: DiscreteSystem, state: np.ndarray, t: float, h: float | None = None, eps: float = 0.0,
            q_mean: Mapping[str, float] | None = None) -> StepResult:
    """One backward-Euler step from ``t`` to ``t + h`` solved by damped Newton."""
    h = system.dt if h is None else h
    t_new = t + h
    settings = system.newton
    if state.shape != (system.n_unknowns,):
        raise ValueError(f"state has shape {state.shape}, expected ({system.n_unknowns},)")
    qbar = system.injection_means(t, t_new)
    if q_mean:
        qbar.update(q_mean)
    tol = settings.rtol * (1.0 + float(np.max(np.abs(state))))
    x = system._predict(state, t_new)
    if not system.edge_positive(x):
        x = state.copy()
    r, data, faces = system.assemble(x, state, t_new, h, eps, qbar)
    for it in range(settings.max_iter + 1):
        rmax = float(np.max(np.abs(r)))
        if rmax <= tol:
            return StepResult(x, it, rmax, faces)
        if it == settings.max_iter:
            break
        delta = spsolve(system.jacobian(data), -r)
        if not np.all(np.isfinite(delta)):
            worst = int(np.argmax(np.abs(r)))
            raise NewtonFailure(f"singular Newton system at t={t_new:.6g}", time=t_new,
                                location=system.describe_row(worst), residual=rmax)
        r2 = float(np.dot(r, r))
        lam = 1.0
        saw_positive = False
        for _ in range(settings.max_halvings + 1):
            trial = x + lam * delta
            if system.edge_positive(trial):
                saw_positive = True
                rt, _, _ = system.assemble(trial, state, t_new, h, eps, qbar, want_jacobian=False)
                if float(np.dot(rt, rt)) < r2 or float(np.max(np.abs(rt))) <= tol:
                    break
            lam *= 0.5
        else:
            worst = int(np.argmax(np.abs(r)))
            if not saw_positive:
                raise NegativeDensity(f"every damped Newton iterate has a non-positive density at t={t_new:.6g}",
                                      time=t_new, location=system.describe_row(worst), residual=rmax)
            raise NewtonFailure(f"line search failed at t={t_new:.6g}", time=t_new,
                                location=system.describe_row(worst), residual=rmax)
        x = trial
        r, data, faces = system.assemble(x, state, t_new, h, eps, qbar)
    worst = int(np.argmax(np.abs(r)))
    raise NewtonFailure(f"Newton did not converge in {settings.max_iter} iterations at t={t_new:.6g}",
                        time=t_new, location=system.describe_row(worst), residual=float(np.max(np.abs(r))))


def discretize(graph: MetricGraph, scenario: Scenario, dt: float, newton: NewtonSettings | None = None) -> DiscreteSystem:
    return DiscreteSystem(graph, scenario, dt, newton)


def step(system: DiscreteSystem, state: np.ndarray, t: float, eps: float = 0.0) -> np.ndarray:
    """State at ``t + dt`` (the step is shortened to stop at the horizon)."""
    remaining = system.scenario.horizon - t
    h = min(system.dt, remaining) if remaining > 0 else system.dt
    return advance(system, state, t, h, eps).state


# -- trajectories -------------------------------------------------------------

@dataclass
class Trajectory:
    """Stored solution on the time grid.

    ``rho``/``phi`` map edge ids to ``(n_times, cells + 1)`` arrays, ``node_rho``
    node ids to ``(n_times,)`` arrays. ``node_q`` is the injection actually
    applied at injection nodes (step average) and the reconstructed net
    injection at density nodes; entry 0 is the t=0 value.
    """

    graph: MetricGraph
    scenario: Scenario
    times: np.ndarray
    rho: dict[str, np.ndarray]
    phi: dict[str, np.ndarray]
    node_rho: dict[str, np.ndarray]
    node_q: dict[str, np.ndarray] = field(default_factory=dict)
    epsilon: float = 0.0
    iterations: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    residuals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    compat_residuals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    balance_residuals: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def x(self, edge_id: str) -> np.ndarray:
        return self.graph.edge(edge_id).grid()

    def mass(self) -> np.ndarray:
        """Trapezoid-weighted total edge mass at each stored time."""
        total = np.zeros(len(self.times))
        for e in self.graph.edges:
            w = np.full(e.cells + 1, e.dx)
            w[0] = w[-1] = 0.5 * e.dx
            total += self.rho[e.id] @ w
        return total

    def min_density(self) -> float:
        return float(min(np.min(a) for a in self.rho.values()))

    def same_discretization(self, other: Trajectory) -> bool:
        if len(self.times) != len(other.times) or not np.allclose(self.times, other.times, rtol=0, atol=1e-12):
            return False
        if self.graph.edge_ids != other.graph.edge_ids or self.graph.node_ids != other.graph.node_ids:
            return False
        return all(self.rho[k].shape == other.rho[k].shape for k in self.rho)


def _boundary_fluxes(e, F, rho, old, h, eps):
    half = 0.5 * e.dx
    phi = np.empty(e.cells + 1)
    phi[1:-1] = -0.5 * (F[:-1] + F[1:])
    phi[0] = -F[0] + half * (rho[0] - old[0]) / h - eps * half
    phi[-1] = -F[-1] - half * (rho[-1] - old[-1]) / h + eps * half
    return phi


class _Recorder:
    def __init__(self, system: DiscreteSystem, eps: float):
        self.system = system
        self.eps = eps
        n = len(system.times)
        g = system.graph
        self.states = np.empty((n, system.n_unknowns))
        self.phi = {e.id: np.empty((n, e.cells + 1)) for e in g.edges}
        self.node_q = {nid: np.empty(n) for nid in g.node_ids}
        self.iterations = np.zeros(n - 1, dtype=int)
        self.residuals = np.zeros(n - 1)
        self.compat = np.zeros(n)
        self.balance = np.zeros(n)
        self.count = 0

    def initial(self, x0):
        sys_, scn = self.system, self.system.scenario
        self.states[0] = x0
        for e in sys_.graph.edges:
            self.phi[e.id][0] = np.asarray(scn.initial_phi[e.id](e.grid()), dtype=float) * np.ones(e.cells + 1)
        for nid in sys_.graph.node_ids:
            self.node_q[nid][0] = scn.injection[nid](0.0) if nid in scn.injection else np.nan
        self.compat[0] = self._compat(x0, 0.0)
        self.count = 1

    def _compat(self, x, t):
        sys_, scn = self.system, self.system.scenario
        worst = 0.0
        for e in sys_.graph.edges:
            s = sys_.edge_slice(e.id)
            rho = x[s]
            worst = max(worst,
                        abs(rho[0] - scn.alpha_lo[e.id](t) * x[sys_.node_index[e.source]]),
                        abs(rho[-1] - scn.alpha_hi[e.id](t) * x[sys_.node_index[e.target]]))
        return worst

    def record(self, n, res: StepResult, old: np.ndarray, h: float, qbar: Mapping[str, float]):
        sys_ = self.system
        x = res.state
        self.states[n] = x
        self.iterations[n - 1] = res.iterations
        self.residuals[n - 1] = res.residual
        net = {nid: 0.0 for nid in sys_.graph.node_ids}
        for e in sys_.graph.edges:
            s = sys_.edge_slice(e.id)
            phi = _boundary_fluxes(e, res.faces[e.id], x[s], old[s], h, self.eps)
            self.phi[e.id][n] = phi
            net[e.source] += phi[0]
            net[e.target] -= phi[-1]
        worst = 0.0
        for nid in sys_.graph.node_ids:
            if nid in qbar:
                self.node_q[nid][n] = qbar[nid]
                worst = max(worst, abs(qbar[nid] - net[nid]))
            else:
                self.node_q[nid][n] = net[nid]
        self.balance[n] = worst
        self.compat[n] = self._compat(x, sys_.times[n])
        self.count = n + 1

    def trajectory(self) -> Trajectory:
        sys_ = self.system
        n = self.count
        rho = {e.id: self.states[:n, sys_.edge_slice(e.id)].copy() for e in sys_.graph.edges}
        node_rho = {nid: self.states[:n, sys_.node_index[nid]].copy() for nid in sys_.graph.node_ids}
        return Trajectory(
            graph=sys_.graph, scenario=sys_.scenario, times=sys_.times[:n].copy(), rho=rho,
            phi={k: v[:n].copy() for k, v in self.phi.items()}, node_rho=node_rho,
            node_q={k: v[:n].copy() for k, v in self.node_q.items()}, epsilon=self.eps,
            iterations=self.iterations[:n - 1].copy(), residuals=self.residuals[:n - 1].copy(),
            compat_residuals=self.compat[:n].copy(), balance_residuals=self.balance[:n].copy(),
        )


def solve_ivp(system: DiscreteSystem, perturbation: PerturbationSetting | None = None) -> Trajectory:
    """Integrate over the full horizon; ``eps > 0`` solves the perturbed system."""
    eps = (perturbation or PerturbationSetting()).epsilon
    rec = _Recorder(system, eps)
    x = system.initial_state(eps)
    rec.initial(x)
    ts = system.times
    for n in range(1, len(ts)):
        h = ts[n] - ts[n - 1]
        qbar = system.injection_means(ts[n - 1], ts[n])
        res = advance(system, x, ts[n - 1], h, eps, qbar)
        rec.record(n, res, x, h, qbar)
        x = res.state
    return rec.trajectory()


def simulate(graph: MetricGraph, scenario: Scenario, dt: float | None = None, epsilon: float = 0.0,
             newton: NewtonSettings | None = None) -> Trajectory:
    """Discretize and solve in one call; ``dt`` defaults to the scenario's."""
    dt = dt if dt is not None else scenario.dt
    if dt is None:
        raise ValueError("no time step given and the scenario does not define one")
    return solve_ivp(discretize(graph, scenario, dt, newton), PerturbationSetting(epsilon))


# -- audits -------------------------------------------------------------------

def _quad_pl(series: PiecewiseLinear, a: float, b: float) -> float:
    pts = [float(s) for s in series.s if a < s < b]
    val, _ = quad(series, a, b, points=pts or None, limit=max(50, 4 * len(pts) + 10), epsabs=1e-13, epsrel=1e-12)
    return float(val)


def mass_audit(traj: Trajectory, injections: Mapping[str, PiecewiseLinear] | None = None) -> dict:
    """Compare the change in edge mass with the injected mass and the source term.

    Injection-node inflow is integrated independently with adaptive quadrature
    over ``injections`` (the scenario's series by default); density-node inflow
    is the reconstructed nodal net injection summed over steps.
    """
    injections = traj.scenario.injection if injections is None else injections
    m = traj.mass()
    T, t0 = float(traj.times[-1]), float(traj.times[0])
    h = np.diff(traj.times)
    injected = 0.0
    for n in traj.graph.nodes:
        if n.kind == "injection":
            injected += _quad_pl(injections[n.id], t0, T)
        else:
            injected += float(np.dot(h, traj.node_q[n.id][1:]))
    source = traj.epsilon * (T - t0) * traj.graph.total_length()
    delta = float(m[-1] - m[0])
    err = abs(delta - injected - source)
    scale = max(abs(m[0]), abs(m[-1]), abs(injected) + abs(source))
    return {"mass_initial": float(m[0]), "mass_final": float(m[-1]), "delta_mass": delta, "injected": injected,
            "source": source, "abs_error": err, "rel_error": err / scale if scale > 0 else 0.0}


def newton_summary(traj: Trajectory) -> dict:
    its = traj.iterations
    return {
        "steps": int(len(its)),
        "iterations_total": int(np.sum(its)),
        "iterations_max": int(np.max(its)) if len(its) else 0,
        "residual_max": float(np.max(traj.residuals)) if len(its) else 0.0,
        "compatibility_residual_max": float(np.max(traj.compat_residuals[1:])) if len(its) else 0.0,
        "balance_residual_max": float(np.max(traj.balance_residuals[1:])) if len(its) else 0.0,
        "min_density": traj.min_density(),
    }


# -- convergence ---------------------------------------------------------------

@dataclass
class ConvergenceReport:
    kind: str
    steps: list[float]
    differences: list[float]
    orders: list[float]
    monotone: bool
    noise_floor: bool

    @property
    def observed_order(self) -> float:
        return self.orders[-1] if self.orders else float("nan")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "steps": self.steps, "differences": self.differences, "orders": self.orders,
                "observed_order": self.observed_order, "monotone": self.monotone, "noise_floor": self.noise_floor}


def convergence_study(graph: MetricGraph, scenario: Scenario, levels: int = 4, kind: str = "space",
                      dt: float | None = None, refine: int = 2, newton: NewtonSettings | None = None) -> ConvergenceReport:
    """Self-convergence orders from consecutive refinements.

    ``kind="space"`` multiplies the cell counts by ``refine`` at fixed ``dt``;
    ``kind="time"`` divides ``dt`` by ``refine`` on the given grid. Differences
    between consecutive levels are measured in the max norm at the final time
    on the coarsest grid points, and ``order_k = log(d_k / d_{k+1}) / log(refine)``.
    """
    if levels < 3:
        raise ValueError("a convergence study needs at least 3 levels")
    if kind not in ("space", "time"):
        raise ValueError(f"kind must be 'space' or 'time', got {kind!r}")
    dt = dt if dt is not None else scenario.dt
    if dt is None:
        raise ValueError("no time step given")
    finals, steps = [], []
    for lvl in range(levels):
        if kind == "space":
            g = graph.refined(refine ** lvl)
            traj = simulate(g, scenario, dt, newton=newton)
            stride = refine ** lvl
            steps.append(min(e.dx for e in g.edges))
        else:
            h = dt / refine ** lvl
            traj = simulate(graph, scenario, h, newton=newton)
            stride = 1
            steps.append(h)
        finals.append({eid: arr[-1, ::stride] for eid, arr in traj.rho.items()})
    diffs = []
    for a, b in zip(finals[:-1], finals[1:]):
        diffs.append(float(max(np.max(np.abs(a[k] - b[k])) for k in a)))
    scale = max(float(np.max(np.abs(v))) for v in finals[-1].values())
    noise = all(d <= 1e-11 * max(scale, 1.0) for d in diffs)
    orders = []
    for d0, d1 in zip(diffs[:-1], diffs[1:]):
        orders.append(math.log(d0 / d1) / math.log(refine) if d0 > 0 and d1 > 0 else float("nan"))
    monotone = all(d1 < d0 for d0, d1 in zip(diffs[:-1], diffs[1:]))
    return ConvergenceReport(kind, steps, diffs, orders, monotone, noise)
