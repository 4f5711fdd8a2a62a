"""Extremal-envelope robust feasibility and a heuristic compatibility-factor search.

Three systems share initial data and controls and differ only in their
injections: nominal ``q_hat``, high ``q_hi`` and low ``q_lo``. When
``q_hi >= q_hat >= q_lo`` the density solutions are sandwiched, so density
bounds only need checking on the two envelope runs.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .dynamics import NewtonSettings, Trajectory, simulate
from .netgraph import MetricGraph, ParseError, Scenario, _load, _number, _series, scenario_from_dict
from .ordering import DEFAULT_TOL, OrderingReport, compare
from .series import PiecewiseLinear, merged_breakpoints, negative_intervals

DEFAULT_BOX = (1.0, 2.0)

_trapezoid = getattr(np, "trapezoid", None) or np.trapz


class EnvelopeError(ValueError):
    def __init__(self, message: str, node: str, intervals: list[tuple[float, float]]):
        self.node = node
        self.intervals = intervals
        super().__init__(message)

    def to_dict(self) -> dict:
        return {"error": "envelope", "message": str(self), "node": self.node,
                "intervals": [list(iv) for iv in self.intervals]}


def thread_count() -> int:
    """Worker cap from ``MONOFLOW_THREADS`` (0 or unset means automatic)."""
    try:
        n = int(os.environ.get("MONOFLOW_THREADS", "0"))
    except ValueError:
        n = 0
    if n <= 0:
        n = min(3, os.cpu_count() or 1)
    return n


# -- envelope data ----------------------------------------------------------------

@dataclass
class Envelopes:
    q_hat: dict[str, PiecewiseLinear]
    q_hi: dict[str, PiecewiseLinear]
    q_lo: dict[str, PiecewiseLinear]

    def check(self, horizon: float):
        """Raise :class:`EnvelopeError` unless ``q_hi >= q_hat >= q_lo`` on ``[0, horizon]``."""
        for nid in sorted(self.q_hat):
            for upper, lower, label in ((self.q_hi, self.q_hat, "q_hi < q_hat"), (self.q_hat, self.q_lo, "q_hat < q_lo")):
                grid = merged_breakpoints([upper[nid], lower[nid]], 0.0, horizon)
                d = upper[nid](grid) - lower[nid](grid)
                bad = negative_intervals(d, grid)
                if bad:
                    raise EnvelopeError(f"invalid envelope at node {nid!r}: {label} on {bad}", nid, bad)


@dataclass
class EnvelopeScenario:
    """Scenario file extended with envelope series, density bounds and an optional realtime record."""

    scenario: Scenario
    envelopes: Envelopes
    rho_min: float | None = None
    rho_max: float | None = None
    q_rt: dict[str, PiecewiseLinear] = field(default_factory=dict)


def parse_envelope_scenario(text: str, graph: MetricGraph) -> EnvelopeScenario:
    doc = _load(text)
    scn = scenario_from_dict(doc, graph, text=text)
    inj = graph.injection_nodes()
    tables = {}
    for key in ("q_hat", "q_hi", "q_lo", "q_rt"):
        raw = doc.get(key, {})
        if not isinstance(raw, dict):
            raise ParseError(f"{key!r} must map node ids to series", field=key)
        unknown = sorted(set(raw) - set(inj))
        if unknown:
            raise ParseError(f"{key!r} names non-injection node(s) {unknown}", field=key)
        tables[key] = {nid: _series(raw[nid], f"{key}.{nid}") for nid in raw}
    q_hat = {nid: tables["q_hat"].get(nid, scn.injection[nid]) for nid in inj}
    q_hi = {nid: tables["q_hi"].get(nid, q_hat[nid]) for nid in inj}
    q_lo = {nid: tables["q_lo"].get(nid, q_hat[nid]) for nid in inj}
    rho_min = rho_max = None
    if "bounds" in doc:
        b = doc["bounds"]
        rho_min = _number(b.get("rho_min"), "bounds.rho_min")
        rho_max = _number(b.get("rho_max"), "bounds.rho_max")
        if not rho_min < rho_max:
            raise ParseError("bounds need rho_min < rho_max", field="bounds")
    q_rt = {nid: tables["q_rt"].get(nid, q_hat[nid]) for nid in inj} if tables["q_rt"] else {}
    return EnvelopeScenario(scn, Envelopes(q_hat, q_hi, q_lo), rho_min, rho_max, q_rt)


# -- controls ---------------------------------------------------------------------

@dataclass
class ControlSchedule:
    """Piecewise-constant compatibility factors on a control grid.

    ``lo[e][k]``/``hi[e][k]`` hold on ``[grid[k], grid[k+1])``. Between
    intervals the factors ramp linearly over one solver step, and the first
    interval ramps up from the base scenario's value at t=0 so the initial
    data stay compatible.
    """

    grid: np.ndarray
    lo: dict[str, np.ndarray]
    hi: dict[str, np.ndarray]
    box: tuple[float, float] = DEFAULT_BOX

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.lo = {k: np.asarray(v, dtype=float) for k, v in self.lo.items()}
        self.hi = {k: np.asarray(v, dtype=float) for k, v in self.hi.items()}
        a, b = self.box
        if not (0.0 < a <= b):
            raise ValueError(f"box limits must satisfy 0 < lo <= hi, got {self.box}")
        if np.any(np.diff(self.grid) <= 0):
            raise ValueError("control grid must be strictly increasing")
        k = len(self.grid) - 1
        for table in (self.lo, self.hi):
            for eid, vals in table.items():
                if vals.shape != (k,):
                    raise ValueError(f"control values for {eid!r} must have {k} entries")
                if np.any(vals < a - 1e-12) or np.any(vals > b + 1e-12):
                    raise ValueError(f"control values for {eid!r} leave the box {self.box}")

    @classmethod
    def uniform(cls, graph: MetricGraph, horizon: float, intervals: int = 10, lo: float = 1.0, hi: float = 1.0,
                box: tuple[float, float] = DEFAULT_BOX) -> ControlSchedule:
        grid = np.linspace(0.0, horizon, intervals + 1)
        return cls(grid, {e: np.full(intervals, lo) for e in graph.edge_ids},
                   {e: np.full(intervals, hi) for e in graph.edge_ids}, box)

    def copy(self) -> ControlSchedule:
        return ControlSchedule(self.grid.copy(), {k: v.copy() for k, v in self.lo.items()},
                               {k: v.copy() for k, v in self.hi.items()}, self.box)

    def series(self, values: np.ndarray, start: float, ramp: float) -> PiecewiseLinear:
        pts = [[self.grid[0], start]]
        for k, v in enumerate(values):
            t0 = self.grid[k]
            t_ramp = min(t0 + ramp, self.grid[k + 1])
            if t_ramp > pts[-1][0]:
                pts.append([t_ramp, v])
            if self.grid[k + 1] > pts[-1][0]:
                pts.append([self.grid[k + 1], v])
        return PiecewiseLinear(pts)

    def apply(self, scenario: Scenario, ramp: float) -> Scenario:
        lo = {eid: self.series(v, scenario.alpha_lo[eid](0.0), ramp) for eid, v in self.lo.items()}
        hi = {eid: self.series(v, scenario.alpha_hi[eid](0.0), ramp) for eid, v in self.hi.items()}
        return scenario.with_alpha(lo, hi)

    def to_dict(self) -> dict:
        eids = sorted(set(self.lo) | set(self.hi))
        out = {}
        for eid in eids:
            out[eid] = {"grid": self.grid.tolist()}
            if eid in self.lo:
                out[eid]["lo"] = self.lo[eid].tolist()
            if eid in self.hi:
                out[eid]["hi"] = self.hi[eid].tolist()
        return out


def parse_schedule(text: str, box: tuple[float, float] = DEFAULT_BOX) -> ControlSchedule:
    doc = _load(text)
    grid = None
    lo, hi = {}, {}
    for eid, entry in doc.items():
        g = np.asarray(entry.get("grid", []), dtype=float)
        if grid is None:
            grid = g
        elif not np.array_equal(grid, g):
            raise ParseError("all edges must share one control grid", field=f"{eid}.grid")
        if "lo" in entry:
            lo[eid] = np.asarray(entry["lo"], dtype=float)
        if "hi" in entry:
            hi[eid] = np.asarray(entry["hi"], dtype=float)
    if grid is None or len(grid) < 2:
        raise ParseError("control schedule needs a grid with at least two points")
    try:
        return ControlSchedule(grid, lo, hi, box)
    except ValueError as exc:
        raise ParseError(str(exc)) from None


# -- bundle -------------------------------------------------------------------------

@dataclass
class SandwichReport:
    upper: OrderingReport
    lower: OrderingReport

    @property
    def holds(self) -> bool:
        return self.upper.holds and self.lower.holds

    def to_dict(self) -> dict:
        return {"holds": self.holds, "upper_vs_nominal": self.upper.to_dict(), "nominal_vs_lower": self.lower.to_dict()}


@dataclass
class BoundsReport:
    feasible: bool
    rho_min: float
    rho_max: float
    low_margin: float
    high_margin: float
    low_location: dict
    high_location: dict

    def to_dict(self) -> dict:
        return {"feasible": self.feasible, "rho_min": self.rho_min, "rho_max": self.rho_max,
                "low_margin": self.low_margin, "high_margin": self.high_margin,
                "low_location": self.low_location, "high_location": self.high_location}


@dataclass
class EnvelopeBundle:
    graph: MetricGraph
    scenario: Scenario
    controls: ControlSchedule | None
    nominal: Trajectory
    upper: Trajectory
    lower: Trajectory
    sandwich: SandwichReport | None = None
    bounds: dict[str, BoundsReport] = field(default_factory=dict)

    @property
    def feasible(self) -> bool | None:
        if not self.bounds:
            return None
        return all(self.bounds[k].feasible for k in ("upper", "lower") if k in self.bounds)


def simulate_envelopes(graph: MetricGraph, scenario: Scenario, envelopes: Envelopes,
                       controls: ControlSchedule | None = None, dt: float | None = None,
                       tol: float = DEFAULT_TOL, newton: NewtonSettings | None = None,
                       threads: int | None = None) -> EnvelopeBundle:
    """Solve the nominal, high and low systems with identical controls and initial data."""
    dt = dt if dt is not None else scenario.dt
    if dt is None:
        raise ValueError("no time step given")
    envelopes.check(scenario.horizon)
    base = controls.apply(scenario, dt) if controls is not None else scenario
    runs = [base.with_injection(envelopes.q_hat), base.with_injection(envelopes.q_hi), base.with_injection(envelopes.q_lo)]
    workers = thread_count() if threads is None else threads
    if workers > 1:
        with ThreadPoolExecutor(max_workers=min(workers, 3)) as pool:
            nominal, upper, lower = pool.map(lambda s: simulate(graph, s, dt, newton=newton), runs)
    else:
        nominal, upper, lower = (simulate(graph, s, dt, newton=newton) for s in runs)
    bundle = EnvelopeBundle(graph, base, controls, nominal, upper, lower)
    bundle.sandwich = check_sandwich(bundle, tol)
    return bundle


def check_sandwich(bundle: EnvelopeBundle, tol: float = DEFAULT_TOL) -> SandwichReport:
    return SandwichReport(compare(bundle.upper, bundle.nominal, tol), compare(bundle.nominal, bundle.lower, tol))


def check_density_bounds(traj: Trajectory, rho_min: float, rho_max: float) -> BoundsReport:
    """Worst undershoot of ``rho_min`` and overshoot of ``rho_max`` over all times and grid points."""
    if not rho_min < rho_max:
        raise ValueError("need rho_min < rho_max")
    lo = (np.inf, None)
    hi = (np.inf, None)
    for eid in sorted(traj.rho):
        arr = traj.rho[eid]
        e = traj.graph.edge(eid)
        n, k = divmod(int(np.argmin(arr)), arr.shape[1])
        if arr[n, k] - rho_min < lo[0]:
            lo = (float(arr[n, k] - rho_min), {"t": float(traj.times[n]), "edge": eid, "x": float(k * e.dx)})
        n, k = divmod(int(np.argmax(arr)), arr.shape[1])
        if rho_max - arr[n, k] < hi[0]:
            hi = (float(rho_max - arr[n, k]), {"t": float(traj.times[n]), "edge": eid, "x": float(k * e.dx)})
    return BoundsReport(lo[0] >= 0.0 and hi[0] >= 0.0, rho_min, rho_max, lo[0], hi[0], lo[1], hi[1])


def check_envelope_bounds(bundle: EnvelopeBundle, rho_min: float, rho_max: float,
                          include_nominal: bool = False) -> dict[str, BoundsReport]:
    """Bound check on the two envelope runs (and the nominal run when asked, as a cross-check)."""
    out = {"upper": check_density_bounds(bundle.upper, rho_min, rho_max),
           "lower": check_density_bounds(bundle.lower, rho_min, rho_max)}
    if include_nominal:
        out["nominal"] = check_density_bounds(bundle.nominal, rho_min, rho_max)
    bundle.bounds = out
    return out


def bound_violation(bundle: EnvelopeBundle, rho_min: float, rho_max: float) -> float:
    """Integrated bound violation of the envelope runs (zero iff both are feasible)."""
    total = 0.0
    for traj in (bundle.upper, bundle.lower):
        h = np.diff(traj.times)
        for e in traj.graph.edges:
            arr = traj.rho[e.id][1:]
            v = np.maximum(rho_min - arr, 0.0) + np.maximum(arr - rho_max, 0.0)
            total += float(h @ v.sum(axis=1)) * e.dx
    return total


def objective(bundle: EnvelopeBundle | Trajectory, weights: Mapping[str, float] | None = None) -> float:
    """Trapezoid integral of ``sum_e w_e (alpha_hi_e(t) - 1) max(0, phi_e(t, L))`` on the nominal run.

    The integrand is a compressor-effort proxy: unit head factors cost nothing,
    boosting costs in proportion to the delivered outflow.
    """
    traj = bundle.nominal if isinstance(bundle, EnvelopeBundle) else bundle
    weights = weights or {}
    t = traj.times
    integrand = np.zeros(len(t))
    for e in traj.graph.edges:
        w = float(weights.get(e.id, 1.0))
        if w == 0.0:
            continue
        alpha = np.asarray(traj.scenario.alpha_hi[e.id](t), dtype=float)
        integrand += w * (alpha - 1.0) * np.maximum(0.0, traj.phi[e.id][:, -1])
    return float(_trapezoid(integrand, t))


# -- search --------------------------------------------------------------------------

@dataclass
class SearchResult:
    schedule: ControlSchedule
    feasible: bool
    objective: float
    violation: float
    evaluations: int
    accepted_moves: int
    audit: dict[str, BoundsReport]
    history: list[dict] = field(default_factory=list)
    status: str = "ok"

    def to_dict(self) -> dict:
        return {"status": self.status, "feasible": self.feasible, "objective": self.objective,
                "violation": self.violation, "evaluations": self.evaluations, "accepted_moves": self.accepted_moves,
                "schedule": self.schedule.to_dict(), "audit": {k: v.to_dict() for k, v in self.audit.items()},
                "history": self.history}


def search_controls(graph: MetricGraph, scenario: Scenario, envelopes: Envelopes, template: ControlSchedule,
                    bounds: tuple[float, float], budget: int = 200, dt: float | None = None,
                    weights: Mapping[str, float] | None = None, free: str = "both", step: float = 0.05,
                    min_step: float = 0.05 / 16, newton: NewtonSettings | None = None) -> SearchResult:
    """Coordinate descent over the piecewise-constant control values.

    Moves change one interval value by ``+-step`` (clipped to the box), in a
    fixed order: edges by id, ``hi`` before ``lo``, intervals in time order,
    ``-step`` before ``+step``. While the start is infeasible a move is kept if
    it lowers the integrated bound violation; afterwards it is kept only if the
    envelope runs stay within bounds and the objective drops. A sweep without
    an accepted move halves ``step``. ``budget`` caps the number of candidate
    evaluations (the audit of the starting schedule is free).
    """
    rho_min, rho_max = bounds
    dt = dt if dt is not None else scenario.dt
    if free not in ("both", "hi", "lo"):
        raise ValueError("free must be 'both', 'hi' or 'lo'")
    a_lo, a_hi = template.box

    def evaluate(sched):
        b = simulate_envelopes(graph, scenario, envelopes, sched, dt, newton=newton)
        rep = check_envelope_bounds(b, rho_min, rho_max)
        viol = bound_violation(b, rho_min, rho_max)
        feas = all(r.feasible for r in rep.values())
        return feas, objective(b, weights), viol, rep

    current = template.copy()
    feas, obj, viol, audit = evaluate(current)
    history = [{"evaluation": 0, "feasible": feas, "objective": obj, "violation": viol}]
    evals = accepted = 0
    coords = []
    for eid in sorted(set(current.lo) | set(current.hi)):
        for which in ("hi", "lo"):
            if free in ("both", which) and eid in getattr(current, which):
                coords += [(eid, which, k) for k in range(len(current.grid) - 1)]

    while evals < budget and step >= min_step and coords:
        improved = False
        for eid, which, k in coords:
            for sign in (-1.0, 1.0):
                if evals >= budget:
                    break
                table = getattr(current, which)
                new_val = float(np.round(np.clip(table[eid][k] + sign * step, a_lo, a_hi), 12))
                if abs(new_val - table[eid][k]) < 1e-15:
                    continue
                cand = current.copy()
                getattr(cand, which)[eid][k] = new_val
                evals += 1
                c_feas, c_obj, c_viol, c_audit = evaluate(cand)
                if feas:
                    ok = c_feas and c_obj < obj - 1e-12
                else:
                    ok = c_feas or c_viol < viol - 1e-15
                if ok:
                    current, feas, obj, viol, audit = cand, c_feas, c_obj, c_viol, c_audit
                    accepted += 1
                    improved = True
                    history.append({"evaluation": evals, "feasible": feas, "objective": obj, "violation": viol,
                                    "move": [eid, which, k, new_val]})
                    break
            if evals >= budget:
                break
        if not improved:
            step *= 0.5
    status = "ok" if feas else "infeasible"
    return SearchResult(current, feas, obj, viol, evals, accepted, audit, history, status)


def schedule_json(schedule: ControlSchedule) -> str:
    return json.dumps(schedule.to_dict(), indent=2, sort_keys=True)


def widened(envelopes: Envelopes, amount: float) -> Envelopes:
    """Envelopes pushed outward by a constant ``amount >= 0``."""
    if amount < 0 or not math.isfinite(amount):
        raise ValueError("amount must be finite and >= 0")
    return Envelopes(dict(envelopes.q_hat), {k: v.shifted(amount) for k, v in envelopes.q_hi.items()},
                     {k: v.shifted(-amount) for k, v in envelopes.q_lo.items()})
