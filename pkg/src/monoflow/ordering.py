"""Order comparison of trajectory pairs, first-crossing detection and classification."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .dissipation import min_slope
from .dynamics import Trajectory
from .netgraph import MetricGraph, Scenario
from .series import merged_breakpoints, negative_intervals

DEFAULT_TOL = 1e-7
DEFAULT_WINDOW = 3


class PreconditionError(ValueError):
    pass


class DiscretizationMismatch(ValueError):
    pass


@dataclass
class OrderingReport:
    holds: bool
    worst_margin: float
    worst_location: dict
    node_margins: dict[str, float]
    tol: float

    def to_dict(self) -> dict:
        return {"holds": self.holds, "worst_margin": self.worst_margin, "worst_location": self.worst_location,
                "node_margins": self.node_margins, "tol": self.tol}


@dataclass(frozen=True)
class Location:
    edge: str
    k: int
    x: float
    node: str | None  # vertex this grid point is attached to (within one cell of an end)

    def to_dict(self) -> dict:
        return {"edge": self.edge, "k": self.k, "x": self.x, "node": self.node}


@dataclass(frozen=True)
class Classification:
    kind: str  # "vertex" or "interior"
    nodes: tuple[str, ...] = ()
    edge: str | None = None
    x: float | None = None

    @property
    def node(self) -> str | None:
        return self.nodes[0] if self.nodes else None

    def to_dict(self) -> dict:
        return {"class": self.kind, "nodes": list(self.nodes), "edge": self.edge, "x": self.x}


@dataclass
class CrossingEvent:
    t_c: float
    step: int
    locations: list[Location]
    classification: Classification
    persistent: bool
    margin: float

    def to_dict(self) -> dict:
        return {"t_c": self.t_c, "step": self.step, "class": self.classification.kind,
                "nodes": list(self.classification.nodes), "locations": [l.to_dict() for l in self.locations],
                "persistent": self.persistent, "margin": self.margin}


def _check_pair(a: Trajectory, b: Trajectory):
    if not a.same_discretization(b):
        raise DiscretizationMismatch("trajectories do not share graph, grids and time grid")


def _edge_order(graph: MetricGraph) -> list[str]:
    return sorted(graph.edge_ids)


def _attached_node(graph: MetricGraph, edge_id: str, k: int) -> str | None:
    e = graph.edge(edge_id)
    if k <= 1 and k <= e.cells - k:
        return e.source
    if k >= e.cells - 1:
        return e.target
    return None


def compare(a: Trajectory, b: Trajectory, tol: float = DEFAULT_TOL) -> OrderingReport:
    """Scan ``a - b`` over every stored time and grid point.

    Ties go to the earliest time, then the lowest edge id, then the lowest x.
    """
    _check_pair(a, b)
    best = None
    for rank, eid in enumerate(_edge_order(a.graph)):
        m = a.rho[eid] - b.rho[eid]
        flat = int(np.argmin(m))
        n, k = divmod(flat, m.shape[1])
        key = (float(m[n, k]), n, rank, k)
        if best is None or key < best[0]:
            best = (key, eid)
    (value, n, _, k), eid = best
    e = a.graph.edge(eid)
    node = e.source if k == 0 else e.target if k == e.cells else None
    loc = {"t": float(a.times[n]), "edge": eid, "x": float(k * e.dx), "node": node}
    node_margins = {nid: float(np.min(a.node_rho[nid] - b.node_rho[nid])) for nid in a.graph.node_ids}
    return OrderingReport(value >= -tol, value, loc, node_margins, tol)


def _margins(a: Trajectory, b: Trajectory) -> dict[str, np.ndarray]:
    return {eid: a.rho[eid] - b.rho[eid] for eid in _edge_order(a.graph)}


def _min_at(margins: dict[str, np.ndarray], n0: int, w: float) -> float:
    return min(float(np.min((1 - w) * m[n0] + w * m[n0 + 1])) for m in margins.values())


def first_crossing(a: Trajectory, b: Trajectory, tol: float = DEFAULT_TOL, window: int = DEFAULT_WINDOW,
                   location_tol: float | None = None) -> CrossingEvent | None:
    """Earliest persistent reversal of ``a >= b``, or ``None``.

    A step counts as violating when the minimum margin is below ``-tol``; the
    violation must last ``window`` consecutive stored steps. The crossing time is
    refined by bisection on the linearly interpolated margins between the last
    ordered step and the first violating one. Every grid point whose margin at
    ``t_c`` is within ``location_tol`` (default ``tol``) of the minimum is reported.
    """
    _check_pair(a, b)
    if window < 1:
        raise ValueError("window must be >= 1")
    margins = _margins(a, b)
    per_step = np.min(np.stack([m.min(axis=1) for m in margins.values()]), axis=0)
    if per_step[0] < -tol:
        raise PreconditionError(f"ordering already violated at t=0 (margin {per_step[0]:.3g})")
    bad = per_step < -tol
    n_steps = len(per_step)
    onset = None
    for n in range(1, n_steps):
        if bad[n] and n + window <= n_steps and bool(np.all(bad[n:n + window])):
            onset = n
            break
    if onset is None:
        return None
    lo, hi = 0.0, 1.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if _min_at(margins, onset - 1, mid) < -tol:
            hi = mid
        else:
            lo = mid
    w = hi
    t_c = float((1 - w) * a.times[onset - 1] + w * a.times[onset])
    at_tc = {eid: (1 - w) * m[onset - 1] + w * m[onset] for eid, m in margins.items()}
    gmin = min(float(v.min()) for v in at_tc.values())
    ltol = tol if location_tol is None else location_tol
    locs = []
    for eid, v in at_tc.items():
        e = a.graph.edge(eid)
        for k in np.flatnonzero(v <= gmin + ltol):
            locs.append(Location(eid, int(k), float(k * e.dx), _attached_node(a.graph, eid, int(k))))
    event = CrossingEvent(t_c, onset, locs, Classification("interior"), True, gmin)
    event.classification = classify_crossing(event, a.graph)
    return event


def classify_crossing(event: CrossingEvent, graph: MetricGraph) -> Classification:
    """``vertex`` when every minimizing location sits within one cell of an edge end."""
    for loc in event.locations:
        if loc.node is None:
            return Classification("interior", (), loc.edge, loc.x)
    nodes = tuple(sorted({loc.node for loc in event.locations}))
    return Classification("vertex", nodes)


@dataclass
class SimultaneityReport:
    holds: bool
    node: str
    global_min: float
    endpoint_margins: dict[str, float]
    bound: float

    def to_dict(self) -> dict:
        return {"holds": self.holds, "node": self.node, "global_min": self.global_min,
                "endpoint_margins": self.endpoint_margins, "bound": self.bound}


def vertex_simultaneity(event: CrossingEvent, a: Trajectory, b: Trajectory, tol: float = DEFAULT_TOL,
                        factor: float = 10.0) -> list[SimultaneityReport]:
    """For each vertex of a vertex crossing, margins at every incident edge end vs the global minimum.

    A vertex crossing shows up at all ends attached to the vertex at once, so
    each end margin at ``t_c`` must lie within ``factor * tol`` of the minimum.
    """
    if event.classification.kind != "vertex":
        return []
    margins = _margins(a, b)
    n = event.step
    t0, t1 = a.times[n - 1], a.times[n]
    w = (event.t_c - t0) / (t1 - t0)
    at_tc = {eid: (1 - w) * m[n - 1] + w * m[n] for eid, m in margins.items()}
    gmin = min(float(v.min()) for v in at_tc.values())
    out = []
    for j in event.classification.nodes:
        ends = {}
        for e in a.graph.edges:
            if e.source == j:
                ends[f"{e.id}@0"] = float(at_tc[e.id][0])
            if e.target == j:
                ends[f"{e.id}@L"] = float(at_tc[e.id][-1])
        ok = all(v - gmin <= factor * tol for v in ends.values())
        out.append(SimultaneityReport(ok, j, gmin, ends, factor * tol))
    return out


# -- hypotheses ---------------------------------------------------------------

@dataclass
class ClauseResult:
    name: str
    passed: bool
    worst: float
    location: str | None = None
    intervals: list[tuple[float, float]] = field(default_factory=list)
    note: str | None = None

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "worst": self.worst, "location": self.location,
                "intervals": [list(iv) for iv in self.intervals], "note": self.note}


@dataclass
class HypothesisReport:
    clauses: list[ClauseResult]

    @property
    def holds(self) -> bool:
        return all(c.passed for c in self.clauses)

    def clause(self, name: str) -> ClauseResult:
        for c in self.clauses:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {"holds": self.holds, "clauses": [c.to_dict() for c in self.clauses]}


def _profile_margin(fa, fb, length: float, samples: int) -> tuple[float, float]:
    xs = np.linspace(0.0, length, samples)
    for fn in (fa, fb):
        if hasattr(fn, "s"):
            xs = np.union1d(xs, fn.s[(fn.s >= 0) & (fn.s <= length)])
    d = np.asarray(fa(xs), dtype=float) - np.asarray(fb(xs), dtype=float)
    k = int(np.argmin(d))
    return float(d[k]), float(xs[k])


def check_theorem_hypotheses(graph: MetricGraph, a: Scenario, b: Scenario, S: Iterable[str] | None = None,
                             samples: int = 257) -> HypothesisReport:
    """Check the ordering hypotheses for ``a`` dominating ``b``.

    Clauses: initial densities ordered on every edge; injections ordered on the
    nodes in ``S`` (default: all injection nodes); prescribed densities ordered
    on the remaining nodes; ``df/dv > 0`` sampled for each edge's closure.
    Orderings are non-strict. Nodal series are compared exactly on the union of
    their breakpoints.
    """
    S = set(graph.injection_nodes() if S is None else S)
    unknown = S - set(graph.node_ids)
    if unknown:
        raise KeyError(f"unknown node(s) in S: {sorted(unknown)}")
    T = min(a.horizon, b.horizon)
    clauses = []

    worst, where = np.inf, None
    for e in graph.edges:
        m, x = _profile_margin(a.initial_rho[e.id], b.initial_rho[e.id], e.length, samples)
        if m < worst:
            worst, where = m, f"{e.id}@x={x:.6g}"
    clauses.append(ClauseResult("initial_density", worst >= 0.0, float(worst), where))

    def series_clause(name, nodes, table_a, table_b, missing_note):
        worst, where, intervals, note = np.inf, None, [], None
        for nid in sorted(nodes):
            if nid not in table_a or nid not in table_b:
                note = f"{missing_note} at node {nid!r}"
                worst, where = -np.inf, nid
                continue
            grid = merged_breakpoints([table_a[nid], table_b[nid]], 0.0, T)
            d = table_a[nid](grid) - table_b[nid](grid)
            k = int(np.argmin(d))
            if d[k] < worst:
                worst, where = float(d[k]), f"{nid}@t={grid[k]:.6g}"
            intervals += [iv for iv in negative_intervals(d, grid)]
        if worst == np.inf:
            worst = 0.0
        return ClauseResult(name, worst >= 0.0, float(worst), where, intervals, note)

    clauses.append(series_clause("injection", S, a.injection, b.injection,
                                 "no injection series (density node in S)"))
    rest = set(graph.node_ids) - S
    clauses.append(series_clause("nodal_density", rest, a.density, b.density,
                                 "nodal density is not an input (injection node outside S); check it on trajectories"))

    worst, where = np.inf, None
    for e in graph.edges:
        s = min_slope(e.dissipation)
        if s < worst:
            worst, where = s, e.id
    clauses.append(ClauseResult("dissipation_monotone", worst > 0.0, float(worst), where))

    worst, where = np.inf, None
    for table_a, table_b, name in ((a.alpha_lo, b.alpha_lo, "lo"), (a.alpha_hi, b.alpha_hi, "hi")):
        for eid in sorted(table_a):
            grid = merged_breakpoints([table_a[eid], table_b[eid]], 0.0, T)
            d = float(np.max(np.abs(table_a[eid](grid) - table_b[eid](grid))))
            if -d < worst:
                worst, where = -d, f"{eid}.{name}"
    clauses.append(ClauseResult("shared_compatibility", worst == 0.0, float(worst), where))
    return HypothesisReport(clauses)
