"""Metric graphs, scenarios, and their JSON file formats.

Network file::

    {"nodes": [{"id": "a", "kind": "density"}, ...],
     "edges": [{"from": "a", "to": "b", "length": 10.0, "cells": 50,
                "dissipation": {"kind": "heat", "params": {"D": 1.0}}}, ...]}

Scenario file::

    {"horizon": 1.0, "dt": 0.01,
     "initial": {"a-b": {"rho": [[x, v], ...], "phi": [[x, v], ...]}},
     "boundary": {"a": {"rho": [[t, v], ...]}, "b": {"q": [[t, v], ...]}},
     "alpha": {"a-b": {"lo": [[t, v], ...], "hi": [[t, v], ...]}}}

Edge ids are ``"from-to"``. A missing ``alpha`` entry means unit factors and a
missing ``phi`` profile means zero initial flux.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping

import numpy as np

from .dissipation import DissipationError, DissipationSpec
from .series import PiecewiseLinear

NODE_KINDS = ("injection", "density")
VALIDATION_RTOL = 1e-8

Profile = Callable[[np.ndarray], np.ndarray]


class ParseError(ValueError):
    """Malformed or invalid input document.

    ``line`` is the 1-based line in the source text when it can be located and
    ``field`` a JSON-path-like pointer to the offending value.
    """

    def __init__(self, message: str, *, line: int | None = None, field: str | None = None):
        self.message = message
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(field)
        super().__init__(f"{message} ({', '.join(where)})" if where else message)

    def to_dict(self) -> dict:
        return {"error": "parse", "message": self.message, "line": self.line, "field": self.field}


class ScenarioError(ParseError):
    """Scenario data inconsistent with the graph or with the t=0 coupling conditions."""

    def __init__(self, message: str, *, residual: float | None = None, location: str | None = None, **kw):
        self.residual = residual
        self.location = location
        super().__init__(message, **kw)

    def to_dict(self) -> dict:
        d = super().to_dict()
        d.update(error="scenario", residual=self.residual, location=self.location)
        return d


@dataclass(frozen=True)
class NodeSpec:
    id: str
    kind: str

    def __post_init__(self):
        if self.kind not in NODE_KINDS:
            raise ParseError(f"node {self.id!r}: kind must be 'injection' or 'density', got {self.kind!r}")


@dataclass(frozen=True)
class EdgeSpec:
    source: str
    target: str
    length: float
    cells: int
    dissipation: DissipationSpec

    @property
    def id(self) -> str:
        return f"{self.source}-{self.target}"

    @property
    def dx(self) -> float:
        return self.length / self.cells

    def grid(self) -> np.ndarray:
        return np.linspace(0.0, self.length, self.cells + 1)


@dataclass(frozen=True)
class MetricGraph:
    nodes: tuple[NodeSpec, ...]
    edges: tuple[EdgeSpec, ...]
    _incoming: Mapping[str, tuple[str, ...]] = field(init=False, repr=False, compare=False)
    _outgoing: Mapping[str, tuple[str, ...]] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "edges", tuple(self.edges))
        ids = [n.id for n in self.nodes]
        if len(set(ids)) != len(ids):
            dup = sorted({i for i in ids if ids.count(i) > 1})
            raise ParseError(f"duplicate node id(s) {dup}")
        if not self.edges:
            raise ParseError("network must contain at least one edge")
        known = set(ids)
        incoming: dict[str, list[str]] = {i: [] for i in ids}
        outgoing: dict[str, list[str]] = {i: [] for i in ids}
        seen = set()
        for k, e in enumerate(self.edges):
            for end in (e.source, e.target):
                if end not in known:
                    raise ParseError(f"edge {e.id!r} references unknown node {end!r}", field=f"edges[{k}]")
            if not (np.isfinite(e.length) and e.length > 0.0):
                raise ParseError(f"edge {e.id!r}: length must be > 0, got {e.length}", field=f"edges[{k}].length")
            if int(e.cells) != e.cells or e.cells < 2:
                raise ParseError(f"edge {e.id!r}: cells must be an integer >= 2, got {e.cells}", field=f"edges[{k}].cells")
            if e.id in seen:
                raise ParseError(f"duplicate edge {e.id!r}", field=f"edges[{k}]")
            seen.add(e.id)
            incoming[e.target].append(e.source)
            outgoing[e.source].append(e.target)
        isolated = [i for i in ids if not incoming[i] and not outgoing[i]]
        if isolated:
            raise ParseError(f"node(s) {isolated} have no incident edge")
        if not any(n.kind == "density" for n in self.nodes):
            raise ParseError("network needs at least one density node")
        object.__setattr__(self, "_incoming", {k: tuple(v) for k, v in incoming.items()})
        object.__setattr__(self, "_outgoing", {k: tuple(v) for k, v in outgoing.items()})

    @property
    def node_ids(self) -> list[str]:
        return [n.id for n in self.nodes]

    @property
    def edge_ids(self) -> list[str]:
        return [e.id for e in self.edges]

    def node(self, node_id: str) -> NodeSpec:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(f"unknown node {node_id!r}")

    def edge(self, edge_id: str) -> EdgeSpec:
        for e in self.edges:
            if e.id == edge_id:
                return e
        raise KeyError(f"unknown edge {edge_id!r}")

    def injection_nodes(self) -> list[str]:
        return [n.id for n in self.nodes if n.kind == "injection"]

    def density_nodes(self) -> list[str]:
        return [n.id for n in self.nodes if n.kind == "density"]

    def incident_edges(self, node_id: str) -> tuple[list[EdgeSpec], list[EdgeSpec]]:
        """Edges ending at ``node_id`` and edges starting at it."""
        return ([e for e in self.edges if e.target == node_id], [e for e in self.edges if e.source == node_id])

    def degree(self, node_id: str) -> int:
        return sum((e.source == node_id) + (e.target == node_id) for e in self.edges)

    def total_length(self) -> float:
        return float(sum(e.length for e in self.edges))

    def refined(self, factor: int) -> MetricGraph:
        """Same graph with every edge's cell count multiplied by ``factor``."""
        return MetricGraph(self.nodes, tuple(replace(e, cells=e.cells * factor) for e in self.edges))

    def to_dict(self) -> dict:
        return {
            "nodes": [{"id": n.id, "kind": n.kind} for n in self.nodes],
            "edges": [
                {"from": e.source, "to": e.target, "length": e.length, "cells": e.cells,
                 "dissipation": e.dissipation.to_dict()}
                for e in self.edges
            ],
        }


def neighborhoods(graph: MetricGraph, j: str) -> tuple[frozenset[str], frozenset[str]]:
    """Incoming ``{i : (i, j) in E}`` and outgoing ``{k : (j, k) in E}`` neighbour sets of ``j``."""
    if j not in graph._incoming:
        raise KeyError(f"unknown node {j!r}")
    return frozenset(graph._incoming[j]), frozenset(graph._outgoing[j])


# -- parsing -----------------------------------------------------------------

def _line_of(text: str, token: str) -> int | None:
    needle = json.dumps(token)
    for k, line in enumerate(text.splitlines(), start=1):
        if needle in line:
            return k
    return None


def _load(text: str) -> dict:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed JSON: {exc.msg}", line=exc.lineno) from None
    if not isinstance(doc, dict):
        raise ParseError("top-level JSON value must be an object", line=1)
    return doc


def _require(obj: Mapping, key: str, path: str, text: str):
    if not isinstance(obj, Mapping) or key not in obj:
        raise ParseError(f"missing field {key!r}", field=path, line=None)
    return obj[key]


def _number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParseError(f"expected a number, got {value!r}", field=path)
    return float(value)


def parse_network(text: str) -> MetricGraph:
    """Parse and validate a network document."""
    doc = _load(text)
    raw_nodes = _require(doc, "nodes", "nodes", text)
    raw_edges = _require(doc, "edges", "edges", text)
    if not isinstance(raw_nodes, list) or not isinstance(raw_edges, list):
        raise ParseError("'nodes' and 'edges' must be lists")
    nodes = []
    for k, rn in enumerate(raw_nodes):
        path = f"nodes[{k}]"
        nid = str(_require(rn, "id", path + ".id", text))
        kind = _require(rn, "kind", path + ".kind", text)
        try:
            nodes.append(NodeSpec(nid, kind))
        except ParseError as exc:
            raise ParseError(exc.message, field=path + ".kind", line=_line_of(text, nid)) from None
    known = {n.id for n in nodes}
    edges = []
    for k, re_ in enumerate(raw_edges):
        path = f"edges[{k}]"
        src = str(_require(re_, "from", path + ".from", text))
        dst = str(_require(re_, "to", path + ".to", text))
        for end, key in ((src, "from"), (dst, "to")):
            if end not in known:
                raise ParseError(f"edge {src}-{dst} references unknown node {end!r}",
                                 field=f"{path}.{key}", line=_line_of(text, end))
        length = _number(_require(re_, "length", path + ".length", text), path + ".length")
        if not length > 0.0:
            raise ParseError(f"edge {src}-{dst}: length must be > 0, got {length}", field=path + ".length")
        cells = _require(re_, "cells", path + ".cells", text)
        if isinstance(cells, bool) or not isinstance(cells, int):
            raise ParseError(f"cells must be an integer, got {cells!r}", field=path + ".cells")
        raw_d = _require(re_, "dissipation", path + ".dissipation", text)
        dkind = _require(raw_d, "kind", path + ".dissipation.kind", text)
        params = raw_d.get("params", {}) if isinstance(raw_d, Mapping) else {}
        try:
            diss = DissipationSpec(dkind, {str(p): _number(v, f"{path}.dissipation.params.{p}") for p, v in params.items()})
        except DissipationError as exc:
            raise ParseError(str(exc), field=path + ".dissipation", line=_line_of(text, dkind)) from None
        edges.append(EdgeSpec(src, dst, length, cells, diss))
    return MetricGraph(tuple(nodes), tuple(edges))


def serialize_network(graph: MetricGraph) -> str:
    return json.dumps(graph.to_dict(), indent=2)


# -- scenarios ----------------------------------------------------------------

@dataclass(frozen=True)
class Scenario:
    """Initial profiles, nodal boundary data and compatibility factors.

    ``initial_rho``/``initial_phi`` map edge ids to callables of ``x`` on
    ``[0, L]`` (usually :class:`PiecewiseLinear`). ``injection`` holds ``q_i(t)``
    for injection nodes, ``density`` the prescribed ``rho_i(t)`` for density
    nodes. ``alpha_lo``/``alpha_hi`` are the multiplicative compatibility
    factors at the tail and head of each edge.
    """

    horizon: float
    initial_rho: Mapping[str, Profile]
    initial_phi: Mapping[str, Profile]
    injection: Mapping[str, PiecewiseLinear]
    density: Mapping[str, PiecewiseLinear]
    alpha_lo: Mapping[str, PiecewiseLinear]
    alpha_hi: Mapping[str, PiecewiseLinear]
    dt: float | None = None

    def with_injection(self, q: Mapping[str, PiecewiseLinear]) -> Scenario:
        merged = dict(self.injection)
        merged.update(q)
        return replace(self, injection=merged)

    def with_alpha(self, lo: Mapping[str, PiecewiseLinear], hi: Mapping[str, PiecewiseLinear]) -> Scenario:
        alo, ahi = dict(self.alpha_lo), dict(self.alpha_hi)
        alo.update(lo)
        ahi.update(hi)
        return replace(self, alpha_lo=alo, alpha_hi=ahi)

    def to_dict(self, graph: MetricGraph | None = None) -> dict:
        """Serializable form; non-tabular profiles are sampled on 65 points of each edge."""
        lengths = {e.id: e.length for e in graph.edges} if graph is not None else {}

        def table(fn, length):
            if isinstance(fn, PiecewiseLinear):
                return fn.points()
            xs = np.linspace(0.0, length, 65)
            return [[float(x), float(fn(x))] for x in xs]

        out = {"horizon": self.horizon}
        if self.dt is not None:
            out["dt"] = self.dt
        out["initial"] = {
            eid: {"rho": table(self.initial_rho[eid], lengths.get(eid, 1.0)),
                  "phi": table(self.initial_phi[eid], lengths.get(eid, 1.0))}
            for eid in self.initial_rho
        }
        boundary = {nid: {"q": q.points()} for nid, q in self.injection.items()}
        boundary.update({nid: {"rho": r.points()} for nid, r in self.density.items()})
        out["boundary"] = {k: boundary[k] for k in sorted(boundary)}
        out["alpha"] = {eid: {"lo": self.alpha_lo[eid].points(), "hi": self.alpha_hi[eid].points()}
                        for eid in self.alpha_lo}
        return out


def _series(raw, path: str) -> PiecewiseLinear:
    if not isinstance(raw, list):
        raise ParseError("expected a breakpoint table [[s, v], ...]", field=path)
    for k, pair in enumerate(raw):
        if not isinstance(pair, list) or len(pair) != 2:
            raise ParseError("breakpoint must be a [s, v] pair", field=f"{path}[{k}]")
        _number(pair[0], f"{path}[{k}][0]")
        _number(pair[1], f"{path}[{k}][1]")
    try:
        return PiecewiseLinear(raw)
    except ValueError as exc:
        raise ParseError(str(exc), field=path) from None


def scenario_from_dict(doc: Mapping, graph: MetricGraph, text: str = "", validate: bool = True) -> Scenario:
    horizon = _number(_require(doc, "horizon", "horizon", text), "horizon")
    if not horizon > 0.0:
        raise ParseError(f"horizon must be > 0, got {horizon}", field="horizon")
    dt = doc.get("dt")
    if dt is not None:
        dt = _number(dt, "dt")
    initial = _require(doc, "initial", "initial", text)
    boundary = _require(doc, "boundary", "boundary", text)
    alpha = doc.get("alpha", {})
    rho0, phi0 = {}, {}
    for e in graph.edges:
        path = f"initial.{e.id}"
        if e.id not in initial:
            raise ScenarioError(f"missing initial profile for edge {e.id!r}", field=path)
        entry = initial[e.id]
        rho0[e.id] = _series(_require(entry, "rho", path + ".rho", text), path + ".rho")
        phi0[e.id] = _series(entry["phi"], path + ".phi") if "phi" in entry else PiecewiseLinear.constant(0.0)
    extra = sorted(set(initial) - set(graph.edge_ids))
    if extra:
        raise ScenarioError(f"initial profile for unknown edge(s) {extra}", field="initial",
                            line=_line_of(text, extra[0]))
    q, rho_b = {}, {}
    for n in graph.nodes:
        path = f"boundary.{n.id}"
        if n.id not in boundary:
            raise ScenarioError(f"missing boundary series for {n.kind} node {n.id!r}", field=path)
        entry = boundary[n.id]
        key = "q" if n.kind == "injection" else "rho"
        if key not in entry:
            raise ScenarioError(f"{n.kind} node {n.id!r} needs a {key!r} series", field=path,
                                line=_line_of(text, n.id))
        series = _series(entry[key], f"{path}.{key}")
        (q if key == "q" else rho_b)[n.id] = series
    alo, ahi = {}, {}
    for e in graph.edges:
        entry = alpha.get(e.id, {})
        alo[e.id] = _series(entry["lo"], f"alpha.{e.id}.lo") if "lo" in entry else PiecewiseLinear.constant(1.0)
        ahi[e.id] = _series(entry["hi"], f"alpha.{e.id}.hi") if "hi" in entry else PiecewiseLinear.constant(1.0)
    scn = Scenario(horizon, rho0, phi0, q, rho_b, alo, ahi, dt)
    if validate:
        validate_scenario(graph, scn, text=text)
    return scn


def parse_scenario(text: str, graph: MetricGraph) -> Scenario:
    """Parse a scenario document and check it against ``graph``."""
    return scenario_from_dict(_load(text), graph, text=text)


def serialize_scenario(scenario: Scenario, graph: MetricGraph | None = None) -> str:
    return json.dumps(scenario.to_dict(graph), indent=2)


def _profile_values(fn: Profile, xs: np.ndarray) -> np.ndarray:
    return np.asarray(fn(xs), dtype=float) * np.ones_like(xs)


def initial_nodal_densities(graph: MetricGraph, scenario: Scenario, rtol: float = VALIDATION_RTOL) -> dict[str, float]:
    """Nodal densities at t=0.

    Density nodes take their prescribed value; injection nodes are inferred from
    every incident edge endpoint through the inverse compatibility factor, and
    those estimates must agree to ``rtol``.
    """
    out = {}
    for n in graph.nodes:
        if n.kind == "density":
            out[n.id] = scenario.density[n.id](0.0)
            continue
        ins, outs = graph.incident_edges(n.id)
        est = []
        for e in ins:
            est.append((e.id, "L", float(scenario.initial_rho[e.id](e.length)) / scenario.alpha_hi[e.id](0.0)))
        for e in outs:
            est.append((e.id, "0", float(scenario.initial_rho[e.id](0.0)) / scenario.alpha_lo[e.id](0.0)))
        vals = np.array([v for _, _, v in est])
        ref = float(np.mean(vals))
        worst = int(np.argmax(np.abs(vals - ref)))
        resid = float(np.abs(vals[worst] - ref) / max(abs(ref), 1e-300))
        if resid > rtol:
            eid, end, _ = est[worst]
            raise ScenarioError(
                f"incident edges of injection node {n.id!r} imply inconsistent nodal densities at t=0",
                residual=resid, location=f"{eid}@x={end}", field=f"initial.{eid}.rho")
        out[n.id] = ref
    return out


def validate_scenario(graph: MetricGraph, scenario: Scenario, rtol: float = VALIDATION_RTOL, text: str = "") -> dict[str, float]:
    """Check positivity, t=0 compatibility and t=0 nodal flux balance.

    Returns the t=0 nodal densities. Raises :class:`ScenarioError` with the worst
    residual and its location on failure.
    """
    T = scenario.horizon
    for nid, series in scenario.density.items():
        if series.min() <= 0.0:
            raise ScenarioError(f"prescribed density at node {nid!r} must be positive", field=f"boundary.{nid}.rho",
                                line=_line_of(text, nid) if text else None)
    for name, table in (("lo", scenario.alpha_lo), ("hi", scenario.alpha_hi)):
        for eid, series in table.items():
            if series.min() <= 0.0:
                raise ScenarioError(f"compatibility factor alpha.{name} on {eid!r} must be positive",
                                    field=f"alpha.{eid}.{name}")
    for kind, table in (("q", scenario.injection), ("rho", scenario.density)):
        for nid, series in table.items():
            if len(series.s) > 1 and (series.s[0] > 0.0 or series.s[-1] < T):
                raise ScenarioError(f"series {kind} at node {nid!r} does not cover [0, {T}]",
                                    field=f"boundary.{nid}.{kind}")
    for e in graph.edges:
        xs = e.grid()
        fn = scenario.initial_rho[e.id]
        if isinstance(fn, PiecewiseLinear):
            if len(fn.s) > 1 and (fn.s[0] > 0.0 or fn.s[-1] < e.length * (1 - 1e-12)):
                raise ScenarioError(f"initial profile on {e.id!r} does not cover [0, {e.length}]",
                                    field=f"initial.{e.id}.rho")
            xs = np.union1d(xs, fn.s[(fn.s >= 0) & (fn.s <= e.length)])
        if np.min(_profile_values(fn, xs)) <= 0.0:
            raise ScenarioError(f"initial density on {e.id!r} must be positive", field=f"initial.{e.id}.rho")

    rho_nodes = initial_nodal_densities(graph, scenario, rtol)

    worst = (0.0, None)
    for e in graph.edges:
        lo = float(scenario.initial_rho[e.id](0.0))
        hi = float(scenario.initial_rho[e.id](e.length))
        for got, want, end in ((lo, scenario.alpha_lo[e.id](0.0) * rho_nodes[e.source], "0"),
                               (hi, scenario.alpha_hi[e.id](0.0) * rho_nodes[e.target], "L")):
            r = abs(got - want) / max(abs(got), abs(want))
            if r > worst[0]:
                worst = (r, f"{e.id}@x={end}")
    if worst[0] > rtol:
        raise ScenarioError("t=0 compatibility violated", residual=worst[0], location=worst[1],
                            field=f"initial.{worst[1].split('@')[0]}.rho")

    worst = (0.0, None)
    for nid in graph.injection_nodes():
        ins, outs = graph.incident_edges(nid)
        terms = [scenario.injection[nid](0.0)]
        terms += [float(scenario.initial_phi[e.id](e.length)) for e in ins]
        terms += [-float(scenario.initial_phi[e.id](0.0)) for e in outs]
        resid = abs(sum(terms))
        scale = sum(abs(t) for t in terms)
        r = resid / scale if scale > 0 else 0.0
        if r > worst[0]:
            worst = (r, nid)
    if worst[0] > rtol:
        raise ScenarioError("t=0 nodal flux balance violated", residual=worst[0], location=worst[1],
                            field=f"boundary.{worst[1]}.q")
    return rho_nodes
