"""Scenario builders shared by the tests, the acceptance suite and the CLI examples.

Random generators take a ``numpy.random.Generator`` and are deterministic for a
given seed. ``python3 -m monoflow.fixtures OUTDIR`` writes a small corpus of
network/scenario files for the command-line tools.
"""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .dissipation import DissipationSpec
from .netgraph import EdgeSpec, MetricGraph, NodeSpec, Scenario, serialize_network, validate_scenario
from .robust import ControlSchedule, Envelopes
from .series import PiecewiseLinear

PROFILE_POINTS = 33


def _pl(points) -> PiecewiseLinear:
    return PiecewiseLinear(points)


def add_series(a: PiecewiseLinear, b: PiecewiseLinear) -> PiecewiseLinear:
    """Exact pointwise sum of two piecewise-linear series."""
    s = np.union1d(a.s, b.s)
    return PiecewiseLinear(np.column_stack([s, a(s) + b(s)]))


def line_profile(left: float, right: float, length: float, bump: float = 0.0,
                 points: int = PROFILE_POINTS) -> PiecewiseLinear:
    """Linear interpolation between the end values plus ``bump * sin(pi x / L)``."""
    x = np.linspace(0.0, length, points)
    return PiecewiseLinear(np.column_stack([x, left + (right - left) * x / length + bump * np.sin(np.pi * x / length)]))


def _constant_table(graph: MetricGraph, value: float) -> dict[str, PiecewiseLinear]:
    return {e.id: PiecewiseLinear.constant(value) for e in graph.edges}


# -- deterministic fixtures -------------------------------------------------------

def steady_heat(cells: int = 100, left: float = 2.0, right: float = 1.0, diffusivity: float = 1.0,
                horizon: float = 5.0, dt: float = 0.05, bump: float = 0.5) -> tuple[MetricGraph, Scenario]:
    """Single heat edge between two density nodes; relaxes to the linear profile."""
    g = MetricGraph((NodeSpec("a", "density"), NodeSpec("b", "density")),
                    (EdgeSpec("a", "b", 1.0, cells, DissipationSpec("heat", {"D": diffusivity})),))
    scn = Scenario(horizon, {"a-b": line_profile(left, right, 1.0, bump, 4 * cells + 1)},
                   {"a-b": PiecewiseLinear.constant(0.0)}, {},
                   {"a": PiecewiseLinear.constant(left), "b": PiecewiseLinear.constant(right)},
                   _constant_table(g, 1.0), _constant_table(g, 1.0), dt)
    validate_scenario(g, scn)
    return g, scn


def smooth_heat(cells: int = 10, horizon: float = 0.25, dt: float = 0.01) -> tuple[MetricGraph, Scenario]:
    """Two heat edges meeting at an injection node, smooth data, time-dependent boundary series."""
    g = MetricGraph(
        (NodeSpec("a", "density"), NodeSpec("m", "injection"), NodeSpec("b", "density")),
        (EdgeSpec("a", "m", 1.0, cells, DissipationSpec("heat", {"D": 1.0})),
         EdgeSpec("m", "b", 1.0, cells, DissipationSpec("heat", {"D": 0.5}))),
    )

    def first(x):
        return 1.5 + 0.25 * np.cos(np.pi * x) + 0.1 * np.sin(2 * np.pi * x)

    def second(x):
        return 1.0 + 0.25 * np.cos(np.pi * x) + 0.1 * np.sin(2 * np.pi * x)

    zero = PiecewiseLinear.constant(0.0)
    ts = np.linspace(0.0, horizon, 9)
    scn = Scenario(
        horizon, {"a-m": first, "m-b": second}, {"a-m": zero, "m-b": zero},
        {"m": _pl(np.column_stack([ts, 0.4 * np.sin(np.pi * ts / horizon)]))},
        {"a": _pl(np.column_stack([ts, 1.75 + 0.1 * np.sin(np.pi * ts / horizon)])),
         "b": PiecewiseLinear.constant(0.75)},
        _constant_table(g, 1.0), _constant_table(g, 1.0), dt)
    validate_scenario(g, scn)
    return g, scn


def path_network(kinds=("density", "injection", "injection"), dissipation: str = "heat", cells: int = 10,
                 length: float = 1.0) -> MetricGraph:
    """Chain n0 -> n1 -> ... with the given node kinds."""
    spec = default_dissipation(dissipation)
    nodes = tuple(NodeSpec(f"n{k}", kind) for k, kind in enumerate(kinds))
    edges = tuple(EdgeSpec(f"n{k}", f"n{k + 1}", length, cells, spec) for k in range(len(kinds) - 1))
    return MetricGraph(nodes, edges)


def star_network(leaves: int = 3, dissipation: str = "heat", cells: int = 10) -> MetricGraph:
    """Density hub ``c`` feeding injection leaves ``l0..``."""
    spec = default_dissipation(dissipation)
    nodes = (NodeSpec("c", "density"),) + tuple(NodeSpec(f"l{k}", "injection") for k in range(leaves))
    edges = tuple(EdgeSpec("c", f"l{k}", 1.0, cells, spec) for k in range(leaves))
    return MetricGraph(nodes, edges)


def default_dissipation(kind: str) -> DissipationSpec:
    return {"heat": DissipationSpec("heat", {"D": 1.0}),
            "porous": DissipationSpec("porous", {"D": 0.5, "m": 2.0}),
            "gas": DissipationSpec("gas", {"beta": 1.0, "nu": 1e-2})}[kind]


def constant_state(graph: MetricGraph, value: float = 1.5, horizon: float = 1.0, dt: float = 0.05) -> Scenario:
    """Uniform density with zero injections and unit factors: a fixed point of the dynamics."""
    zero = PiecewiseLinear.constant(0.0)
    scn = Scenario(horizon, {e.id: PiecewiseLinear.constant(value) for e in graph.edges},
                   {e.id: zero for e in graph.edges}, {nid: zero for nid in graph.injection_nodes()},
                   {nid: PiecewiseLinear.constant(value) for nid in graph.density_nodes()},
                   _constant_table(graph, 1.0), _constant_table(graph, 1.0), dt)
    validate_scenario(graph, scn)
    return scn


# -- randomized fixtures -----------------------------------------------------------

@dataclass
class ScenarioParams:
    """Generator state from which a scenario is assembled; perturbing it yields ordered pairs."""

    horizon: float
    dt: float
    rho0: dict[str, float]
    bump: dict[str, float]
    injection: dict[str, PiecewiseLinear]
    density: dict[str, PiecewiseLinear]
    alpha_lo: dict[str, PiecewiseLinear]
    alpha_hi: dict[str, PiecewiseLinear]
    extra: dict = field(default_factory=dict)


def random_dissipation(rng: np.random.Generator, kind: str | None = None) -> DissipationSpec:
    kind = kind or str(rng.choice(["heat", "porous", "gas"]))
    if kind == "heat":
        return DissipationSpec("heat", {"D": float(np.round(rng.uniform(0.5, 1.5), 3))})
    if kind == "porous":
        return DissipationSpec("porous", {"D": float(np.round(rng.uniform(0.3, 0.8), 3)),
                                          "m": float(rng.choice([1.5, 2.0, 3.0]))})
    return DissipationSpec("gas", {"beta": float(np.round(rng.uniform(0.5, 2.0), 3)), "nu": 1e-2})


def random_graph(rng: np.random.Generator, max_nodes: int = 5, max_edges: int = 6,
                 kinds: tuple[str, ...] | None = None) -> MetricGraph:
    """Connected random network with mixed dissipation kinds and at least one density node."""
    n = int(rng.integers(2, max_nodes + 1))
    ids = [f"v{k}" for k in range(n)]
    pairs = []
    for k in range(1, n):
        j = int(rng.integers(0, k))
        pairs.append((ids[j], ids[k]) if rng.random() < 0.5 else (ids[k], ids[j]))
    target = int(rng.integers(n - 1, max_edges + 1))
    candidates = [(a, b) for a in ids for b in ids if a != b]
    rng.shuffle(candidates)
    for a, b in candidates:
        if len(pairs) >= target:
            break
        if (a, b) not in pairs and (b, a) not in pairs:
            pairs.append((a, b))
    node_kinds = ["density" if rng.random() < 0.4 else "injection" for _ in ids]
    if "density" not in node_kinds:
        node_kinds[int(rng.integers(0, n))] = "density"
    nodes = tuple(NodeSpec(i, k) for i, k in zip(ids, node_kinds))
    edges = []
    for m, (a, b) in enumerate(pairs):
        kind = kinds[m % len(kinds)] if kinds else None
        edges.append(EdgeSpec(a, b, float(np.round(rng.uniform(0.5, 1.5), 3)), int(rng.integers(6, 13)),
                              random_dissipation(rng, kind)))
    return MetricGraph(nodes, tuple(edges))


def _random_series(rng, horizon, start, lo, hi, knots=4):
    ts = np.linspace(0.0, horizon, knots)
    vals = np.concatenate(([start], rng.uniform(lo, hi, knots - 1)))
    return PiecewiseLinear(np.column_stack([ts, np.round(vals, 4)]))


def random_params(graph: MetricGraph, rng: np.random.Generator, horizon: float = 1.0, dt: float = 0.02,
                  varying_alpha: bool = True) -> ScenarioParams:
    rho0 = {nid: float(np.round(rng.uniform(1.0, 2.0), 4)) for nid in graph.node_ids}
    bump = {e.id: float(np.round(rng.uniform(0.0, 0.2), 4)) for e in graph.edges}
    inj = {nid: _random_series(rng, horizon, 0.0, -0.3, 0.3) for nid in graph.injection_nodes()}
    dens = {nid: _random_series(rng, horizon, rho0[nid], 0.8 * rho0[nid], 1.2 * rho0[nid])
            for nid in graph.density_nodes()}
    alo, ahi = {}, {}
    for e in graph.edges:
        for table in (alo, ahi):
            a0 = float(np.round(rng.uniform(1.0, 1.3), 4))
            if varying_alpha and rng.random() < 0.5:
                table[e.id] = _random_series(rng, horizon, a0, 1.0, 1.3, knots=3)
            else:
                table[e.id] = PiecewiseLinear.constant(a0)
    return ScenarioParams(horizon, dt, rho0, bump, inj, dens, alo, ahi)


def build_scenario(graph: MetricGraph, p: ScenarioParams, validate: bool = True) -> Scenario:
    zero = PiecewiseLinear.constant(0.0)
    rho = {}
    for e in graph.edges:
        left = p.alpha_lo[e.id](0.0) * p.rho0[e.source]
        right = p.alpha_hi[e.id](0.0) * p.rho0[e.target]
        rho[e.id] = line_profile(left, right, e.length, p.bump[e.id])
    scn = Scenario(p.horizon, rho, {e.id: zero for e in graph.edges}, dict(p.injection), dict(p.density),
                   dict(p.alpha_lo), dict(p.alpha_hi), p.dt)
    if validate:
        validate_scenario(graph, scn)
    return scn


def random_scenario(graph: MetricGraph, rng: np.random.Generator, horizon: float = 1.0, dt: float = 0.02) -> Scenario:
    """Positive, compatible, flux-balanced random scenario (``q(0) = 0`` and zero initial flux)."""
    return build_scenario(graph, random_params(graph, rng, horizon, dt))


def _nonneg_series(rng, horizon, start, amp, knots=4):
    ts = np.linspace(0.0, horizon, knots)
    vals = np.concatenate(([start], np.round(rng.uniform(0.0, amp, knots - 1), 4)))
    return PiecewiseLinear(np.column_stack([ts, vals]))


def dominate(graph: MetricGraph, p: ScenarioParams, rng: np.random.Generator, shift: float = 0.05) -> ScenarioParams:
    """Parameters whose scenario dominates ``p``'s in every hypothesis of the ordering check."""
    rho0 = {nid: v + shift for nid, v in p.rho0.items()}
    bump = {eid: v + float(np.round(rng.uniform(0.0, 0.05), 4)) for eid, v in p.bump.items()}
    inj = {nid: add_series(q, _nonneg_series(rng, p.horizon, 0.0, 0.2)) for nid, q in p.injection.items()}
    # density offsets start at the shift so the nodal data stay compatible at t=0
    dens = {nid: add_series(r, _nonneg_series(rng, p.horizon, shift, 0.1)) for nid, r in p.density.items()}
    return replace(p, rho0=rho0, bump=bump, injection=inj, density=dens)


def dominated_pair(rng: np.random.Generator, graph: MetricGraph | None = None, horizon: float = 1.0,
                   dt: float = 0.02, shift: float = 0.05) -> tuple[MetricGraph, Scenario, Scenario]:
    """``(graph, A, B)`` with A dominating B, so ``rho_A >= rho_B`` must hold throughout.

    ``shift`` is the initial nodal offset; with ``shift=0`` the pair starts from
    the same nodal densities and separates only through the bumps and boundary data.
    """
    graph = graph or random_graph(rng)
    pb = random_params(graph, rng, horizon, dt)
    pa = dominate(graph, pb, rng, shift)
    return graph, build_scenario(graph, pa), build_scenario(graph, pb)


def forced_violation_pair(rng: np.random.Generator, graph: MetricGraph | None = None, horizon: float = 1.0,
                          dt: float = 0.02, shift: float = 0.05) -> tuple[MetricGraph, Scenario, Scenario, str, float]:
    """Dominated pair except at one density node, where ``rho_A - rho_B = shift (t_on - t) / t_on``.

    Returns ``(graph, A, B, node, t_on)``; ``t_on`` lies on the time grid.
    """
    graph = graph or random_graph(rng)
    pb = random_params(graph, rng, horizon, dt)
    pa = dominate(graph, pb, rng, shift)
    node = str(rng.choice(graph.density_nodes()))
    n_steps = int(round(horizon / dt))
    t_on = float(np.round(dt * int(rng.integers(n_steps // 4, n_steps // 2 + 1)), 12))
    forcing = PiecewiseLinear([[0.0, shift], [t_on, 0.0], [horizon, shift * (t_on - horizon) / t_on]])
    dens = dict(pa.density)
    dens[node] = add_series(pb.density[node], forcing)
    pa = replace(pa, density=dens)
    return graph, build_scenario(graph, pa), build_scenario(graph, pb), node, t_on


def random_envelopes(graph: MetricGraph, scenario: Scenario, rng: np.random.Generator,
                     spread: float = 0.2) -> Envelopes:
    """Valid envelopes around the scenario's injections, zero width at t=0."""
    T = scenario.horizon
    q_hat = {nid: scenario.injection[nid] for nid in graph.injection_nodes()}
    q_hi = {nid: add_series(q, _nonneg_series(rng, T, 0.0, spread)) for nid, q in q_hat.items()}
    q_lo = {nid: add_series(q, _negate(_nonneg_series(rng, T, 0.0, spread))) for nid, q in q_hat.items()}
    return Envelopes(q_hat, q_hi, q_lo)


def _negate(series: PiecewiseLinear) -> PiecewiseLinear:
    return PiecewiseLinear(np.column_stack([series.s, -series.v]))


# -- monitoring fixtures ---------------------------------------------------------------

@dataclass
class NMPCase:
    graph: MetricGraph
    scenario: Scenario
    envelopes: Envelopes
    q_rt: dict[str, PiecewiseLinear]
    dt: float
    name: str = ""


def nmp_case(kind: str = "aggressive", dt: float = 0.01, horizon: float = 1.0) -> NMPCase:
    """Path network with a density source and two withdrawal nodes.

    ``kind`` selects the realtime record: ``inside`` (nominal), ``mild``
    (node n2 slightly above its upper envelope on [0.3, 0.6] while the other
    node draws nominally) or ``aggressive`` (n2 one unit above its upper
    envelope from t=0.2, n1 on its upper envelope).
    """
    g = path_network(("density", "injection", "injection"))
    zero = PiecewiseLinear.constant(0.0)
    q_hat = {"n1": _pl([[0.0, 0.0], [0.2, -0.2], [horizon, -0.2]]),
             "n2": _pl([[0.0, 0.0], [0.2, -0.3], [horizon, -0.3]])}
    width = _pl([[0.0, 0.0], [0.2, 0.15], [horizon, 0.15]])
    q_hi = {k: add_series(v, width) for k, v in q_hat.items()}
    q_lo = {k: add_series(v, _negate(width)) for k, v in q_hat.items()}
    scn = Scenario(horizon, {e.id: PiecewiseLinear.constant(1.5) for e in g.edges}, {e.id: zero for e in g.edges},
                   dict(q_hat), {"n0": PiecewiseLinear.constant(1.5)},
                   _constant_table(g, 1.0), _constant_table(g, 1.0), dt)
    validate_scenario(g, scn)
    if kind == "inside":
        q_rt = dict(q_hat)
    elif kind == "mild":
        q_rt = {"n1": q_hat["n1"],
                "n2": add_series(q_hi["n2"], _pl([[0.0, 0.0], [0.3, 0.0], [0.35, 0.02], [0.55, 0.02], [0.6, 0.0]]))}
    elif kind == "aggressive":
        q_rt = {"n1": q_hi["n1"], "n2": add_series(q_hi["n2"], _pl([[0.0, 0.0], [0.2, 0.0], [0.25, 1.0]]))}
    elif kind == "aggressive_low":
        q_rt = {"n1": q_lo["n1"], "n2": add_series(q_lo["n2"], _pl([[0.0, 0.0], [0.2, 0.0], [0.25, -0.4]]))}
    else:
        raise ValueError(f"unknown monitoring fixture {kind!r}")
    return NMPCase(g, scn, Envelopes(q_hat, q_hi, q_lo), q_rt, dt, kind)


def random_nmp_case(rng: np.random.Generator, horizon: float = 1.0, dt: float = 0.02) -> NMPCase:
    """Random network and envelopes with a realtime record that leaves the envelope at some nodes."""
    while True:
        g = random_graph(rng)
        if g.injection_nodes():
            break
    scn = random_scenario(g, rng, horizon, dt)
    env = random_envelopes(g, scn, rng)
    q_rt = {}
    for nid in g.injection_nodes():
        u = rng.random()
        t0 = float(np.round(rng.uniform(0.1, 0.5), 3))
        kick = float(np.round(rng.uniform(0.3, 1.0), 3))
        ramp = _pl([[0.0, 0.0], [t0, 0.0], [t0 + 0.05, kick]])
        if u < 0.35:
            q_rt[nid] = add_series(env.q_hi[nid], ramp)
        elif u < 0.7:
            q_rt[nid] = add_series(env.q_lo[nid], _negate(ramp))
        else:
            q_rt[nid] = env.q_hat[nid]
    return NMPCase(g, scn, env, q_rt, dt, "random")


@dataclass
class SearchCase:
    graph: MetricGraph
    scenario: Scenario
    envelopes: Envelopes
    bounds: tuple[float, float]


def search_case(dt: float = 0.02, horizon: float = 1.0) -> SearchCase:
    """Withdrawals upstream of a density node; the lower envelope undershoots ``rho_min``.

    Head factors above one lift the edge densities here, so a constant head
    factor of 1.3 restores feasibility while unit factors do not.
    """
    g = path_network(("injection", "injection", "density"))
    zero = PiecewiseLinear.constant(0.0)
    q_hat = {"n0": _pl([[0.0, 0.0], [0.2, -0.2], [horizon, -0.2]]),
             "n1": _pl([[0.0, 0.0], [0.2, -0.1], [horizon, -0.1]])}
    width = _pl([[0.0, 0.0], [0.2, 0.1], [horizon, 0.1]])
    env = Envelopes(q_hat, {k: add_series(v, width) for k, v in q_hat.items()},
                    {k: add_series(v, _negate(width)) for k, v in q_hat.items()})
    scn = Scenario(horizon, {e.id: PiecewiseLinear.constant(1.2) for e in g.edges}, {e.id: zero for e in g.edges},
                   dict(q_hat), {"n2": PiecewiseLinear.constant(1.2)},
                   _constant_table(g, 1.0), _constant_table(g, 1.0), dt)
    validate_scenario(g, scn)
    return SearchCase(g, scn, env, (1.0, 3.0))


# -- corpus -------------------------------------------------------------------------

def _series_doc(table: dict[str, PiecewiseLinear]) -> dict:
    return {k: table[k].points() for k in sorted(table)}


def scenario_doc(graph: MetricGraph, scenario: Scenario) -> dict:
    return scenario.to_dict(graph)


def envelope_doc(graph: MetricGraph, scenario: Scenario, envelopes: Envelopes, rho_min: float | None = None,
                 rho_max: float | None = None, q_rt: dict[str, PiecewiseLinear] | None = None) -> dict:
    doc = scenario.to_dict(graph)
    doc["q_hat"] = _series_doc(envelopes.q_hat)
    doc["q_hi"] = _series_doc(envelopes.q_hi)
    doc["q_lo"] = _series_doc(envelopes.q_lo)
    if rho_min is not None:
        doc["bounds"] = {"rho_min": rho_min, "rho_max": rho_max}
    if q_rt:
        doc["q_rt"] = _series_doc(q_rt)
    return doc


def _dump(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2) + "\n")


def write_corpus(outdir: str | Path, seed: int = 7) -> list[Path]:
    """Write example network/scenario files for every subcommand."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    written = []

    def put(name, doc):
        p = out / name
        if isinstance(doc, str):
            p.write_text(doc + "\n")
        else:
            _dump(p, doc)
        written.append(p)

    g, s = steady_heat()
    put("steady_network.json", serialize_network(g))
    put("steady_scenario.json", scenario_doc(g, s))
    g, s = smooth_heat()
    put("smooth_network.json", serialize_network(g))
    put("smooth_scenario.json", scenario_doc(g, s))
    g, a, b = dominated_pair(rng)
    put("pair_network.json", serialize_network(g))
    put("pair_upper.json", scenario_doc(g, a))
    put("pair_lower.json", scenario_doc(g, b))
    while True:
        g, a, b, node, t_on = forced_violation_pair(rng)
        if len(g.density_nodes()) >= 1:
            break
    put("forced_network.json", serialize_network(g))
    put("forced_upper.json", scenario_doc(g, a))
    put("forced_lower.json", scenario_doc(g, b))
    case = nmp_case("aggressive")
    put("monitor_network.json", serialize_network(case.graph))
    for kind in ("inside", "mild", "aggressive"):
        c = nmp_case(kind)
        put(f"monitor_{kind}.json", envelope_doc(c.graph, c.scenario, c.envelopes, q_rt=c.q_rt))
    put("robust_scenario.json", envelope_doc(case.graph, case.scenario, case.envelopes, 1.0, 2.0))
    sc = search_case()
    put("search_network.json", serialize_network(sc.graph))
    put("search_scenario.json", envelope_doc(sc.graph, sc.scenario, sc.envelopes, *sc.bounds))
    sched = ControlSchedule.uniform(sc.graph, sc.scenario.horizon, intervals=5)
    put("control_template.json", sched.to_dict())
    return written


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    if not argv:
        print("usage: python3 -m monoflow.fixtures OUTDIR [SEED]", file=sys.stderr)
        return 1
    for p in write_corpus(argv[0], int(argv[1]) if len(argv) > 1 else 7):
        print(p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
