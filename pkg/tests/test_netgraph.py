import json

import numpy as np
import pytest

from monoflow import fixtures as fx
from monoflow.netgraph import (MetricGraph, ParseError, ScenarioError, neighborhoods, parse_network,
                               parse_scenario, serialize_network, serialize_scenario)

NETWORK = """{
  "nodes": [
    {"id": "s", "kind": "density"},
    {"id": "j", "kind": "injection"},
    {"id": "t", "kind": "injection"}
  ],
  "edges": [
    {"from": "s", "to": "j", "length": 1.0, "cells": 8, "dissipation": {"kind": "heat", "params": {"D": 1.0}}},
    {"from": "j", "to": "t", "length": 2.0, "cells": 8, "dissipation": {"kind": "gas", "params": {"beta": 1.0}}}
  ]
}"""


def scenario_doc(**changes):
    doc = {
        "horizon": 1.0, "dt": 0.1,
        "initial": {"s-j": {"rho": [[0.0, 1.5], [1.0, 1.5]]}, "j-t": {"rho": [[0.0, 1.5], [2.0, 1.5]]}},
        "boundary": {"s": {"rho": [[0.0, 1.5]]}, "j": {"q": [[0.0, 0.0], [1.0, 0.2]]}, "t": {"q": [[0.0, 0.0]]}},
    }
    doc.update(changes)
    return doc


def test_parse_and_round_trip():
    g = parse_network(NETWORK)
    assert g.node_ids == ["s", "j", "t"]
    assert g.edge_ids == ["s-j", "j-t"]
    assert g.edge("j-t").dx == pytest.approx(0.25)
    again = parse_network(serialize_network(g))
    assert again == g


def test_neighborhoods():
    g = parse_network(NETWORK)
    assert neighborhoods(g, "j") == (frozenset({"s"}), frozenset({"t"}))
    assert neighborhoods(g, "s") == (frozenset(), frozenset({"j"}))
    with pytest.raises(KeyError):
        neighborhoods(g, "nope")


def test_unknown_node_reports_line():
    text = NETWORK.replace('"to": "t"', '"to": "x"')
    with pytest.raises(ParseError) as exc:
        parse_network(text)
    assert "'x'" in str(exc.value)
    assert exc.value.line == next(k for k, l in enumerate(text.splitlines(), 1) if '"x"' in l)


def test_malformed_json_reports_line():
    with pytest.raises(ParseError) as exc:
        parse_network('{\n "nodes": [,]\n}')
    assert exc.value.line == 2


@pytest.mark.parametrize("mutate,needle", [
    (lambda d: d["edges"][0].update(length=0.0), "length"),
    (lambda d: d["edges"][0].update(cells=1), "cells"),
    (lambda d: d["nodes"].append({"id": "s", "kind": "density"}), "duplicate"),
    (lambda d: d["nodes"].append({"id": "lonely", "kind": "density"}), "no incident edge"),
    (lambda d: d["nodes"][0].update(kind="valve"), "kind"),
    (lambda d: d["edges"][1]["dissipation"].update(kind="plasma"), "plasma"),
    (lambda d: d["edges"].append(dict(d["edges"][0])), "duplicate edge"),
])
def test_network_validation(mutate, needle):
    doc = json.loads(NETWORK)
    mutate(doc)
    with pytest.raises(ParseError, match=needle):
        parse_network(json.dumps(doc))


def test_density_node_required():
    doc = json.loads(NETWORK)
    doc["nodes"][0]["kind"] = "injection"
    with pytest.raises(ParseError, match="density node"):
        parse_network(json.dumps(doc))


def test_scenario_parse_defaults():
    g = parse_network(NETWORK)
    s = parse_scenario(json.dumps(scenario_doc()), g)
    assert s.alpha_lo["s-j"](0.3) == 1.0
    assert s.initial_phi["j-t"](0.5) == 0.0
    assert s.injection["j"](0.5) == pytest.approx(0.1)
    assert s.dt == 0.1


def test_scenario_round_trip():
    g = parse_network(NETWORK)
    s = parse_scenario(json.dumps(scenario_doc()), g)
    again = parse_scenario(serialize_scenario(s, g), g)
    assert again.to_dict(g) == s.to_dict(g)


def test_compatibility_violation_reports_location():
    g = parse_network(NETWORK)
    doc = scenario_doc(initial={"s-j": {"rho": [[0.0, 1.6], [1.0, 1.5]]}, "j-t": {"rho": [[0.0, 1.5], [2.0, 1.5]]}})
    with pytest.raises(ScenarioError) as exc:
        parse_scenario(json.dumps(doc), g)
    assert exc.value.location == "s-j@x=0"
    assert exc.value.residual == pytest.approx(0.1 / 1.6)


def test_inconsistent_injection_node_estimates():
    g = parse_network(NETWORK)
    doc = scenario_doc(initial={"s-j": {"rho": [[0.0, 1.5], [1.0, 1.5]]}, "j-t": {"rho": [[0.0, 1.7], [2.0, 1.7]]}})
    with pytest.raises(ScenarioError, match="inconsistent"):
        parse_scenario(json.dumps(doc), g)


def test_flux_balance_violation():
    g = parse_network(NETWORK)
    doc = scenario_doc(boundary={"s": {"rho": [[0.0, 1.5]]}, "j": {"q": [[0.0, 0.5], [1.0, 0.2]]},
                                 "t": {"q": [[0.0, 0.0]]}})
    with pytest.raises(ScenarioError, match="flux balance") as exc:
        parse_scenario(json.dumps(doc), g)
    assert exc.value.location == "j"


@pytest.mark.parametrize("doc,needle", [
    (scenario_doc(boundary={"s": {"rho": [[0.0, -1.0]]}, "j": {"q": [[0.0, 0.0]]}, "t": {"q": [[0.0, 0.0]]}}), "positive"),
    (scenario_doc(boundary={"s": {"rho": [[0.0, 1.5]]}, "j": {"q": [[0.0, 0.0], [0.5, 0.0]]}, "t": {"q": [[0.0, 0.0]]}}), "cover"),
    (scenario_doc(boundary={"s": {"rho": [[0.0, 1.5]]}, "t": {"q": [[0.0, 0.0]]}}), "missing boundary"),
    (scenario_doc(alpha={"s-j": {"lo": [[0.0, 0.0]]}}), "positive"),
    (scenario_doc(horizon=-1.0), "horizon"),
])
def test_scenario_validation(doc, needle):
    g = parse_network(NETWORK)
    with pytest.raises(ParseError, match=needle):
        parse_scenario(json.dumps(doc), g)


def test_refined_multiplies_cells():
    g = parse_network(NETWORK)
    r = g.refined(3)
    assert [e.cells for e in r.edges] == [24, 24]
    assert r.total_length() == g.total_length()


def test_random_graphs_valid(rng):
    for _ in range(30):
        g = fx.random_graph(rng)
        assert isinstance(g, MetricGraph)
        assert 2 <= len(g.nodes) <= 5 and len(g.edges) <= 6
        assert g.density_nodes()
        fx.random_scenario(g, rng)
        assert all(6 <= e.cells <= 12 for e in g.edges)
