import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from monoflow import dynamics as dy, fixtures as fx, robust as rb
from monoflow.netgraph import ParseError, Scenario, validate_scenario
from monoflow.series import PiecewiseLinear as PL


@pytest.fixture(scope="module")
def case():
    return fx.nmp_case("inside")


def test_invalid_envelope_rejected(case):
    bad = rb.Envelopes(case.envelopes.q_hat, case.envelopes.q_lo, case.envelopes.q_hi)
    with pytest.raises(rb.EnvelopeError) as exc:
        rb.simulate_envelopes(case.graph, case.scenario, bad, dt=case.dt)
    assert exc.value.intervals and exc.value.intervals[0][0] == pytest.approx(0.0)


def test_degenerate_envelope_zero_margins(case):
    q = case.envelopes.q_hat
    b = rb.simulate_envelopes(case.graph, case.scenario, rb.Envelopes(q, q, q), dt=case.dt)
    assert b.sandwich.holds
    assert b.sandwich.upper.worst_margin == 0.0 and b.sandwich.lower.worst_margin == 0.0


def test_random_sandwich(rng):
    for _ in range(6):
        g = fx.random_graph(rng)
        s = fx.random_scenario(g, rng)
        b = rb.simulate_envelopes(g, s, fx.random_envelopes(g, s, rng))
        assert b.sandwich.holds


def test_threads_do_not_change_results(case):
    one = rb.simulate_envelopes(case.graph, case.scenario, case.envelopes, dt=case.dt, threads=1)
    three = rb.simulate_envelopes(case.graph, case.scenario, case.envelopes, dt=case.dt, threads=3)
    for eid in one.upper.rho:
        assert np.array_equal(one.upper.rho[eid], three.upper.rho[eid])


def test_thread_count_env(monkeypatch):
    monkeypatch.setenv("MONOFLOW_THREADS", "2")
    assert rb.thread_count() == 2
    monkeypatch.setenv("MONOFLOW_THREADS", "0")
    assert 1 <= rb.thread_count() <= 3


def test_envelope_feasibility_implies_nominal(case):
    b = rb.simulate_envelopes(case.graph, case.scenario, case.envelopes, dt=case.dt)
    rep = rb.check_envelope_bounds(b, 0.5, 2.0, include_nominal=True)
    assert b.feasible and rep["nominal"].feasible
    rep = rb.check_envelope_bounds(b, 1.0, 2.0)
    assert not b.feasible and rep["lower"].low_margin < 0.0
    assert rb.bound_violation(b, 1.0, 2.0) > 0.0
    assert rb.bound_violation(b, 0.5, 2.0) == 0.0


def test_bounds_require_order(case):
    tr = dy.simulate(case.graph, case.scenario)
    with pytest.raises(ValueError):
        rb.check_density_bounds(tr, 2.0, 1.0)


def test_parse_envelope_scenario(case):
    doc = fx.envelope_doc(case.graph, case.scenario, case.envelopes, 0.5, 2.5, q_rt=case.q_rt)
    es = rb.parse_envelope_scenario(json.dumps(doc), case.graph)
    assert es.rho_min == 0.5 and es.rho_max == 2.5
    assert es.envelopes.q_hi["n1"] == case.envelopes.q_hi["n1"]
    assert set(es.q_rt) == {"n1", "n2"}
    doc["q_hi"]["n0"] = [[0.0, 1.0]]
    with pytest.raises(ParseError, match="non-injection"):
        rb.parse_envelope_scenario(json.dumps(doc), case.graph)


def test_schedule_ramps_from_base(case):
    sched = rb.ControlSchedule.uniform(case.graph, 1.0, intervals=4, hi=1.4)
    sched.hi["n0-n1"][2] = 1.2
    s = sched.apply(case.scenario, 0.01)
    a = s.alpha_hi["n0-n1"]
    assert a(0.0) == 1.0
    assert a(0.01) == pytest.approx(1.4) and a(0.3) == pytest.approx(1.4)
    assert a(0.505) == pytest.approx(1.3)
    assert a(0.6) == pytest.approx(1.2) and a(0.76) == pytest.approx(1.4)


def test_schedule_json_round_trip(case):
    sched = rb.ControlSchedule.uniform(case.graph, 1.0, intervals=3, lo=1.1, hi=1.2)
    again = rb.parse_schedule(rb.schedule_json(sched))
    assert again.to_dict() == sched.to_dict()


def test_schedule_validation():
    with pytest.raises(ParseError):
        rb.parse_schedule(json.dumps({"a-b": {"grid": [0, 1], "hi": [2.5]}}))
    with pytest.raises(ParseError, match="share"):
        rb.parse_schedule(json.dumps({"a-b": {"grid": [0, 1], "hi": [1.0]}, "b-c": {"grid": [0, 2], "hi": [1.0]}}))


def test_objective_zero_at_unit_factors(case):
    b = rb.simulate_envelopes(case.graph, case.scenario, case.envelopes, dt=case.dt)
    assert rb.objective(b) == 0.0


def test_objective_time_refinement_invariance():
    # head factor grows linearly while the prescribed head density shrinks as 1/alpha, keeping the
    # linear steady profile: phi(L) = 1 and the objective is int_0^1 0.5 t dt = 0.25
    g, s = fx.steady_heat(cells=20, horizon=1.0, bump=0.0)
    ts = np.linspace(0.0, 1.0, 2001)
    alpha = PL(np.column_stack([ts, 1.0 + 0.5 * ts]))
    s = Scenario(1.0, s.initial_rho, s.initial_phi, {}, {"a": PL.constant(2.0), "b": PL(np.column_stack([ts, 1.0 / alpha(ts)]))},
                 s.alpha_lo, {"a-b": alpha}, None)
    validate_scenario(g, s)
    vals = [rb.objective(dy.simulate(g, s, dt)) for dt in (0.05, 0.025, 0.0125)]
    assert vals[0] == pytest.approx(0.25, rel=1e-6)
    for v in vals[1:]:
        assert v == pytest.approx(vals[0], rel=1e-6)


def test_search_keeps_optimal_schedule(case):
    tmpl = rb.ControlSchedule.uniform(case.graph, 1.0, intervals=2)
    res = rb.search_controls(case.graph, case.scenario, case.envelopes, tmpl, (0.1, 10.0), budget=8)
    assert res.feasible and res.accepted_moves == 0
    assert res.schedule.to_dict() == tmpl.to_dict()


@pytest.mark.slow
def test_search_restores_feasibility():
    sc = fx.search_case()
    tmpl = rb.ControlSchedule.uniform(sc.graph, 1.0, intervals=5)
    start = rb.simulate_envelopes(sc.graph, sc.scenario, sc.envelopes, tmpl)
    rb.check_envelope_bounds(start, *sc.bounds)
    assert not start.feasible
    boosted = rb.ControlSchedule.uniform(sc.graph, 1.0, intervals=5, hi=1.3)
    ref = rb.simulate_envelopes(sc.graph, sc.scenario, sc.envelopes, boosted)
    rb.check_envelope_bounds(ref, *sc.bounds)
    assert ref.feasible
    res = rb.search_controls(sc.graph, sc.scenario, sc.envelopes, tmpl, sc.bounds, budget=120, free="hi")
    assert res.feasible and res.status == "ok"
    assert res.objective <= rb.objective(ref) + 1e-12
    again = rb.simulate_envelopes(sc.graph, sc.scenario, sc.envelopes, res.schedule)
    rep = rb.check_envelope_bounds(again, *sc.bounds, include_nominal=True)
    assert all(r.feasible for r in rep.values())


def test_widened(case):
    w = rb.widened(case.envelopes, 0.1)
    assert w.q_hi["n1"](0.5) == pytest.approx(case.envelopes.q_hi["n1"](0.5) + 0.1)
    with pytest.raises(ValueError):
        rb.widened(case.envelopes, -1.0)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 0.4))
def test_sandwich_property(seed, spread):
    rng = np.random.default_rng(seed)
    g = fx.random_graph(rng)
    s = fx.random_scenario(g, rng)
    assert rb.simulate_envelopes(g, s, fx.random_envelopes(g, s, rng, spread)).sandwich.holds
