"""Acceptance criteria, one test per criterion, each printing a pass/fail line."""

import json
import time

import numpy as np
import pytest

from monoflow import cli, dynamics as dy, fixtures as fx, monitor as mn, ordering as od, robust as rb

TOL = 1e-7


def test_criterion_1_steady_linear_profile(criterion):
    start = time.perf_counter()
    g, s = fx.steady_heat(cells=100)
    tr = dy.simulate(g, s)
    x = g.edges[0].grid()
    err = float(np.max(np.abs(tr.rho["a-b"][-1] - (2.0 - x))))
    elapsed = time.perf_counter() - start
    ok = err <= 1e-6 and elapsed < 5.0
    assert criterion(1, "steady heat edge matches linear profile", ok, f"max error {err:.2e}, {elapsed:.2f} s")


def test_criterion_2_convergence_orders(criterion):
    start = time.perf_counter()
    g, s = fx.smooth_heat()
    space = dy.convergence_study(g, s, levels=4, kind="space")
    tmp = dy.convergence_study(g, s, levels=4, kind="time")
    elapsed = time.perf_counter() - start
    ok = 1.7 <= space.observed_order <= 2.3 and 0.8 <= tmp.observed_order <= 1.2 and elapsed < 60.0
    assert criterion(2, "self-convergence orders", ok,
                     f"space {space.observed_order:.3f}, time {tmp.observed_order:.3f}, {elapsed:.1f} s")


def _fixture_suite():
    yield "steady", *fx.steady_heat(cells=40, horizon=1.0)
    yield "smooth", *fx.smooth_heat()
    for kind in ("inside", "mild", "aggressive"):
        c = fx.nmp_case(kind)
        yield f"nmp-{kind}", c.graph, c.scenario.with_injection(c.q_rt)
    sc = fx.search_case()
    yield "search", sc.graph, sc.scenario
    rng = np.random.default_rng(3)
    for k in range(10):
        g = fx.random_graph(rng)
        yield f"random-{k}", g, fx.random_scenario(g, rng)


def test_criterion_3_conservation(criterion):
    worst, where = 0.0, None
    count = 0
    for name, g, s in _fixture_suite():
        for eps in (0.0, 1e-3):
            audit = dy.mass_audit(dy.simulate(g, s, epsilon=eps))
            count += 1
            if audit["rel_error"] >= worst:
                worst, where = audit["rel_error"], f"{name}, eps={eps}"
    ok = worst <= 1e-6
    assert criterion(3, "mass conservation on every fixture", ok, f"{count} runs, worst {worst:.2e} at {where}")


def test_criterion_4_ordering_property_suite(criterion):
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    kinds, failures, retried, worst = set(), 0, 0, np.inf
    n_pairs = 60
    for k in range(n_pairs):
        g, a, b = fx.dominated_pair(rng, shift=0.05 if k % 2 else 0.0)
        assert od.check_theorem_hypotheses(g, a, b).holds
        kinds |= {e.dissipation.kind for e in g.edges}
        rep = od.compare(dy.simulate(g, a), dy.simulate(g, b), TOL)
        if not rep.holds:
            retried += 1
            fine = g.refined(2)
            rep = od.compare(dy.simulate(fine, a), dy.simulate(fine, b), TOL)
            failures += not rep.holds
        worst = min(worst, rep.worst_margin)
    elapsed = time.perf_counter() - start
    ok = failures == 0 and kinds == {"heat", "porous", "gas"} and elapsed < 600.0
    assert criterion(4, "ordering preserved on randomized dominated pairs", ok,
                     f"{n_pairs} pairs, {retried} refined, {failures} failures, worst margin {worst:.2e}, {elapsed:.1f} s")


def test_criterion_5_vertex_crossings(criterion):
    rng = np.random.default_rng(77)
    n, detected, vertex, simultaneous = 25, 0, 0, 0
    worst_delay = 0.0
    for _ in range(n):
        g, a, b, node, t_on = fx.forced_violation_pair(rng)
        ta, tb = dy.simulate(g, a), dy.simulate(g, b)
        ev = od.first_crossing(ta, tb, TOL)
        if ev is None:
            continue
        delay = abs(ev.t_c - t_on)
        worst_delay = max(worst_delay, delay)
        detected += delay <= a.dt
        if ev.classification.kind == "vertex" and ev.classification.nodes == (node,):
            vertex += 1
            simultaneous += all(r.holds for r in od.vertex_simultaneity(ev, ta, tb, TOL))
    ok = detected == vertex == simultaneous == n
    assert criterion(5, "forced nodal violations detected as vertex crossings", ok,
                     f"{n} cases: {detected} within one step (max delay {worst_delay:.2e}), "
                     f"{vertex} vertex, {simultaneous} simultaneous")


def test_criterion_6_perturbation(criterion):
    rng = np.random.default_rng(6)
    g3 = fx.star_network(3, dissipation="porous", cells=8)
    fixtures = [("steady", *fx.steady_heat(cells=40, horizon=1.0)), ("smooth", *fx.smooth_heat()),
                ("porous-star", g3, fx.random_scenario(g3, rng))]
    ok, notes = True, []
    for name, g, s in fixtures:
        base = dy.simulate(g, s)
        sups, lows = [], []
        for eps in (1e-2, 1e-3, 1e-4):
            tr = dy.simulate(g, s, epsilon=eps)
            lows.append(min(float(np.min(tr.rho[k] - base.rho[k])) for k in base.rho))
            sups.append(max(float(np.max(np.abs(tr.rho[k] - base.rho[k]))) for k in base.rho))
        good = min(lows) >= -1e-9 and sups[0] > sups[1] > sups[2]
        ok &= good
        notes.append(f"{name}: sup {sups[0]:.1e}>{sups[1]:.1e}>{sups[2]:.1e}")
    assert criterion(6, "perturbed solutions dominate and converge", ok, "; ".join(notes))


def test_criterion_7_robust_sandwich(criterion):
    rng = np.random.default_rng(8)
    n, sandwiched, implications, checked = 20, 0, 0, 0
    for _ in range(n):
        g = fx.random_graph(rng)
        s = fx.random_scenario(g, rng)
        b = rb.simulate_envelopes(g, s, fx.random_envelopes(g, s, rng), tol=TOL)
        sandwiched += b.sandwich.holds
        lo = min(float(np.min(v)) for tr in (b.upper, b.lower) for v in tr.rho.values())
        hi = max(float(np.max(v)) for tr in (b.upper, b.lower) for v in tr.rho.values())
        for rho_min, rho_max in ((lo, hi), (lo + 0.05, hi), (lo, hi - 0.05)):
            rep = rb.check_envelope_bounds(b, rho_min, rho_max, include_nominal=True)
            if b.feasible:
                checked += 1
                implications += rep["nominal"].feasible
    ok = sandwiched == n and checked >= n and implications == checked
    assert criterion(7, "envelope sandwich and feasibility implication", ok,
                     f"{sandwiched}/{n} sandwiched, {implications}/{checked} feasible envelopes with feasible nominal")


def test_criterion_8_monitoring_sandwich(criterion):
    cases = [fx.nmp_case(k) for k in ("inside", "mild", "aggressive", "aggressive_low")]
    rng = np.random.default_rng(9)
    cases += [fx.random_nmp_case(rng) for _ in range(12)]
    held, clamps = 0, 0
    for c in cases:
        log = mn.run_nmp(c.graph, c.scenario, c.envelopes, c.q_rt, c.dt, tol=TOL)
        held += log.failure is None and log.sandwich.holds
        clamps += len(log.clamps)
    c = fx.nmp_case("aggressive")
    runs = [mn.run_nmp(c.graph, c.scenario, c.envelopes, c.q_rt, c.dt, tol=TOL, policy=False) for _ in range(2)]
    broken = [not r.sandwich.holds for r in runs]
    same = runs[0].sandwich.upper.worst_margin == runs[1].sandwich.upper.worst_margin
    ok = held == len(cases) and all(broken) and same and clamps > 0
    assert criterion(8, "monitoring policy keeps the realtime run inside the envelopes", ok,
                     f"{held}/{len(cases)} replays hold, {clamps} clamps; ablation margin "
                     f"{runs[0].sandwich.upper.worst_margin:.3f} reproduced={same}")


def test_criterion_9_determinism(criterion, tmp_path):
    corpus = tmp_path / "corpus"
    fx.write_corpus(corpus)
    c = str(corpus)
    commands = [
        ["simulate", "--network", f"{c}/smooth_network.json", "--scenario", f"{c}/smooth_scenario.json"],
        ["compare", "--network", f"{c}/pair_network.json", "--scenario", f"{c}/pair_upper.json",
         "--scenario2", f"{c}/pair_lower.json"],
        ["crossing", "--network", f"{c}/forced_network.json", "--scenario", f"{c}/forced_upper.json",
         "--scenario2", f"{c}/forced_lower.json"],
        ["robust", "--network", f"{c}/monitor_network.json", "--scenario", f"{c}/robust_scenario.json"],
        ["nmp", "--network", f"{c}/monitor_network.json", "--scenario", f"{c}/monitor_aggressive.json"],
        ["converge", "--network", f"{c}/smooth_network.json", "--scenario", f"{c}/smooth_scenario.json"],
        ["search", "--network", f"{c}/search_network.json", "--scenario", f"{c}/search_scenario.json",
         "--template", f"{c}/control_template.json", "--budget", "6"],
    ]
    identical, total = 0, 0
    for k, argv in enumerate(commands):
        outs = []
        for rep in range(2):
            out = tmp_path / f"run{k}_{rep}"
            code = cli.main(argv + ["--seed", "42", "--out", str(out)])
            outs.append((code, {p.name: p.read_bytes() for p in sorted(out.iterdir())}))
        total += 1
        identical += outs[0] == outs[1] and bool(outs[0][1])
    corpus2 = tmp_path / "corpus2"
    fx.write_corpus(corpus2)
    same_corpus = all((corpus / p.name).read_bytes() == p.read_bytes() for p in corpus2.iterdir())
    ok = identical == total and same_corpus
    assert criterion(9, "byte-identical artifacts for identical config and seed", ok,
                     f"{identical}/{total} subcommands identical, fixture corpus identical={same_corpus}")
