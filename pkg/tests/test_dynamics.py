import numpy as np
import pytest

from monoflow import dynamics as dy, fixtures as fx
from monoflow.dissipation import DissipationSpec
from monoflow.netgraph import EdgeSpec, MetricGraph, NodeSpec, Scenario
from monoflow.series import PiecewiseLinear as PL


def test_layout_counts():
    g = fx.path_network(("density", "density"), cells=2)
    s = fx.constant_state(g)
    assert dy.DiscreteSystem(g, s, 0.1).n_unknowns == 5
    g = fx.star_network(3, cells=10)
    sys_ = dy.DiscreteSystem(g, fx.constant_state(g), 0.1)
    assert sys_.n_unknowns == 37
    assert sys_.jacobian(sys_.assemble(sys_.initial_state(), sys_.initial_state(), 0.1, 0.1, 0.0,
                                       sys_.injection_means(0.0, 0.1))[1]).shape == (37, 37)


def test_time_grid_shortens_last_step():
    t = dy.time_grid(1.0, 0.3)
    assert t[-1] == pytest.approx(1.0)
    assert np.diff(t)[-1] == pytest.approx(0.1)


def test_invalid_time_step():
    g, s = fx.steady_heat(cells=10)
    with pytest.raises(ValueError):
        dy.DiscreteSystem(g, s, 0.0)


def test_steady_linear_profile():
    g, s = fx.steady_heat()
    tr = dy.simulate(g, s)
    x = g.edges[0].grid()
    assert np.max(np.abs(tr.rho["a-b"][-1] - (2.0 - x))) <= 1e-6
    # flux of the linear profile is D * (rho_L - rho_0) / L = -1 at both ends, so phi = 1
    np.testing.assert_allclose(tr.phi["a-b"][-1], 1.0, atol=1e-6)


@pytest.mark.parametrize("kind", ["heat", "porous", "gas"])
def test_constant_state_is_fixed_point(kind):
    g = fx.star_network(3, dissipation=kind, cells=6)
    s = fx.constant_state(g, 1.7)
    tr = dy.simulate(g, s)
    for arr in tr.rho.values():
        np.testing.assert_allclose(arr, 1.7, rtol=0, atol=1e-12)
    assert np.all(tr.iterations <= 1)


def test_gas_mirror_symmetry():
    spec = DissipationSpec("gas", {"beta": 1.0, "nu": 1e-2})
    g = MetricGraph((NodeSpec("a", "density"), NodeSpec("b", "density")), (EdgeSpec("a", "b", 1.0, 20, spec),))
    x = np.linspace(0.0, 1.0, 81)
    prof = 2.0 - x + 0.3 * np.sin(np.pi * x) + 0.1 * np.sin(3 * np.pi * x)
    one = {"a-b": PL.constant(1.0)}
    zero = {"a-b": PL.constant(0.0)}

    def run(profile, left, right):
        s = Scenario(0.5, {"a-b": PL(np.column_stack([x, profile]))}, zero, {},
                     {"a": PL.constant(left), "b": PL.constant(right)}, one, one, 0.01)
        return dy.simulate(g, s)

    fwd = run(prof, 2.0, 1.0)
    rev = run(prof[::-1], 1.0, 2.0)
    assert np.max(np.abs(fwd.rho["a-b"] - rev.rho["a-b"][:, ::-1])) <= 1e-10
    assert np.max(np.abs(fwd.phi["a-b"] + rev.phi["a-b"][:, ::-1])) <= 1e-9


@pytest.mark.parametrize("builder", ["steady", "smooth", "nmp"])
def test_mass_audit(builder):
    if builder == "steady":
        g, s = fx.steady_heat(cells=20, horizon=1.0)
    elif builder == "smooth":
        g, s = fx.smooth_heat()
    else:
        c = fx.nmp_case("inside")
        g, s = c.graph, c.scenario
    for eps in (0.0, 1e-3):
        audit = dy.mass_audit(dy.simulate(g, s, epsilon=eps))
        assert audit["rel_error"] <= 1e-9
        assert audit["source"] == pytest.approx(eps * s.horizon * g.total_length())


def test_mass_audit_random(rng):
    for _ in range(5):
        g = fx.random_graph(rng)
        tr = dy.simulate(g, fx.random_scenario(g, rng))
        assert dy.mass_audit(tr)["rel_error"] <= 1e-9


def test_invariant_residuals_small(rng):
    g = fx.random_graph(rng)
    tr = dy.simulate(g, fx.random_scenario(g, rng))
    summary = dy.newton_summary(tr)
    assert summary["compatibility_residual_max"] <= 1e-10
    assert summary["balance_residual_max"] <= 1e-8
    assert summary["min_density"] > 0.0


def test_perturbation_monotone_and_convergent():
    g, s = fx.smooth_heat()
    base = dy.simulate(g, s)
    sups = []
    for eps in (1e-2, 1e-3, 1e-4):
        tr = dy.simulate(g, s, epsilon=eps)
        for eid in base.rho:
            assert np.min(tr.rho[eid] - base.rho[eid]) >= -1e-9
        sups.append(max(np.max(np.abs(tr.rho[k] - base.rho[k])) for k in base.rho))
    assert sups[0] > sups[1] > sups[2]


def test_negative_epsilon_rejected():
    with pytest.raises(ValueError):
        dy.PerturbationSetting(-1.0)


def test_step_and_advance_agree():
    g, s = fx.smooth_heat()
    sys_ = dy.discretize(g, s, s.dt)
    x0 = sys_.initial_state()
    assert np.array_equal(dy.step(sys_, x0, 0.0), dy.advance(sys_, x0, 0.0).state)


def test_negative_density_reported():
    g = fx.path_network(("density", "injection"), cells=8)
    s = fx.constant_state(g, 1.0).with_injection({"n1": PL([[0.0, 0.0], [0.1, -50.0], [1.0, -50.0]])})
    with pytest.raises(dy.SolverError) as exc:
        dy.simulate(g, s, 0.05)
    d = exc.value.to_dict()
    assert d["error"] == "solver" and d["time"] is not None and d["location"]


def test_convergence_orders():
    g, s = fx.smooth_heat()
    space = dy.convergence_study(g, s, levels=3, kind="space")
    time = dy.convergence_study(g, s, levels=3, kind="time")
    assert 1.7 <= space.observed_order <= 2.3
    assert 0.8 <= time.observed_order <= 1.2
    assert space.monotone and time.monotone and not space.noise_floor


def test_convergence_needs_three_levels():
    g, s = fx.smooth_heat()
    with pytest.raises(ValueError):
        dy.convergence_study(g, s, levels=2)
