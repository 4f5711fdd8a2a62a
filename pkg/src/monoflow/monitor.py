"""Nodal Monitoring Policy: replay a realtime injection record against precomputed envelopes.

Nodes whose realtime injection leaves the envelope are watched. When the
nodal density of a node above its upper injection bound rises past the upper
envelope density (or one below its lower bound drops past the lower envelope
density), that node's injection is reset to the envelope series for the rest
of the horizon. Detection is done on a tentative step; on a crossing the step
is re-solved with the clamp in force, so the accepted trajectory never leaves
the band by more than the detection tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .dynamics import DiscreteSystem, NewtonSettings, SolverError, Trajectory, _Recorder, advance
from .netgraph import MetricGraph, Scenario
from .ordering import DEFAULT_TOL, OrderingReport, compare
from .robust import EnvelopeBundle, Envelopes, simulate_envelopes
from .series import PiecewiseLinear, merged_breakpoints, negative_intervals


@dataclass
class ClampAction:
    node: str
    bound: str  # "upper" or "lower"
    time: float  # the injection equals the envelope series from here on
    t_c: float  # detected nodal crossing time (within the clamped step)
    series: str  # "q_hi" or "q_lo"

    def to_dict(self) -> dict:
        return {"node": self.node, "bound": self.bound, "time": self.time, "t_c": self.t_c, "series": self.series}


@dataclass
class NodalCrossing:
    node: str
    bound: str
    t_c: float
    step: int
    excess: float

    def to_dict(self) -> dict:
        return {"node": self.node, "bound": self.bound, "t_c": self.t_c, "step": self.step, "excess": self.excess}


@dataclass
class SandwichReport:
    holds: bool
    upper: OrderingReport
    lower: OrderingReport

    def to_dict(self) -> dict:
        return {"holds": self.holds, "upper_minus_realtime": self.upper.to_dict(),
                "realtime_minus_lower": self.lower.to_dict()}


@dataclass
class NMPLog:
    upper_violators: dict[str, list[tuple[float, float]]]
    lower_violators: dict[str, list[tuple[float, float]]]
    crossings: list[NodalCrossing]
    clamps: list[ClampAction]
    trajectory: Trajectory
    policy_active: bool
    both_bounds: list[str] = field(default_factory=list)
    failure: dict | None = None
    sandwich: SandwichReport | None = None

    def events(self) -> list[dict]:
        """Crossings and clamps in time order (crossing before the clamp it triggers)."""
        ev = [dict(type="crossing", **c.to_dict()) for c in self.crossings]
        ev += [dict(type="clamp", **c.to_dict()) for c in self.clamps]
        return sorted(ev, key=lambda d: (d.get("t_c", 0.0), d["node"], d["type"] != "crossing"))

    def to_dict(self) -> dict:
        return {
            "policy_active": self.policy_active,
            "upper_violators": {k: [list(iv) for iv in v] for k, v in sorted(self.upper_violators.items())},
            "lower_violators": {k: [list(iv) for iv in v] for k, v in sorted(self.lower_violators.items())},
            "both_bounds": self.both_bounds,
            "events": self.events(),
            "failure": self.failure,
            "sandwich": self.sandwich.to_dict() if self.sandwich else None,
        }


def _violations(record: Mapping[str, PiecewiseLinear], bound: Mapping[str, PiecewiseLinear], horizon: float,
                sign: float) -> dict[str, list[tuple[float, float]]]:
    out = {}
    for nid in sorted(record):
        grid = merged_breakpoints([record[nid], bound[nid]], 0.0, horizon)
        d = sign * (bound[nid](grid) - record[nid](grid))
        iv = negative_intervals(d, grid)
        if iv:
            out[nid] = iv
    return out


def _entered(intervals: list[tuple[float, float]], t_end: float) -> bool:
    return any(a < t_end for a, _ in intervals)


def run_nmp(graph: MetricGraph, scenario: Scenario, envelopes: Envelopes, q_rt: Mapping[str, PiecewiseLinear],
            dt: float | None = None, bundle: EnvelopeBundle | None = None, tol: float = DEFAULT_TOL,
            policy: bool = True, newton: NewtonSettings | None = None) -> NMPLog:
    """Step-synchronous replay of ``q_rt`` with the monitoring policy (``policy=False`` disables clamping)."""
    dt = dt if dt is not None else scenario.dt
    if bundle is None:
        bundle = simulate_envelopes(graph, scenario, envelopes, dt=dt, newton=newton)
    upper_traj, lower_traj = bundle.upper, bundle.lower
    T = scenario.horizon
    inj = graph.injection_nodes()
    q_rt = {nid: q_rt.get(nid, envelopes.q_hat[nid]) for nid in inj}
    up_viol = _violations(q_rt, envelopes.q_hi, T, 1.0)
    lo_viol = _violations(q_rt, envelopes.q_lo, T, -1.0)
    both = sorted(set(up_viol) & set(lo_viol))

    realtime = bundle.scenario.with_injection(q_rt)
    system = DiscreteSystem(graph, realtime, dt, newton)
    if len(system.times) != len(upper_traj.times) or not np.allclose(system.times, upper_traj.times, rtol=0, atol=1e-12):
        raise ValueError("envelope trajectories were computed on a different time grid")
    rec = _Recorder(system, 0.0)
    x = system.initial_state()
    rec.initial(x)
    clamped: dict[str, str] = {}
    detected: set[tuple[str, str]] = set()
    crossings: list[NodalCrossing] = []
    clamps: list[ClampAction] = []
    failure = None
    ts = system.times
    for n in range(1, len(ts)):
        t0, t1 = ts[n - 1], ts[n]
        h = t1 - t0
        try:
            while True:
                qbar = {}
                for nid in inj:
                    series = envelopes.q_hi[nid] if clamped.get(nid) == "upper" else \
                        envelopes.q_lo[nid] if clamped.get(nid) == "lower" else q_rt[nid]
                    qbar[nid] = series.mean(t0, t1)
                res = advance(system, x, t0, h, 0.0, qbar)
                new_hits = []
                for nid in inj:
                    if nid in clamped:
                        continue
                    i = system.node_index[nid]
                    checks = []
                    if nid in up_viol and _entered(up_viol[nid], t1):
                        checks.append(("upper", res.state[i] - upper_traj.node_rho[nid][n],
                                       x[i] - upper_traj.node_rho[nid][n - 1]))
                    if nid in lo_viol and _entered(lo_viol[nid], t1):
                        checks.append(("lower", lower_traj.node_rho[nid][n] - res.state[i],
                                       lower_traj.node_rho[nid][n - 1] - x[i]))
                    for bound, excess, prev in checks:
                        if excess > tol and (nid, bound) not in detected:
                            w = (tol - prev) / (excess - prev) if excess != prev else 1.0
                            t_c = float(t0 + min(max(w, 0.0), 1.0) * h)
                            new_hits.append(NodalCrossing(nid, bound, t_c, n, float(excess)))
                crossings.extend(new_hits)
                detected.update((hit.node, hit.bound) for hit in new_hits)
                if not policy or not new_hits:
                    break
                for hit in new_hits:
                    if hit.node not in clamped:
                        clamped[hit.node] = hit.bound
                        clamps.append(ClampAction(hit.node, hit.bound, float(t0), hit.t_c,
                                                  "q_hi" if hit.bound == "upper" else "q_lo"))
        except SolverError as exc:
            failure = exc.to_dict()
            break
        rec.record(n, res, x, h, qbar)
        x = res.state
    traj = rec.trajectory()
    log = NMPLog(up_viol, lo_viol, crossings, clamps, traj, policy, both, failure)
    if failure is None:
        log.sandwich = verify_corollary(log, upper_traj, lower_traj, tol)
    return log


def verify_corollary(log: NMPLog, upper: Trajectory, lower: Trajectory, tol: float = DEFAULT_TOL) -> SandwichReport:
    """Both-sided ordering ``lower <= realtime <= upper`` over the whole horizon."""
    up = compare(upper, log.trajectory, tol)
    lo = compare(log.trajectory, lower, tol)
    report = SandwichReport(up.holds and lo.holds, up, lo)
    log.sandwich = report
    return report
