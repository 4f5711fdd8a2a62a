"""Command-line front end.

Exit codes: 0 success, 1 parse or configuration error, 2 solver failure,
3 invariant violation, 4 ordering crossing found. Diagnostics go to standard
error as one JSON object; data artifacts are written to ``--out``.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .dynamics import SolverError, convergence_study, mass_audit, newton_summary, simulate
from .export import config_hash, to_jsonable, write_edge_csv, write_json, write_node_csv
from .monitor import run_nmp
from .netgraph import ParseError, parse_network, parse_scenario
from .ordering import DEFAULT_TOL, PreconditionError, check_theorem_hypotheses, compare, first_crossing, \
    vertex_simultaneity
from .robust import DEFAULT_BOX, EnvelopeError, check_envelope_bounds, check_density_bounds, parse_envelope_scenario, \
    parse_schedule, search_controls, simulate_envelopes

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_INVARIANT, EXIT_CROSSING = 0, 1, 2, 3, 4
MASS_TOL = 1e-6


class ConfigError(ValueError):
    pass


class InvariantViolation(RuntimeError):
    def __init__(self, message: str, detail: dict):
        self.detail = detail
        super().__init__(message)


@dataclass
class RunConfig:
    subcommand: str
    network: Path
    scenarios: list[Path]
    dt: float | None
    tol: float
    out: Path
    seed: int
    options: dict = field(default_factory=dict)
    blobs: list[bytes] = field(default_factory=list)

    def meta(self) -> dict:
        opts = {"subcommand": self.subcommand, "dt": self.dt, "tol": self.tol, "seed": self.seed, **self.options}
        return {"config_hash": config_hash(self.blobs, opts), "seed": self.seed, "version": __version__}


def _read(path: Path) -> bytes:
    if not path.is_file():
        raise ConfigError(f"file not found: {path}")
    return path.read_bytes()


def build_config(args: argparse.Namespace) -> RunConfig:
    if args.dt is not None and not (math.isfinite(args.dt) and args.dt > 0.0):
        raise ConfigError(f"--dt must be > 0, got {args.dt}")
    if not (math.isfinite(args.tol) and args.tol >= 0.0):
        raise ConfigError(f"--tol must be >= 0, got {args.tol}")
    scenarios = [Path(args.scenario)]
    if getattr(args, "scenario2", None):
        scenarios.append(Path(args.scenario2))
    options = {}
    blobs = [_read(Path(args.network))] + [_read(p) for p in scenarios]
    for key in ("set", "levels", "kind", "budget", "no_policy", "check_nominal", "epsilon", "window", "free"):
        if hasattr(args, key):
            options[key] = getattr(args, key)
    if getattr(args, "template", None):
        blobs.append(_read(Path(args.template)))
        options["template"] = True
    return RunConfig(args.command, Path(args.network), scenarios, args.dt, args.tol, Path(args.out), args.seed,
                     options, blobs)


def _time_step(cfg: RunConfig, scenario) -> float:
    dt = cfg.dt if cfg.dt is not None else scenario.dt
    if dt is None:
        raise ConfigError("no time step: pass --dt or set 'dt' in the scenario")
    if not (math.isfinite(dt) and dt > 0.0):
        raise ConfigError(f"time step must be > 0, got {dt}")
    return dt


def _load_pair(cfg: RunConfig):
    graph = parse_network(cfg.blobs[0].decode())
    a = parse_scenario(cfg.blobs[1].decode(), graph)
    if len(cfg.blobs) < 3:
        raise ConfigError("this subcommand needs --scenario2")
    b = parse_scenario(cfg.blobs[2].decode(), graph)
    return graph, a, b


# -- subcommands --------------------------------------------------------------------

def cmd_simulate(cfg: RunConfig) -> int:
    graph = parse_network(cfg.blobs[0].decode())
    scn = parse_scenario(cfg.blobs[1].decode(), graph)
    dt = _time_step(cfg, scn)
    eps = cfg.options.get("epsilon") or 0.0
    traj = simulate(graph, scn, dt, epsilon=eps)
    meta = cfg.meta()
    audit = mass_audit(traj)
    summary = {**meta, "dt": dt, "epsilon": eps, "mass_audit": audit, "newton": newton_summary(traj)}
    cfg.out.mkdir(parents=True, exist_ok=True)
    write_edge_csv(cfg.out / "trajectory_edges.csv", traj, meta)
    write_node_csv(cfg.out / "trajectory_nodes.csv", {"run": traj}, meta)
    write_json(cfg.out / "summary.json", summary)
    if audit["rel_error"] > MASS_TOL:
        raise InvariantViolation("mass audit failed", {"rel_error": audit["rel_error"], "tolerance": MASS_TOL})
    return EXIT_OK


def _parse_set(cfg: RunConfig):
    raw = cfg.options.get("set")
    return None if raw is None else [s for s in raw.split(",") if s]


def _pair_analysis(cfg: RunConfig):
    graph, a, b = _load_pair(cfg)
    dt = _time_step(cfg, a)
    hyp = check_theorem_hypotheses(graph, a, b, _parse_set(cfg))
    ta = simulate(graph, a, dt)
    tb = simulate(graph, b, dt)
    report = compare(ta, tb, cfg.tol)
    try:
        event = first_crossing(ta, tb, cfg.tol, window=cfg.options.get("window") or 3)
        pre = None
    except PreconditionError as exc:
        event, pre = None, str(exc)
    return graph, ta, tb, hyp, report, event, pre, dt


def cmd_compare(cfg: RunConfig) -> int:
    graph, ta, tb, hyp, report, event, pre, dt = _pair_analysis(cfg)
    doc = {**cfg.meta(), "dt": dt, "hypotheses": hyp.to_dict(), "ordering": report.to_dict(),
           "crossing": event.to_dict() if event else None}
    if pre:
        doc["precondition"] = pre
    cfg.out.mkdir(parents=True, exist_ok=True)
    write_json(cfg.out / "compare.json", doc)
    write_node_csv(cfg.out / "compare_nodes.csv", {"a": ta, "b": tb}, cfg.meta())
    if pre:
        raise InvariantViolation("initial data are not ordered", {"precondition": pre})
    return EXIT_OK if report.holds else EXIT_CROSSING


def cmd_crossing(cfg: RunConfig) -> int:
    graph, ta, tb, hyp, report, event, pre, dt = _pair_analysis(cfg)
    doc = {**cfg.meta(), "dt": dt, "crossing": None, "simultaneity": [], "worst_margin": report.worst_margin}
    if event is not None:
        doc["crossing"] = event.to_dict()
        doc["simultaneity"] = [r.to_dict() for r in vertex_simultaneity(event, ta, tb, cfg.tol)]
    if pre:
        doc["precondition"] = pre
    cfg.out.mkdir(parents=True, exist_ok=True)
    write_json(cfg.out / "crossing.json", doc)
    if pre:
        raise InvariantViolation("initial data are not ordered", {"precondition": pre})
    return EXIT_CROSSING if event is not None else EXIT_OK


def _envelope_inputs(cfg: RunConfig):
    graph = parse_network(cfg.blobs[0].decode())
    env_scn = parse_envelope_scenario(cfg.blobs[1].decode(), graph)
    return graph, env_scn, _time_step(cfg, env_scn.scenario)


def cmd_robust(cfg: RunConfig) -> int:
    graph, es, dt = _envelope_inputs(cfg)
    bundle = simulate_envelopes(graph, es.scenario, es.envelopes, dt=dt, tol=cfg.tol)
    meta = cfg.meta()
    doc = {**meta, "dt": dt, "sandwich": bundle.sandwich.to_dict(), "bounds": None, "feasible": None}
    if es.rho_min is not None:
        rep = check_envelope_bounds(bundle, es.rho_min, es.rho_max, include_nominal=cfg.options.get("check_nominal"))
        doc["bounds"] = {k: v.to_dict() for k, v in rep.items()}
        doc["feasible"] = bundle.feasible
    cfg.out.mkdir(parents=True, exist_ok=True)
    write_json(cfg.out / "robust.json", doc)
    write_node_csv(cfg.out / "envelope_nodes.csv",
                   {"nominal": bundle.nominal, "upper": bundle.upper, "lower": bundle.lower}, meta)
    if not bundle.sandwich.holds:
        raise InvariantViolation("sandwich property violated", bundle.sandwich.to_dict())
    if doc["feasible"] and "nominal" in (bundle.bounds or {}) and not bundle.bounds["nominal"].feasible:
        raise InvariantViolation("feasible envelopes but infeasible nominal run", doc["bounds"])
    return EXIT_OK


def cmd_nmp(cfg: RunConfig) -> int:
    graph, es, dt = _envelope_inputs(cfg)
    if not es.q_rt:
        raise ConfigError("the scenario has no 'q_rt' realtime record")
    policy = not cfg.options.get("no_policy")
    log = run_nmp(graph, es.scenario, es.envelopes, es.q_rt, dt, tol=cfg.tol, policy=policy)
    meta = cfg.meta()
    cfg.out.mkdir(parents=True, exist_ok=True)
    write_json(cfg.out / "nmp.json", {**meta, "dt": dt, **log.to_dict()})
    write_node_csv(cfg.out / "nmp_nodes.csv", {"realtime": log.trajectory}, meta)
    if log.failure is not None:
        raise SolverError(log.failure["message"], time=log.failure["time"], location=log.failure["location"],
                          residual=log.failure["residual"])
    if not log.sandwich.holds:
        raise InvariantViolation("realtime trajectory left the envelope band", log.sandwich.to_dict())
    return EXIT_OK


def cmd_converge(cfg: RunConfig) -> int:
    graph = parse_network(cfg.blobs[0].decode())
    scn = parse_scenario(cfg.blobs[1].decode(), graph)
    dt = _time_step(cfg, scn)
    levels = cfg.options.get("levels") or 3
    kinds = ["space", "time"] if cfg.options.get("kind") == "both" else [cfg.options.get("kind") or "space"]
    doc = {**cfg.meta(), "dt": dt, "levels": levels}
    for kind in kinds:
        doc[kind] = convergence_study(graph, scn, levels, kind, dt).to_dict()
    cfg.out.mkdir(parents=True, exist_ok=True)
    write_json(cfg.out / "convergence.json", doc)
    return EXIT_OK


def cmd_search(cfg: RunConfig) -> int:
    graph, es, dt = _envelope_inputs(cfg)
    if es.rho_min is None:
        raise ConfigError("search needs 'bounds' in the envelope scenario")
    if "template" not in cfg.options:
        raise ConfigError("search needs --template")
    template = parse_schedule(cfg.blobs[-1].decode(), DEFAULT_BOX)
    unknown = sorted((set(template.lo) | set(template.hi)) - set(graph.edge_ids))
    if unknown:
        raise ConfigError(f"template names unknown edge(s) {unknown}")
    result = search_controls(graph, es.scenario, es.envelopes, template, (es.rho_min, es.rho_max),
                             budget=cfg.options.get("budget") or 200, dt=dt, free=cfg.options.get("free") or "both")
    meta = cfg.meta()
    cfg.out.mkdir(parents=True, exist_ok=True)
    write_json(cfg.out / "schedule.json", result.schedule.to_dict())
    write_json(cfg.out / "search.json", {**meta, "dt": dt, **result.to_dict()})
    if result.feasible:
        bundle = simulate_envelopes(graph, es.scenario, es.envelopes, result.schedule, dt)
        nominal = check_density_bounds(bundle.nominal, es.rho_min, es.rho_max)
        if not nominal.feasible:
            raise InvariantViolation("feasible envelopes but infeasible nominal run", nominal.to_dict())
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "compare": cmd_compare, "crossing": cmd_crossing, "robust": cmd_robust,
            "nmp": cmd_nmp, "converge": cmd_converge, "search": cmd_search}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def make_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="monoflow", description="Transport on metric graphs: simulation and order-preservation checks.")
    p.add_argument("--version", action="version", version=f"monoflow {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--network", required=True, help="network JSON file")
        sp.add_argument("--scenario", required=True, help="scenario JSON file")
        sp.add_argument("--dt", type=float, default=None, help="time step (default: scenario's 'dt')")
        sp.add_argument("--tol", type=float, default=DEFAULT_TOL, help="ordering tolerance")
        sp.add_argument("--out", default="out", help="output directory")
        sp.add_argument("--seed", type=int, default=0, help="seed recorded in every artifact")

    sp = sub.add_parser("simulate", help="solve one scenario")
    common(sp)
    sp.add_argument("--epsilon", type=float, default=0.0, help="perturbation size")
    for name, text in (("compare", "ordering check of two scenarios"), ("crossing", "first crossing analysis")):
        sp = sub.add_parser(name, help=text)
        common(sp)
        sp.add_argument("--scenario2", required=True, help="scenario expected to stay below --scenario")
        sp.add_argument("--set", default=None, help="comma-separated injection node set for the hypothesis check")
        sp.add_argument("--window", type=int, default=3, help="persistence window in steps")
    sp = sub.add_parser("robust", help="envelope runs and sandwich check")
    common(sp)
    sp.add_argument("--check-nominal", action="store_true", help="also bound-check the nominal run")
    sp = sub.add_parser("nmp", help="replay a realtime record under the monitoring policy")
    common(sp)
    sp.add_argument("--no-policy", action="store_true", help="disable clamping (ablation)")
    sp = sub.add_parser("converge", help="self-convergence study")
    common(sp)
    sp.add_argument("--levels", type=int, default=3)
    sp.add_argument("--kind", choices=["space", "time", "both"], default="space")
    sp = sub.add_parser("search", help="heuristic compatibility-factor search")
    common(sp)
    sp.add_argument("--template", required=True, help="control schedule JSON used as the starting point")
    sp.add_argument("--budget", type=int, default=200, help="maximum candidate evaluations")
    sp.add_argument("--free", choices=["both", "hi", "lo"], default="both", help="which factors the search may move")
    return p


def _diagnose(kind: str, exc: Exception, extra: dict | None = None) -> None:
    doc = {"status": kind, "message": str(exc)}
    if hasattr(exc, "to_dict"):
        doc.update(exc.to_dict())
    if extra:
        doc.update(extra)
    sys.stderr.write(json.dumps(to_jsonable(doc), sort_keys=True) + "\n")


def main(argv: list[str] | None = None) -> int:
    try:
        args = make_parser().parse_args(argv)
        if getattr(args, "levels", 3) < 3:
            raise ConfigError("--levels must be >= 3")
        if getattr(args, "budget", 1) < 0:
            raise ConfigError("--budget must be >= 0")
        cfg = build_config(args)
        return COMMANDS[args.command](cfg)
    except (ParseError, EnvelopeError, ConfigError, KeyError, ValueError) as exc:
        _diagnose("config_error", exc)
        return EXIT_CONFIG
    except SolverError as exc:
        _diagnose("solver_failure", exc)
        return EXIT_SOLVER
    except InvariantViolation as exc:
        _diagnose("invariant_violation", exc, {"detail": exc.detail})
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
