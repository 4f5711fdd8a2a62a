"""Plain CSV/JSON artifact writers with byte-stable float formatting."""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .dynamics import Trajectory

FLOAT_FMT = ".17g"


def fmt(x: float) -> str:
    return format(float(x), FLOAT_FMT)


def to_jsonable(obj):
    """Recursively convert numpy scalars/arrays and non-finite floats for JSON."""
    if isinstance(obj, Mapping):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


def dumps(doc) -> str:
    return json.dumps(to_jsonable(doc), indent=2) + "\n"


def write_json(path: str | Path, doc) -> Path:
    path = Path(path)
    path.write_text(dumps(doc))
    return path


def config_hash(contents: Iterable[bytes], options: Mapping) -> str:
    """SHA-256 over input file contents and the canonical option set (paths excluded)."""
    h = hashlib.sha256()
    for blob in contents:
        h.update(hashlib.sha256(blob).digest())
    h.update(json.dumps(to_jsonable(options), sort_keys=True).encode())
    return h.hexdigest()


def _header(meta: Mapping | None) -> str:
    if not meta:
        return ""
    return "# " + " ".join(f"{k}={meta[k]}" for k in sorted(meta)) + "\n"


def write_edge_csv(path: str | Path, traj: Trajectory, meta: Mapping | None = None) -> Path:
    """Long-format table ``t, edge, x, rho, phi`` over all stored times and grid points."""
    lines = [_header(meta), "t,edge,x,rho,phi\n"]
    for e in traj.graph.edges:
        xs = [fmt(v) for v in e.grid()]
        rho, phi = traj.rho[e.id], traj.phi[e.id]
        for n, t in enumerate(traj.times):
            ts = fmt(t)
            lines.extend(f"{ts},{e.id},{xs[k]},{fmt(rho[n, k])},{fmt(phi[n, k])}\n" for k in range(len(xs)))
    path = Path(path)
    path.write_text("".join(lines))
    return path


def write_node_csv(path: str | Path, trajectories: Mapping[str, Trajectory], meta: Mapping | None = None) -> Path:
    """Nodal densities and injections, one column pair per named trajectory."""
    names = list(trajectories)
    first = trajectories[names[0]]
    cols = ["t", "node"] + [f"{n}_{c}" for n in names for c in ("rho", "q")]
    lines = [_header(meta), ",".join(cols) + "\n"]
    for n, t in enumerate(first.times):
        for nid in first.graph.node_ids:
            row = [fmt(t), nid]
            for name in names:
                tr = trajectories[name]
                row += [fmt(tr.node_rho[nid][n]), fmt(tr.node_q[nid][n])] if n < len(tr.times) else ["", ""]
            lines.append(",".join(row) + "\n")
    path = Path(path)
    path.write_text("".join(lines))
    return path
