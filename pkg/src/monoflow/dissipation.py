"""Dissipation closures ``f(t, u, v)`` relating flux to density and its gradient.

The edge flux is ``phi = -f(t, rho, d rho/dx)``. Every kind here is strictly
increasing in ``v``, which is what makes the edge equation parabolic.

Kinds
-----
heat
    ``f = D v``
porous
    ``f = D m u**(m-1) v``, i.e. the flux of ``D d(u**m)/dx``
gas
    ``f = sgn(v) sqrt(2 u s(|v|) / beta)`` with ``s(w) = w**2 / (w + nu)``.
    Algebraically this is ``sqrt(2 u / beta) * v / sqrt(|v| + nu)``, which is
    exactly odd in ``v`` in floating point.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping

import numpy as np

KINDS = ("heat", "porous", "gas")
KIND_CODES = {"heat": 0, "porous": 1, "gas": 2}

_PARAM_KEYS = {"heat": ("D",), "porous": ("D", "m"), "gas": ("beta", "nu")}
_DEFAULTS = {"gas": {"nu": 1e-6}}


class DissipationError(ValueError):
    pass


@dataclass(frozen=True)
class DissipationSpec:
    kind: str
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DissipationError(f"unknown dissipation kind {self.kind!r} (expected one of {', '.join(KINDS)})")
        params = dict(_DEFAULTS.get(self.kind, {}))
        params.update({k: float(v) for k, v in dict(self.params).items()})
        expected = _PARAM_KEYS[self.kind]
        unknown = sorted(set(params) - set(expected))
        if unknown:
            raise DissipationError(f"{self.kind}: unknown parameter(s) {unknown}")
        missing = [k for k in expected if k not in params]
        if missing:
            raise DissipationError(f"{self.kind}: missing parameter(s) {missing}")
        for key in expected:
            value = params[key]
            if not np.isfinite(value):
                raise DissipationError(f"{self.kind}: parameter {key} must be finite")
            if key == "m":
                if value < 1.0:
                    raise DissipationError(f"porous: exponent m must be >= 1, got {value}")
            elif value <= 0.0:
                raise DissipationError(f"{self.kind}: parameter {key} must be > 0, got {value}")
        object.__setattr__(self, "params", MappingProxyType(params))

    @property
    def code(self) -> int:
        return KIND_CODES[self.kind]

    def coefficients(self) -> tuple[float, float]:
        """The two numeric parameters in the order the compiled kernels expect."""
        p = self.params
        if self.kind == "heat":
            return p["D"], 0.0
        if self.kind == "porous":
            return p["D"], p["m"]
        return p["beta"], p["nu"]

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": dict(self.params)}

    def __hash__(self):
        return hash((self.kind, tuple(sorted(self.params.items()))))

    def __eq__(self, other):
        if not isinstance(other, DissipationSpec):
            return NotImplemented
        return self.kind == other.kind and dict(self.params) == dict(other.params)


def _check_density(u):
    if np.any(np.asarray(u) <= 0.0):
        raise DissipationError("density argument u must be > 0")


def _scalarize(out):
    return float(out) if np.ndim(out) == 0 else out


def eval(spec: DissipationSpec, t, u, v):  # noqa: A001 - mirrors the mathematical name
    """Evaluate ``f(t, u, v)``. Accepts scalars or broadcastable arrays."""
    _check_density(u)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    p = spec.params
    if spec.kind == "heat":
        out = p["D"] * v
    elif spec.kind == "porous":
        m = p["m"]
        out = p["D"] * m * u ** (m - 1.0) * v
    else:
        out = np.sqrt(2.0 * u / p["beta"]) * v / np.sqrt(np.abs(v) + p["nu"])
    return _scalarize(out * np.ones(np.broadcast(u, v).shape))


def partials(spec: DissipationSpec, t, u, v):
    """Analytic ``(df/du, df/dv)``."""
    _check_density(u)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    shape = np.broadcast(u, v).shape
    p = spec.params
    if spec.kind == "heat":
        fu = np.zeros(shape)
        fv = np.full(shape, p["D"])
    elif spec.kind == "porous":
        D, m = p["D"], p["m"]
        fv = D * m * u ** (m - 1.0) * np.ones(shape)
        if m == 1.0:
            fu = np.zeros(shape)
        else:
            fu = D * m * (m - 1.0) * u ** (m - 2.0) * v * np.ones(shape)
    else:
        beta, nu = p["beta"], p["nu"]
        c = np.sqrt(2.0 * u / beta)
        w = np.abs(v)
        f = c * v / np.sqrt(w + nu)
        fu = f / (2.0 * u) * np.ones(shape)
        fv = c * (w + 2.0 * nu) / (2.0 * (w + nu) ** 1.5) * np.ones(shape)
    return _scalarize(fu), _scalarize(fv)


def min_slope(spec: DissipationSpec, u_range=(0.1, 10.0), v_range=(-10.0, 10.0), n: int = 41) -> float:
    """Smallest sampled ``df/dv`` over a ``u x v`` grid; positive for every admissible spec."""
    uu, vv = np.meshgrid(np.linspace(*u_range, n), np.linspace(*v_range, n))
    return float(np.min(partials(spec, 0.0, uu, vv)[1]))
