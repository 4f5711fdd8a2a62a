"""Pure-numpy version of the per-edge assembly kernel."""

import numpy as np

HEAT, POROUS, GAS = 0, 1, 2


def _closure(kind, c0, c1, u, v):
    if kind == HEAT:
        return c0 * v, np.zeros_like(u), np.full_like(u, c0)
    if kind == POROUS:
        s = c0 * c1 * np.power(u, c1 - 1.0)
        fu = np.zeros_like(u) if c1 == 1.0 else c0 * c1 * (c1 - 1.0) * np.power(u, c1 - 2.0) * v
        return s * v, fu, s
    c = np.sqrt(2.0 * u / c0)
    w = np.abs(v)
    f = c * v / np.sqrt(w + c1)
    return f, f / (2.0 * u), c * (w + 2.0 * c1) / (2.0 * np.power(w + c1, 1.5))


def assemble_edge(kind, c0, c1, rho, rho_old, dx, dt, eps, F, dFl, dFr, res, jl, jd, ju):
    u = 0.5 * (rho[:-1] + rho[1:])
    v = (rho[1:] - rho[:-1]) / dx
    f, fu, fv = _closure(kind, c0, c1, u, v)
    F[:] = f
    dFl[:] = 0.5 * fu - fv / dx
    dFr[:] = 0.5 * fu + fv / dx
    res[:] = rho[1:-1] - rho_old[1:-1] - dt * ((F[1:] - F[:-1]) / dx + eps)
    jl[:] = dt * dFl[:-1] / dx
    jd[:] = 1.0 - dt * (dFl[1:] - dFr[:-1]) / dx
    ju[:] = -dt * dFr[1:] / dx
