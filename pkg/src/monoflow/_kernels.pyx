# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled per-edge assembly kernel; mirrors ``_kernels_py.assemble_edge``."""

from libc.math cimport fabs, pow, sqrt

cdef enum:
    HEAT = 0
    POROUS = 1
    GAS = 2


cdef inline void _closure(int kind, double c0, double c1, double u, double v,
                          double* f, double* fu, double* fv) noexcept nogil:
    cdef double c, w, s
    if kind == HEAT:
        f[0] = c0 * v
        fu[0] = 0.0
        fv[0] = c0
    elif kind == POROUS:
        s = c0 * c1 * pow(u, c1 - 1.0)
        f[0] = s * v
        fv[0] = s
        if c1 == 1.0:
            fu[0] = 0.0
        else:
            fu[0] = c0 * c1 * (c1 - 1.0) * pow(u, c1 - 2.0) * v
    else:
        c = sqrt(2.0 * u / c0)
        w = fabs(v)
        f[0] = c * v / sqrt(w + c1)
        fu[0] = f[0] / (2.0 * u)
        fv[0] = c * (w + 2.0 * c1) / (2.0 * pow(w + c1, 1.5))


def assemble_edge(int kind, double c0, double c1,
                  const double[::1] rho, const double[::1] rho_old,
                  double dx, double dt, double eps,
                  double[::1] F, double[::1] dFl, double[::1] dFr,
                  double[::1] res, double[::1] jl, double[::1] jd, double[::1] ju):
    cdef Py_ssize_t n = rho.shape[0] - 1
    cdef Py_ssize_t k
    cdef double u, v, f, fu, fv
    with nogil:
        for k in range(n):
            u = 0.5 * (rho[k] + rho[k + 1])
            v = (rho[k + 1] - rho[k]) / dx
            _closure(kind, c0, c1, u, v, &f, &fu, &fv)
            F[k] = f
            dFl[k] = 0.5 * fu - fv / dx
            dFr[k] = 0.5 * fu + fv / dx
        for k in range(1, n):
            res[k - 1] = rho[k] - rho_old[k] - dt * ((F[k] - F[k - 1]) / dx + eps)
            jl[k - 1] = dt * dFl[k - 1] / dx
            jd[k - 1] = 1.0 - dt * (dFl[k] - dFr[k - 1]) / dx
            ju[k - 1] = -dt * dFr[k] / dx
