# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled finite-volume kernels (same contract as ``_fallback``)."""

import numpy as np
cimport numpy as cnp

cnp.import_array()

cdef enum:
    NOFLUX = 0
    INFLOW = 1
    OUTFLOW = 2


cdef inline double _interior(double ul, double ur, double D, double b, double h) nogil:
    cdef double adv
    if b > 0:
        adv = b * ul
    else:
        adv = b * ur
    return -D * (ur - ul) / h + adv


def face_fluxes(const double[:, :, ::1] u,
                const double[:, :, ::1] Dx, const double[:, :, ::1] bx,
                const signed char[:, ::1] xkind, const double[:, :, ::1] xg, double hx,
                Dy, by, ykind, yg, double hy, int has_y):
    cdef Py_ssize_t S = u.shape[0], nx = u.shape[1], ny = u.shape[2]
    cdef Py_ssize_t s, i, j
    Jx_arr = np.zeros((S, nx + 1, ny))
    cdef double[:, :, ::1] Jx = Jx_arr
    cdef const double[:, :, ::1] Dyv
    cdef const double[:, :, ::1] byv
    cdef const signed char[:, ::1] ykv
    cdef const double[:, :, ::1] ygv
    cdef double[:, :, ::1] Jy
    with nogil:
        for s in range(S):
            for j in range(ny):
                for i in range(1, nx):
                    Jx[s, i, j] = _interior(u[s, i - 1, j], u[s, i, j], Dx[s, i, j], bx[s, i, j], hx)
                if xkind[0, j] == INFLOW:
                    Jx[s, 0, j] = xg[s, 0, j]
                elif xkind[0, j] == OUTFLOW:
                    Jx[s, 0, j] = bx[s, 0, j] * u[s, 0, j]
                if xkind[1, j] == INFLOW:
                    Jx[s, nx, j] = -xg[s, 1, j]
                elif xkind[1, j] == OUTFLOW:
                    Jx[s, nx, j] = bx[s, nx, j] * u[s, nx - 1, j]
    if not has_y:
        return Jx_arr, None
    Dyv = Dy
    byv = by
    ykv = ykind
    ygv = yg
    Jy_arr = np.zeros((S, nx, ny + 1))
    Jy = Jy_arr
    with nogil:
        for s in range(S):
            for i in range(nx):
                for j in range(1, ny):
                    Jy[s, i, j] = _interior(u[s, i, j - 1], u[s, i, j], Dyv[s, i, j], byv[s, i, j], hy)
                if ykv[0, i] == INFLOW:
                    Jy[s, i, 0] = ygv[s, 0, i]
                elif ykv[0, i] == OUTFLOW:
                    Jy[s, i, 0] = byv[s, i, 0] * u[s, i, 0]
                if ykv[1, i] == INFLOW:
                    Jy[s, i, ny] = -ygv[s, 1, i]
                elif ykv[1, i] == OUTFLOW:
                    Jy[s, i, ny] = byv[s, i, ny] * u[s, i, ny - 1]
    return Jx_arr, Jy_arr


def transport_rhs(u, Dx, bx, xkind, xg, double hx, Dy, by, ykind, yg, double hy, int has_y,
                  double[:, :, ::1] out):
    Jx_arr, Jy_arr = face_fluxes(u, Dx, bx, xkind, xg, hx, Dy, by, ykind, yg, hy, has_y)
    cdef double[:, :, ::1] Jx = Jx_arr
    cdef double[:, :, ::1] Jy
    cdef Py_ssize_t S = out.shape[0], nx = out.shape[1], ny = out.shape[2]
    cdef Py_ssize_t s, i, j
    with nogil:
        for s in range(S):
            for i in range(nx):
                for j in range(ny):
                    out[s, i, j] = (Jx[s, i, j] - Jx[s, i + 1, j]) / hx
    if has_y:
        Jy = Jy_arr
        with nogil:
            for s in range(S):
                for i in range(nx):
                    for j in range(ny):
                        out[s, i, j] += (Jy[s, i, j] - Jy[s, i, j + 1]) / hy
    return np.asarray(out)


def reaction_rhs(const double[:, ::1] u, const long long[:, ::1] alpha, const long long[:, ::1] beta,
                 const double[::1] kf, const double[::1] kb, double[:, ::1] out):
    cdef Py_ssize_t S = u.shape[0], N = u.shape[1], R = alpha.shape[1]
    cdef Py_ssize_t n, c, j, i
    cdef long long p
    cdef double rf, rb, w
    with nogil:
        for i in range(S):
            for c in range(N):
                out[i, c] = 0.0
        for n in range(R):
            for c in range(N):
                rf = kf[n]
                rb = kb[n]
                for j in range(S):
                    for p in range(alpha[j, n]):
                        rf = rf * u[j, c]
                    for p in range(beta[j, n]):
                        rb = rb * u[j, c]
                w = rf - rb
                for i in range(S):
                    if beta[i, n] != alpha[i, n]:
                        out[i, c] += (beta[i, n] - alpha[i, n]) * w
    return np.asarray(out)
