"""Pure numpy implementation of the finite-volume kernels.

Shapes follow the compiled module exactly: fields are ``(S, nx, ny)`` (1D
grids use ``ny = 1`` and ``has_y = 0``), face arrays carry one extra entry
along their normal axis, and boundary descriptors are ``kind[side, j]`` with
side 0 the lower and 1 the upper end.
"""

import numpy as np

NOFLUX, INFLOW, OUTFLOW = 0, 1, 2


def _axis_fluxes(u, D, b, kind, g, h):
    # u (S, n, m); D, b (S, n+1, m); kind (2, m); g (S, 2, m)
    S, n, m = u.shape
    J = np.zeros((S, n + 1, m))
    if n > 1:
        bi = b[:, 1:-1]
        upwind = np.where(bi > 0, bi * u[:, :-1], bi * u[:, 1:])
        J[:, 1:-1] = -D[:, 1:-1] * (u[:, 1:] - u[:, :-1]) / h + upwind
    lo, hi = kind[0], kind[1]
    J[:, 0] = np.where(lo == INFLOW, g[:, 0], np.where(lo == OUTFLOW, b[:, 0] * u[:, 0], 0.0))
    J[:, -1] = np.where(hi == INFLOW, -g[:, 1], np.where(hi == OUTFLOW, b[:, -1] * u[:, -1], 0.0))
    return J


def face_fluxes(u, Dx, bx, xkind, xg, hx, Dy, by, ykind, yg, hy, has_y):
    """Return the x- and y-face flux arrays (y is None without a second axis)."""
    Jx = _axis_fluxes(u, Dx, bx, xkind, xg, hx)
    Jy = None
    if has_y:
        ut = np.swapaxes(u, 1, 2)
        Jy = _axis_fluxes(ut, np.swapaxes(Dy, 1, 2), np.swapaxes(by, 1, 2), ykind, yg, hy)
        Jy = np.ascontiguousarray(np.swapaxes(Jy, 1, 2))
    return Jx, Jy


def transport_rhs(u, Dx, bx, xkind, xg, hx, Dy, by, ykind, yg, hy, has_y, out):
    Jx, Jy = face_fluxes(u, Dx, bx, xkind, xg, hx, Dy, by, ykind, yg, hy, has_y)
    out[...] = (Jx[:, :-1] - Jx[:, 1:]) / hx
    if has_y:
        out += (Jy[:, :, :-1] - Jy[:, :, 1:]) / hy
    return out


def reaction_rhs(u, alpha, beta, kf, kb, out):
    # u (S, N); alpha, beta (S, R) integer; out (S, N)
    out[...] = 0.0
    if alpha.shape[1] == 0:
        return out
    for n in range(alpha.shape[1]):
        rf = np.full(u.shape[1], kf[n])
        rb = np.full(u.shape[1], kb[n])
        for j in range(u.shape[0]):
            for _ in range(alpha[j, n]):
                rf = rf * u[j]
            for _ in range(beta[j, n]):
                rb = rb * u[j]
        w = rf - rb
        for i in range(u.shape[0]):
            nu = beta[i, n] - alpha[i, n]
            if nu:
                out[i] += nu * w
    return out
