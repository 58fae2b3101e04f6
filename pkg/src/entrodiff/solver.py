"""Explicit finite-volume time stepping for reaction-diffusion-advection systems.

The spatial operator is assembled once per (grid, config) pair into an
:class:`Operator`; the hot loops (face fluxes, mass-action sources) run in
whichever kernel backend :mod:`entrodiff._kernels` selected.
"""

from __future__ import annotations

import logging
import math
import weakref

import numpy as np

from . import _kernels
from .discrete import FaceCalculus
from .grid import INFLOW, Grid, SolverConfig, State, Trajectory, side_faces
from .network import lipschitz_bound

log = logging.getLogger(__name__)

__all__ = [
    "Operator",
    "StiffnessFailure",
    "restrict",
    "run",
    "sqrt_gradient_dissipation",
    "stable_dt",
    "step",
]

DT_UNDERFLOW = 1e-14


class StiffnessFailure(RuntimeError):
    """The positivity retry loop drove the step size below the underflow floor."""

    def __init__(self, t: float, dt: float):
        super().__init__(f"step size {dt:.3e} underflowed at t={t:.6g}")
        self.t = t
        self.dt = dt


def _as3(a: np.ndarray, grid: Grid) -> np.ndarray:
    """(S, *cells) -> (S, nx, ny) with ny = 1 in 1D."""
    if grid.dimension == 1:
        a = a[..., None]
    return np.ascontiguousarray(a, dtype=float)


class Operator:
    """Precomputed face coefficients for one grid and one solver configuration."""

    def __init__(self, grid: Grid, cfg: SolverConfig, backend=None):
        cfg.validate(grid)
        self.grid = grid
        self.cfg = cfg
        self.backend = backend if backend is not None else _kernels.backend
        net, tr = cfg.network, cfg.transport
        S = net.n_species
        self.S = S
        d = grid.dimension
        self.calc = FaceCalculus(grid, tr.diffusion)

        def normal_faces(k):
            # interior faces get the arithmetic mean of the adjacent cells' A_kk,
            # boundary faces carry no diffusive flux in the two-point part
            shape = list((S,) + grid.cells)
            shape[k + 1] += 1
            D = np.zeros(shape)
            inner = [slice(None)] * (d + 1)
            inner[k + 1] = slice(1, -1)
            D[tuple(inner)] = self.calc.mean(tr.diffusion[..., k, k], k)
            return D

        def kinds(lo, hi):
            return np.ascontiguousarray(np.stack([grid.tags[lo], grid.tags[hi]]), dtype=np.int8)

        def inflow(lo, hi):
            g = np.stack([cfg.boundary.on(lo, grid, S), cfg.boundary.on(hi, grid, S)], axis=1)
            mask = np.stack([grid.tags[lo], grid.tags[hi]]) == INFLOW
            return np.ascontiguousarray(np.where(mask[None], g, 0.0))

        self.hx = grid.h[0]
        self.Dx = _as3(normal_faces(0), grid)
        self.bx = _as3(tr.advection[0], grid)
        self.xkind = kinds("xmin", "xmax")
        self.xg = inflow("xmin", "xmax")
        if d == 2:
            self.has_y = 1
            self.hy = grid.h[1]
            self.Dy = _as3(normal_faces(1), grid)
            self.by = _as3(tr.advection[1], grid)
            self.ykind = kinds("ymin", "ymax")
            self.yg = inflow("ymin", "ymax")
        else:
            self.has_y = 0
            self.hy = 1.0
            self.Dy = self.by = self.ykind = self.yg = None
        self.cross = tr.has_cross_diffusion
        self.alpha = np.ascontiguousarray(net.alpha, dtype=np.int64)
        self.beta = np.ascontiguousarray(net.beta, dtype=np.int64)
        self.kf = np.ascontiguousarray(net.k_forward, dtype=float)
        self.kb = np.ascontiguousarray(net.k_backward, dtype=float)
        self.max_diffusion_norm = float(np.linalg.norm(tr.diffusion, ord=2, axis=(-2, -1)).max())
        self.max_speed = float(max(np.abs(b).max(initial=0.0) for b in tr.advection))

    def _args(self, u3):
        return (u3, self.Dx, self.bx, self.xkind, self.xg, self.hx,
                self.Dy, self.by, self.ykind, self.yg, self.hy, self.has_y)

    def face_fluxes(self, u: np.ndarray):
        """Total normal fluxes (positive along +axis) on every face."""
        Jx, Jy = self.backend.face_fluxes(*self._args(_as3(u, self.grid)))
        if self.grid.dimension == 1:
            return (Jx[..., 0],)
        return (Jx, Jy)

    def transport(self, u: np.ndarray) -> np.ndarray:
        u3 = _as3(u, self.grid)
        out = np.empty_like(u3)
        self.backend.transport_rhs(*self._args(u3), out)
        out = out.reshape(u.shape)
        if self.cross:
            out += self._cross_divergence(u)
        return out

    def _cross_divergence(self, u):
        out = np.zeros_like(u)
        for i in range(self.S):
            for k in range(2):
                C = self.calc.cross_flux(i, u[i], k)
                if C is None:
                    continue
                pad = [(0, 0), (0, 0)]
                pad[k] = (1, 1)
                C = np.pad(C, pad)
                lo = np.take(C, np.arange(C.shape[k] - 1), axis=k)
                hi = np.take(C, np.arange(1, C.shape[k]), axis=k)
                out[i] += (lo - hi) / self.grid.h[k]
        return out

    def reaction(self, u: np.ndarray) -> np.ndarray:
        flat = np.ascontiguousarray(u.reshape(self.S, -1), dtype=float)
        out = np.empty_like(flat)
        self.backend.reaction_rhs(flat, self.alpha, self.beta, self.kf, self.kb, out)
        return out.reshape(u.shape)

    def rhs(self, u: np.ndarray) -> np.ndarray:
        return self.transport(u) + self.reaction(u)


_operator_cache: "weakref.WeakKeyDictionary[SolverConfig, dict]" = weakref.WeakKeyDictionary()


def operator_for(grid: Grid, cfg: SolverConfig) -> Operator:
    per_cfg = _operator_cache.setdefault(cfg, {})
    key = (grid.cells, grid.lower, grid.upper, id(grid))
    op = per_cfg.get(key)
    if op is None or op.grid != grid:
        op = Operator(grid, cfg)
        per_cfg[key] = op
    return op


def stable_dt(u: np.ndarray, op: Operator) -> float:
    """Unscaled stability bound: the smallest of the per-mechanism step limits."""
    grid = op.grid
    hmin = min(grid.h)
    limits = [hmin * hmin / (2 * grid.dimension * op.max_diffusion_norm)]
    if op.max_speed > 0:
        limits.append(hmin / op.max_speed)
    L = lipschitz_bound(op.cfg.network, 2.0 * float(u.max(initial=0.0)))
    if L > 0:
        limits.append(1.0 / L)
    return min(limits)


def _advance(state: State, cfg: SolverConfig, op: Operator, t_stop: float) -> State:
    u = state.u
    dt = cfg.cfl_safety * stable_dt(u, op)
    remaining = t_stop - state.t
    lands = dt >= remaining
    if lands:
        dt = remaining
    rhs = op.rhs(u)
    floor = DT_UNDERFLOW * cfg.t_end
    rejections = 0
    while True:
        new = u + dt * rhs
        if np.all(new >= 0):
            break
        rejections += 1
        dt *= 0.5
        lands = False
        if dt < floor:
            raise StiffnessFailure(state.t, dt)
    t = t_stop if lands else state.t + dt
    if not lands and t >= t_stop:
        t = t_stop
    return State(t, new, state.grid, dt=dt, rejections=state.rejections + rejections, steps=state.steps + 1)


def step(state: State, cfg: SolverConfig) -> State:
    """Advance one explicit Euler step, never past ``cfg.t_end``."""
    if state.t >= cfg.t_end:
        return state
    return _advance(state, cfg, operator_for(state.grid, cfg), cfg.t_end)


def run(initial: State, cfg: SolverConfig) -> Trajectory:
    """Integrate from ``initial`` to ``cfg.t_end`` and collect snapshots.

    Snapshots are taken at the start, after every ``output_stride``-th
    accepted step, at each requested output time (steps are shortened to land
    on them), and at the end.
    """
    op = operator_for(initial.grid, cfg)
    snaps = [initial]
    state = initial
    targets = list(cfg.output_times or ()) + [cfg.t_end]
    ti = 0
    while state.t < cfg.t_end:
        while targets[ti] <= state.t:
            ti += 1
        state = _advance(state, cfg, op, targets[ti])
        hit = state.t == targets[ti]
        if hit or state.steps % cfg.output_stride == 0:
            snaps.append(state)
    return Trajectory(snaps)


def sqrt_gradient_dissipation(state: State, cfg: SolverConfig) -> np.ndarray:
    """Per-species discrete ``4 * int A grad sqrt(u) . grad sqrt(u)``."""
    calc = operator_for(state.grid, cfg).calc
    r = np.sqrt(state.u)
    return np.array([4.0 * calc.dirichlet_form(i, 1.0, r[i], r[i]) for i in range(state.n_species)])


def restrict(fine: State, coarse_grid: Grid) -> State:
    """Volume-weighted average of ``fine`` onto the nested ``coarse_grid``."""
    fg = fine.grid
    if fg.dimension != coarse_grid.dimension or fg.lower != coarse_grid.lower or fg.upper != coarse_grid.upper:
        raise ValueError("grids cover different domains")
    factors = []
    for nf, nc in zip(fg.cells, coarse_grid.cells):
        if nf % nc:
            raise ValueError(f"{nf} fine cells are not a refinement of {nc} coarse cells")
        factors.append(nf // nc)
    u = fine.u
    shape = [u.shape[0]]
    for nc, r in zip(coarse_grid.cells, factors):
        shape += [nc, r]
    blocks = u.reshape(shape)
    axes = tuple(2 + 2 * k for k in range(len(factors)))
    coarse = blocks.mean(axis=axes) if math.prod(factors) > 1 else u.copy()
    return State(fine.t, coarse, coarse_grid, dt=fine.dt, rejections=fine.rejections, steps=fine.steps)


def boundary_side_flux(op: Operator, u: np.ndarray, side: str) -> np.ndarray:
    """Outward total flux through each face of ``side``, per species ``(S, faces)``."""
    axis = ("xmin", "xmax", "ymin", "ymax").index(side) // 2
    J = op.face_fluxes(u)[axis]
    sign = -1.0 if side.endswith("min") else 1.0
    return sign * side_faces(J, side).reshape(op.S, -1)
