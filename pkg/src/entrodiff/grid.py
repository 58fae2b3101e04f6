"""Structured 1D/2D grids, transport coefficients, boundary data and states.

Fields are stored with species on axis 0 followed by the cell axes, i.e.
``(S, nx)`` in 1D and ``(S, nx, ny)`` in 2D. Boundary faces are grouped by
side (``xmin``, ``xmax``, ``ymin``, ``ymax``); each face carries one tag.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence

import numpy as np

from .network import ReactionNetwork

log = logging.getLogger(__name__)

__all__ = [
    "BoundaryData",
    "Grid",
    "INFLOW",
    "NOFLUX",
    "OUTFLOW",
    "SIDES",
    "SolverConfig",
    "State",
    "Trajectory",
    "TransportSpec",
]

NOFLUX, INFLOW, OUTFLOW = 0, 1, 2
TAG_CODES = {"noflux": NOFLUX, "inflow": INFLOW, "outflow": OUTFLOW}
TAG_NAMES = {v: k for k, v in TAG_CODES.items()}
SIDES = ("xmin", "xmax", "ymin", "ymax")


def _side_axis(side: str) -> tuple[int, int]:
    """(axis, outward normal sign) of a side."""
    return SIDES.index(side) // 2, (-1 if side.endswith("min") else 1)


class Grid:
    """Uniform cell-centered grid on an axis-aligned box."""

    def __init__(
        self,
        cells: Sequence[int],
        lower: Sequence[float] | None = None,
        upper: Sequence[float] | None = None,
        faces: Mapping[str, str | Sequence[str]] | None = None,
    ):
        cells = tuple(int(n) for n in cells)
        if len(cells) not in (1, 2) or min(cells) < 1:
            raise ValueError(f"cells must be 1 or 2 positive integers, got {cells}")
        d = len(cells)
        lower = tuple(float(x) for x in (lower if lower is not None else (0.0,) * d))
        upper = tuple(float(x) for x in (upper if upper is not None else (1.0,) * d))
        if len(lower) != d or len(upper) != d or any(b <= a for a, b in zip(lower, upper)):
            raise ValueError("extents must satisfy lower < upper on every axis")
        self.cells = cells
        self.lower = lower
        self.upper = upper
        faces = dict(faces or {})
        unknown = set(faces) - set(self.sides)
        if unknown:
            raise ValueError(f"unknown boundary sides {sorted(unknown)} for a {d}D grid")
        tags = {}
        for side in self.sides:
            n = self.side_size(side)
            spec = faces.get(side, "noflux")
            names = [spec] * n if isinstance(spec, str) else list(spec)
            if len(names) != n:
                raise ValueError(f"side {side} has {n} faces, got {len(names)} tags")
            try:
                codes = np.array([TAG_CODES[t] for t in names], dtype=np.int8)
            except KeyError as exc:
                raise ValueError(f"unknown face tag {exc.args[0]!r}") from None
            codes.setflags(write=False)
            tags[side] = codes
        self.tags = tags

    @property
    def dimension(self) -> int:
        return len(self.cells)

    @property
    def sides(self) -> tuple[str, ...]:
        return SIDES[: 2 * self.dimension]

    @property
    def h(self) -> tuple[float, ...]:
        return tuple((b - a) / n for a, b, n in zip(self.lower, self.upper, self.cells))

    @property
    def n_cells(self) -> int:
        return math.prod(self.cells)

    @property
    def cell_volume(self) -> float:
        return math.prod(self.h)

    def face_area(self, axis: int) -> float:
        """Measure of one face normal to ``axis`` (1 in 1D)."""
        return math.prod(h for k, h in enumerate(self.h) if k != axis)

    def side_size(self, side: str) -> int:
        axis, _ = _side_axis(side)
        return math.prod(n for k, n in enumerate(self.cells) if k != axis)

    def centers(self, axis: int) -> np.ndarray:
        h = self.h[axis]
        return self.lower[axis] + h * (np.arange(self.cells[axis]) + 0.5)

    def mesh(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*(self.centers(k) for k in range(self.dimension)), indexing="ij"))

    def has_tag(self, code: int) -> bool:
        return any(np.any(t == code) for t in self.tags.values())

    @property
    def closed(self) -> bool:
        return not (self.has_tag(INFLOW) or self.has_tag(OUTFLOW))

    def refine(self, r: int) -> "Grid":
        if r < 1:
            raise ValueError("refinement factor must be >= 1")
        # a side's faces run along the other axis, so only 2D sides gain faces
        rep = r if self.dimension == 2 else 1
        faces = {side: [TAG_NAMES[int(c)] for c in np.repeat(t, rep)] for side, t in self.tags.items()}
        return Grid([n * r for n in self.cells], self.lower, self.upper, faces)

    def __eq__(self, other):
        if not isinstance(other, Grid):
            return NotImplemented
        return (
            self.cells == other.cells
            and self.lower == other.lower
            and self.upper == other.upper
            and all(np.array_equal(self.tags[s], other.tags[s]) for s in self.sides)
        )

    def __hash__(self):
        return hash((self.cells, self.lower, self.upper))

    def __repr__(self):
        return f"Grid(cells={self.cells}, lower={self.lower}, upper={self.upper})"

    def to_json(self) -> dict:
        return {
            "cells": list(self.cells),
            "lower": list(self.lower),
            "upper": list(self.upper),
            "faces": {
                s: (TAG_NAMES[int(t[0])] if np.all(t == t[0]) else [TAG_NAMES[int(c)] for c in t])
                for s, t in self.tags.items()
            },
        }


def _face_shape(grid: Grid, axis: int) -> tuple[int, ...]:
    return tuple(n + 1 if k == axis else n for k, n in enumerate(grid.cells))


def side_faces(arr: np.ndarray, side: str) -> np.ndarray:
    """View of the boundary faces of ``side`` in a face array ``(S, *face_shape)``."""
    axis, sign = _side_axis(side)
    idx = 0 if sign < 0 else -1
    return np.take(arr, idx, axis=axis + 1)


@dataclass(eq=False)
class TransportSpec:
    """Per-species diffusion tensors (cells) and normal advection velocities (faces).

    ``diffusion`` has shape ``(S, *cells, d, d)``; ``advection[k]`` has shape
    ``(S, *face_shape_k)`` and holds the velocity component along axis ``k``
    on the faces normal to that axis.
    """

    diffusion: np.ndarray
    advection: tuple[np.ndarray, ...]
    ellipticity: float

    @classmethod
    def uniform(cls, grid: Grid, diffusion, advection=None, ellipticity: float | None = None):
        """Constant-in-space coefficients: one scalar or ``d x d`` tensor and one vector per species."""
        d = grid.dimension
        tensors = []
        for a in diffusion:
            a = np.asarray(a, dtype=float)
            tensors.append(a * np.eye(d) if a.ndim == 0 else a.reshape(d, d))
        S = len(tensors)
        D = np.empty((S,) + grid.cells + (d, d))
        for i, a in enumerate(tensors):
            D[i] = a
        if advection is None:
            advection = [np.zeros(d)] * S
        if len(advection) != S:
            raise ValueError("advection needs one vector per species")
        faces = []
        for k in range(d):
            arr = np.empty((S,) + _face_shape(grid, k))
            for i, b in enumerate(advection):
                b = np.broadcast_to(np.asarray(b, dtype=float), (d,))
                arr[i] = b[k]
            faces.append(arr)
        if ellipticity is None:
            ellipticity = float(min(np.linalg.eigvalsh(0.5 * (a + a.T)).min() for a in tensors))
        return cls(D, tuple(faces), ellipticity)

    @property
    def n_species(self) -> int:
        return int(self.diffusion.shape[0])

    @property
    def has_cross_diffusion(self) -> bool:
        d = self.diffusion.shape[-1]
        if d == 1:
            return False
        return bool(np.any(self.diffusion[..., 0, 1] != 0) or np.any(self.diffusion[..., 1, 0] != 0))

    def validate(self, grid: Grid, n_species: int | None = None) -> None:
        d = grid.dimension
        S = self.n_species
        if n_species is not None and S != n_species:
            raise ValueError(f"transport has {S} species, network has {n_species}")
        if self.diffusion.shape != (S,) + grid.cells + (d, d):
            raise ValueError(f"diffusion shape {self.diffusion.shape} does not match grid {grid.cells}")
        if len(self.advection) != d:
            raise ValueError("need one advection face array per axis")
        for k, b in enumerate(self.advection):
            if b.shape != (S,) + _face_shape(grid, k):
                raise ValueError(f"advection[{k}] has shape {b.shape}")
            if not np.all(np.isfinite(b)):
                raise ValueError("advection must be finite")
        if not self.ellipticity > 0:
            raise ValueError("ellipticity floor must be positive")
        A = self.diffusion
        if not np.allclose(A, np.swapaxes(A, -1, -2), rtol=0, atol=1e-14 * max(1.0, np.abs(A).max())):
            raise ValueError("diffusion tensors must be symmetric")
        lam = np.linalg.eigvalsh(A).min()
        if lam < self.ellipticity * (1 - 1e-12):
            raise ValueError(f"diffusion violates ellipticity floor: min eigenvalue {lam:.3e} < {self.ellipticity:.3e}")
        for side in grid.sides:
            axis, sign = _side_axis(side)
            out = grid.tags[side] == OUTFLOW
            if np.any(out):
                bn = sign * side_faces(self.advection[axis], side).reshape(S, -1)
                if np.any(bn[:, out] < 0):
                    raise ValueError(f"outflow faces on {side} need n.b >= 0")

    def to_json(self) -> dict:
        return {
            "diffusion": self.diffusion.tolist(),
            "advection": [b.tolist() for b in self.advection],
            "ellipticity": self.ellipticity,
        }


@dataclass(eq=False)
class BoundaryData:
    """Inflow flux densities ``g`` per side, shape ``(S, faces on side)``."""

    g: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def none(cls) -> "BoundaryData":
        return cls({})

    @classmethod
    def uniform(cls, grid: Grid, per_side: Mapping[str, Sequence[float]]):
        g = {}
        for side, values in per_side.items():
            vals = np.asarray(values, dtype=float).reshape(-1, 1)
            g[side] = np.repeat(vals, grid.side_size(side), axis=1)
        return cls(g)

    def on(self, side: str, grid: Grid, S: int) -> np.ndarray:
        if side in self.g:
            return self.g[side]
        return np.zeros((S, grid.side_size(side)))

    def validate(self, grid: Grid, S: int) -> None:
        for side, g in self.g.items():
            if side not in grid.sides:
                raise ValueError(f"boundary data for unknown side {side}")
            if g.shape != (S, grid.side_size(side)):
                raise ValueError(f"inflow data on {side} has shape {g.shape}")
            if not (np.all(np.isfinite(g)) and np.all(g >= 0)):
                raise ValueError("inflow data must be finite and nonnegative")


@dataclass(frozen=True, eq=False)
class State:
    """Cell averages at time ``t``; ``dt`` is the last accepted step size."""

    t: float
    u: np.ndarray
    grid: Grid
    dt: float = 0.0
    rejections: int = 0
    steps: int = 0

    def __post_init__(self):
        u = np.array(self.u, dtype=float)
        if u.ndim != self.grid.dimension + 1 or u.shape[1:] != self.grid.cells:
            raise ValueError(f"field shape {u.shape} does not match grid {self.grid.cells}")
        if np.any(u < 0) or not np.all(np.isfinite(u)):
            raise ValueError("state must be finite and nonnegative")
        u.setflags(write=False)
        object.__setattr__(self, "u", u)

    @property
    def n_species(self) -> int:
        return int(self.u.shape[0])

    def mass(self) -> np.ndarray:
        """Total amount of each species."""
        return self.u.reshape(self.n_species, -1).sum(axis=1) * self.grid.cell_volume


@dataclass(eq=False)
class SolverConfig:
    network: ReactionNetwork
    transport: TransportSpec
    boundary: BoundaryData
    cfl_safety: float = 0.9
    t_end: float = 1.0
    output_stride: int = 1
    output_times: tuple[float, ...] | None = None

    def __post_init__(self):
        if not (0 < self.cfl_safety <= 1):
            raise ValueError("cfl_safety must lie in (0, 1]")
        if not (self.t_end >= 0 and math.isfinite(self.t_end)):
            raise ValueError("t_end must be finite and nonnegative")
        if int(self.output_stride) < 1:
            raise ValueError("output_stride must be a positive integer")
        if self.output_times is not None:
            times = tuple(sorted(float(t) for t in self.output_times if 0 < t < self.t_end))
            self.output_times = times
        if self.transport.has_cross_diffusion:
            log.warning("off-diagonal diffusion: positivity of the scheme is not guaranteed")

    def validate(self, grid: Grid) -> None:
        S = self.network.n_species
        self.transport.validate(grid, S)
        self.boundary.validate(grid, S)


class Trajectory(Sequence[State]):
    """Time-ordered snapshots produced by :func:`entrodiff.solver.run`."""

    def __init__(self, states: Sequence[State]):
        self._states = list(states)
        if not self._states:
            raise ValueError("a trajectory needs at least one state")
        times = [s.t for s in self._states]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("trajectory times must be strictly increasing")
        grids = {id(s.grid) for s in self._states}
        if len(grids) > 1 and any(s.grid != self._states[0].grid for s in self._states):
            raise ValueError("trajectory states live on different grids")

    def __getitem__(self, i):
        if isinstance(i, slice):
            return self._states[i]
        return self._states[i]

    def __len__(self):
        return len(self._states)

    def __iter__(self) -> Iterator[State]:
        return iter(self._states)

    @property
    def grid(self) -> Grid:
        return self._states[0].grid

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self._states])

    def pairs(self) -> Iterator[tuple[State, State]]:
        return zip(self._states[:-1], self._states[1:])
