"""JSON run configurations.

A configuration names a grid, a reaction network (file or inline text),
transport coefficients, inflow data and initial data. It can be built on any
grid that shares its domain, which is how refined reference runs are made.

Example::

    {
      "grid": {"cells": [64], "lower": [0], "upper": [1],
               "faces": {"xmin": "noflux", "xmax": "noflux"}},
      "network_file": "ab.net",
      "transport": {"diffusion": [0.1, 0.2], "advection": [[0.0], [0.0]]},
      "boundary": {"inflow": {"xmin": [1.0, 0.0]}},
      "initial": {"type": "profile", "name": "cosine",
                  "base": [1.0, 1.0], "amplitude": [0.5, -0.3]},
      "cfl_safety": 0.9, "t_end": 0.05, "output_stride": 1, "seed": 0
    }
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .grid import BoundaryData, Grid, SolverConfig, State, TransportSpec
from .network import EntropyParams, detailed_balance_rhs, ReactionNetwork, parse_network, solve_detailed_balance_mu

__all__ = ["ConfigError", "RunConfig", "load_config"]


class ConfigError(ValueError):
    """Invalid or inconsistent configuration document."""


def _req(doc: dict, key: str, where: str):
    if key not in doc:
        raise ConfigError(f"{where}: missing required key {key!r}")
    return doc[key]


def _float(x, what: str) -> float:
    try:
        val = float(x)
    except (TypeError, ValueError):
        raise ConfigError(f"{what} must be a number, got {x!r}") from None
    if not math.isfinite(val):
        raise ConfigError(f"{what} must be finite")
    return val


@dataclass
class RunConfig:
    grid: Grid
    network: ReactionNetwork
    diffusion: list
    advection: list
    ellipticity: float | None
    inflow: dict[str, list[float]]
    initial: dict
    cfl_safety: float
    t_end: float
    output_stride: int
    seed: int = 0
    mu: list[float] | None = None
    experiment: dict = field(default_factory=dict)
    check: dict = field(default_factory=dict)
    base_dir: Path = Path(".")
    source: dict = field(default_factory=dict)

    # -- construction on an arbitrary (refined) grid ----------------------

    def _compatible(self, grid: Grid):
        if grid.lower != self.grid.lower or grid.upper != self.grid.upper:
            raise ConfigError("target grid covers a different domain")

    def transport_on(self, grid: Grid) -> TransportSpec:
        try:
            return TransportSpec.uniform(grid, self.diffusion, self.advection, self.ellipticity)
        except ValueError as exc:
            raise ConfigError(f"transport: {exc}") from None

    def solver_config(self, grid: Grid, output_times: Sequence[float] | None = None) -> SolverConfig:
        self._compatible(grid)
        S = self.network.n_species
        for side, g in self.inflow.items():
            if len(g) != S:
                raise ConfigError(f"boundary.inflow.{side} needs {S} values")
        try:
            cfg = SolverConfig(
                self.network,
                self.transport_on(grid),
                BoundaryData.uniform(grid, self.inflow),
                cfl_safety=self.cfl_safety,
                t_end=self.t_end,
                output_stride=self.output_stride,
                output_times=tuple(output_times) if output_times is not None else None,
            )
            cfg.validate(grid)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return cfg

    def initial_state(self, grid: Grid) -> State:
        self._compatible(grid)
        u = _initial_field(self.initial, grid, self.network, self.seed, self.base_dir)
        try:
            return State(0.0, u, grid)
        except ValueError as exc:
            raise ConfigError(f"initial: {exc}") from None

    def build(self, grid: Grid, output_times: Sequence[float] | None = None) -> tuple[SolverConfig, State]:
        return self.solver_config(grid, output_times), self.initial_state(grid)

    def entropy_params(self) -> EntropyParams:
        net = self.network
        if self.mu is not None:
            mu = np.asarray(self.mu, dtype=float)
            if mu.shape != (net.n_species,):
                raise ConfigError(f"mu needs {net.n_species} entries")
            if net.n_reactions:
                res = float(np.linalg.norm(net.stoichiometry.T @ mu - detailed_balance_rhs(net)))
            else:
                res = 0.0
            return EntropyParams(mu, res, "user_supplied")
        return solve_detailed_balance_mu(net)


def _species_values(values, S: int, what: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 0:
        arr = np.full(S, float(arr))
    if arr.shape != (S,):
        raise ConfigError(f"{what} needs {S} values")
    return arr


def _initial_field(spec: dict, grid: Grid, net: ReactionNetwork, seed: int, base: Path) -> np.ndarray:
    S = net.n_species
    kind = spec.get("type", "constant")
    shape = (S,) + grid.cells
    if kind == "constant":
        vals = _species_values(_req(spec, "values", "initial"), S, "initial.values")
        return np.broadcast_to(vals.reshape((S,) + (1,) * grid.dimension), shape).copy()
    if kind == "csv":
        path = base / _req(spec, "path", "initial")
        return read_field_csv(path, grid, net.species_names)
    if kind == "profile":
        name = spec.get("name", "cosine")
        base_v = _species_values(spec.get("base", 1.0), S, "initial.base")
        amp = _species_values(spec.get("amplitude", 0.0), S, "initial.amplitude")
        mesh = grid.mesh()
        if name == "cosine":
            mode = int(spec.get("mode", 1))
            shape_fn = np.ones(grid.cells)
            for k, x in enumerate(mesh):
                L = grid.upper[k] - grid.lower[k]
                shape_fn = shape_fn * np.cos(math.pi * mode * (x - grid.lower[k]) / L)
        elif name == "gaussian":
            center = np.asarray(spec.get("center", [0.5 * (a + b) for a, b in zip(grid.lower, grid.upper)]))
            width = _float(spec.get("width", 0.1), "initial.width")
            r2 = sum((x - c) ** 2 for x, c in zip(mesh, center))
            shape_fn = np.exp(-r2 / (2 * width * width))
        elif name == "random":
            rng = np.random.default_rng(seed)
            return base_v.reshape((S,) + (1,) * grid.dimension) * (
                1.0 + amp.reshape((S,) + (1,) * grid.dimension) * rng.uniform(-1, 1, shape)
            )
        else:
            raise ConfigError(f"unknown initial profile {name!r}")
        return base_v.reshape((S,) + (1,) * grid.dimension) + amp.reshape((S,) + (1,) * grid.dimension) * shape_fn
    raise ConfigError(f"unknown initial data type {kind!r}")


def read_field_csv(path: Path, grid: Grid, names: Sequence[str]) -> np.ndarray:
    """Read ``species, i[, j], value`` rows into a ``(S, *cells)`` field."""
    S = len(names)
    u = np.full((S,) + grid.cells, np.nan)
    index = {n: k for k, n in enumerate(names)}
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise ConfigError(f"cannot read initial data: {exc}") from None
    cols = ["i", "j"][: grid.dimension]
    for n, row in enumerate(rows, start=2):
        try:
            s = index[row["species"]]
            idx = tuple(int(row[c]) for c in cols)
            u[(s,) + idx] = float(row["value"])
        except (KeyError, ValueError, IndexError, TypeError):
            raise ConfigError(f"{path}:{n}: malformed initial-data row") from None
    if np.isnan(u).any():
        raise ConfigError(f"{path}: initial data does not cover every cell")
    return u


def _grid_from(doc: dict) -> Grid:
    cells = _req(doc, "cells", "grid")
    if isinstance(cells, int):
        cells = [cells]
    dim = doc.get("dimension", len(cells))
    if dim != len(cells):
        raise ConfigError("grid.dimension disagrees with grid.cells")
    try:
        return Grid(cells, doc.get("lower"), doc.get("upper"), doc.get("faces"))
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"grid: {exc}") from None


def parse_config(doc: dict, base_dir: Path = Path(".")) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a JSON object")
    grid = _grid_from(_req(doc, "grid", "config"))
    if "network" in doc:
        text = doc["network"]
    else:
        path = base_dir / _req(doc, "network_file", "config")
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read network file: {exc}") from None
    net = parse_network(text)
    S = net.n_species
    tr = doc.get("transport", {})
    diffusion = tr.get("diffusion", [1.0] * S)
    if not isinstance(diffusion, list) or len(diffusion) != S:
        raise ConfigError(f"transport.diffusion needs one entry per species ({S})")
    advection = tr.get("advection", [[0.0] * grid.dimension] * S)
    if not isinstance(advection, list) or len(advection) != S:
        raise ConfigError(f"transport.advection needs one vector per species ({S})")
    ell = tr.get("ellipticity")
    inflow = {k: [_float(x, f"boundary.inflow.{k}") for x in v] for k, v in doc.get("boundary", {}).get("inflow", {}).items()}
    cfl = _float(doc.get("cfl_safety", 0.9), "cfl_safety")
    if not (0 < cfl <= 1):
        raise ConfigError("cfl_safety must lie in (0, 1]")
    t_end = _float(_req(doc, "t_end", "config"), "t_end")
    if t_end < 0:
        raise ConfigError("t_end must be nonnegative")
    stride = doc.get("output_stride", 1)
    if not isinstance(stride, int) or stride < 1:
        raise ConfigError("output_stride must be a positive integer")
    seed = doc.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed must be a nonnegative integer")
    cfg = RunConfig(
        grid=grid,
        network=net,
        diffusion=diffusion,
        advection=advection,
        ellipticity=None if ell is None else _float(ell, "transport.ellipticity"),
        inflow=inflow,
        initial=doc.get("initial", {"type": "constant", "values": [1.0] * S}),
        cfl_safety=cfl,
        t_end=t_end,
        output_stride=stride,
        seed=seed,
        mu=doc.get("mu"),
        experiment=doc.get("experiment", {}),
        check=doc.get("check", {}),
        base_dir=base_dir,
        source=doc,
    )
    # fail early on anything that only shows up when building
    cfg.build(grid)
    return cfg


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        doc: Any = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return parse_config(doc, path.parent)
