from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

from entrodiff import BoundaryData, Grid, SolverConfig, State, TransportSpec, parse_network

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"
sys.path.insert(0, str(Path(__file__).parent))

AB = "species: A B\nreaction: A <-> B ; kf=1 kb=1\n"
AB2 = "species: A B\nreaction: A <-> B ; kf=2 kb=1\n"
ABC = "species: A B C\nreaction: A + B <-> C ; kf=2 kb=0.5\n"
TRIANGLE = (
    "species: A B C\n"
    "reaction: A <-> B ; kf=1 kb=1\n"
    "reaction: B <-> C ; kf=1 kb=1\n"
    "reaction: C <-> A ; kf=2 kb=1\n"
)

# networks with detailed balance used by several property tests
BALANCED = {
    "ab": AB2,
    "abc": ABC,
    "dimer": "species: A D\nreaction: 2 A <-> D ; kf=3 kb=0.7\n",
    "chain": "species: A B C\nreaction: A <-> B ; kf=1.5 kb=0.5\nreaction: B <-> C ; kf=0.25 kb=2\n",
    "cycle": (
        "species: A B C\n"
        "reaction: A <-> B ; kf=2 kb=1\n"
        "reaction: B <-> C ; kf=3 kb=1\n"
        "reaction: C <-> A ; kf=1 kb=6\n"
    ),
    "michaelis": "species: E S C P\nreaction: E + S <-> C ; kf=4 kb=1\nreaction: C <-> E + P ; kf=2 kb=0.5\n",
}


@pytest.fixture
def net_ab():
    return parse_network(AB)


def closed_config(net, grid, D, cfl=0.9, t_end=0.1, stride=1, advection=None, output_times=None):
    transport = TransportSpec.uniform(grid, D, advection)
    return SolverConfig(net, transport, BoundaryData.none(), cfl_safety=cfl, t_end=t_end,
                        output_stride=stride, output_times=output_times)


def cosine_state(grid, base, amp, mode=1):
    x = grid.mesh()[0]
    base = np.asarray(base, float)[:, None]
    amp = np.asarray(amp, float)[:, None]
    shape = np.cos(np.pi * mode * x)
    if grid.dimension == 2:
        base, amp = base[..., None], amp[..., None]
    return State(0.0, base + amp * shape, grid)


def line(n, **faces):
    return Grid([n], faces=faces or None)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
