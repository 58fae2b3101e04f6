import math
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import AB, ABC, BALANCED, closed_config, cosine_state, line
from entrodiff import (
    BoundaryData,
    Grid,
    SolverConfig,
    State,
    StiffnessFailure,
    Trajectory,
    TransportSpec,
    parse_network,
    restrict,
    run,
    solve_detailed_balance_mu,
    sqrt_gradient_dissipation,
    step,
)
from entrodiff._kernels import _fallback, available_backends
from entrodiff.solver import Operator, boundary_side_flux, stable_dt

SINGLE = "species: U\n"


# ------------------------------------------------------------------ grid


def test_grid_basics():
    g = Grid([4, 2], [0, 0], [2, 1])
    assert g.dimension == 2 and g.h == (0.5, 0.5) and g.n_cells == 8
    assert g.cell_volume == 0.25 and g.face_area(0) == 0.5
    assert g.side_size("xmin") == 2 and g.side_size("ymax") == 4
    assert g.closed
    assert Grid.__eq__(g, Grid([4, 2], [0, 0], [2, 1]))


@pytest.mark.parametrize(
    "kwargs",
    [
        {"cells": [0]},
        {"cells": [2, 2, 2]},
        {"cells": [2], "lower": [1], "upper": [0]},
        {"cells": [2], "faces": {"ymin": "noflux"}},
        {"cells": [2], "faces": {"xmin": "sticky"}},
        {"cells": [2, 3], "faces": {"xmin": ["inflow", "noflux"]}},
    ],
)
def test_grid_rejects(kwargs):
    with pytest.raises(ValueError):
        Grid(**kwargs)


def test_every_face_has_one_tag():
    g = Grid([3, 2], faces={"xmin": ["inflow", "outflow"], "ymax": "outflow"})
    for side in g.sides:
        assert g.tags[side].shape == (g.side_size(side),)
    assert g.tags["xmin"].tolist() == [1, 2]
    assert not g.closed


@pytest.mark.parametrize("cells", [[5], [3, 4]])
def test_refine_keeps_domain_and_tags(cells):
    faces = {"xmin": "inflow", "xmax": "outflow"}
    g = Grid(cells, faces=faces)
    f = g.refine(3)
    assert f.cells == tuple(3 * n for n in cells) and f.lower == g.lower and f.upper == g.upper
    assert np.all(f.tags["xmin"] == 1) and np.all(f.tags["xmax"] == 2)
    assert g.refine(1) == g
    with pytest.raises(ValueError):
        g.refine(0)


def test_transport_validation():
    g = Grid([2, 2], faces={"xmax": "outflow"})
    with pytest.raises(ValueError, match="symmetric"):
        TransportSpec.uniform(g, [[[1.0, 0.2], [0.0, 1.0]]], ellipticity=0.1).validate(g)
    with pytest.raises(ValueError, match="ellipticity"):
        TransportSpec.uniform(g, [[[1.0, 0.0], [0.0, 0.01]]], ellipticity=0.5).validate(g)
    with pytest.raises(ValueError, match="positive"):
        TransportSpec.uniform(g, [0.0]).validate(g)
    with pytest.raises(ValueError, match="outflow"):
        TransportSpec.uniform(g, [1.0], [[-1.0, 0.0]]).validate(g)
    TransportSpec.uniform(g, [1.0], [[1.0, 0.0]]).validate(g)


def test_boundary_validation():
    g = Grid([3], faces={"xmin": "inflow"})
    with pytest.raises(ValueError):
        BoundaryData.uniform(g, {"xmin": [-1.0]}).validate(g, 1)
    with pytest.raises(ValueError):
        BoundaryData.uniform(g, {"ymin": [1.0]}).validate(g, 1)
    BoundaryData.uniform(g, {"xmin": [1.0]}).validate(g, 1)


def test_state_invariants():
    g = Grid([2])
    with pytest.raises(ValueError):
        State(0.0, [[1.0, -1e-300]], g)
    with pytest.raises(ValueError):
        State(0.0, [[1.0, np.inf]], g)
    with pytest.raises(ValueError):
        State(0.0, [[1.0, 2.0, 3.0]], g)
    s = State(0.0, [[1.0, 2.0]], g)
    with pytest.raises(ValueError):
        s.u[0, 0] = 5.0


def test_solver_config_validation():
    net = parse_network(SINGLE)
    tr = TransportSpec.uniform(Grid([2]), [1.0])
    for bad in ({"cfl_safety": 0.0}, {"cfl_safety": 1.5}, {"t_end": -1.0}, {"output_stride": 0}):
        with pytest.raises(ValueError):
            SolverConfig(net, tr, BoundaryData.none(), **bad)


def test_cross_diffusion_warns(caplog):
    g = Grid([4, 4])
    tr = TransportSpec.uniform(g, [[[1.0, 0.3], [0.3, 1.0]]])
    with caplog.at_level("WARNING"):
        SolverConfig(parse_network(SINGLE), tr, BoundaryData.none())
    assert "positivity" in caplog.text


def test_trajectory_contract():
    g = Grid([1])
    a, b = State(0.0, [[1.0]], g), State(1.0, [[1.0]], g)
    assert Trajectory([a, b]).times.tolist() == [0.0, 1.0]
    with pytest.raises(ValueError):
        Trajectory([b, a])
    with pytest.raises(ValueError):
        Trajectory([a, State(0.0, [[1.0]], g)])
    with pytest.raises(ValueError):
        Trajectory([])


# ---------------------------------------------------------------- step


def test_constant_field_is_steady():
    g = line(8)
    cfg = closed_config(parse_network(SINGLE), g, [0.7])
    s0 = State(0.0, np.full((1, 8), 3.25), g)
    s1 = step(s0, cfg)
    assert s1.t > 0 and np.array_equal(s1.u, s0.u)


def test_single_cell_ode_step():
    # one well-mixed cell: diffusion has no faces to act on, only the reaction moves u
    g = Grid([1])
    cfg = closed_config(parse_network(AB), g, [1e-12, 1e-12], t_end=1.0)
    s1 = step(State(0.0, [[2.0], [1.0]], g), cfg)
    dt = s1.dt
    assert dt == s1.t and dt > 0
    assert s1.u[:, 0].tolist() == [2.0 - dt, 1.0 + dt]


def test_equilibrium_is_steady():
    net = parse_network(BALANCED["chain"])
    mu = solve_detailed_balance_mu(net).mu
    g = Grid([3, 3])
    cfg = closed_config(net, g, [0.1, 0.2, 0.3])
    u = np.broadcast_to(np.exp(-mu)[:, None, None], (3, 3, 3))
    s1 = step(State(0.0, u, g), cfg)
    np.testing.assert_allclose(s1.u, u, rtol=1e-15)


def test_step_does_not_pass_t_end():
    g = Grid([1])
    cfg = closed_config(parse_network(AB), g, [1e-12, 1e-12], t_end=1e-3)
    s = step(State(0.0, [[2.0], [1.0]], g), cfg)
    assert s.t == 1e-3
    assert step(s, cfg) is s


# ----------------------------------------------------------------- run


def test_run_t_end_zero():
    g = line(4)
    cfg = closed_config(parse_network(SINGLE), g, [1.0], t_end=0.0)
    assert len(run(State(0.0, np.ones((1, 4)), g), cfg)) == 1


def test_run_replays_hand_euler():
    from oracles import euler_replay_ab

    g = Grid([1])
    cfg = closed_config(parse_network(AB), g, [1e-12, 1e-12], t_end=0.05, cfl=0.3)
    traj = run(State(0.0, [[2.0], [1.0]], g), cfg)
    dts = [b.t - a.t for a, b in traj.pairs()]
    assert [b.dt for _, b in traj.pairs()] == dts
    expected = euler_replay_ab((2.0, 1.0), dts)
    for s, (a, b) in zip(traj, expected):
        assert s.u[:, 0].tolist() == [a, b]
    assert traj[-1].t == 0.05


def test_run_output_times_and_stride():
    g = line(16)
    net = parse_network(AB)
    cfg = closed_config(net, g, [0.1, 0.2], t_end=0.3, stride=10**9, output_times=(0.1, 0.2, 0.25))
    traj = run(cosine_state(g, [1, 1], [0.5, 0.2]), cfg)
    assert traj.times.tolist() == [0.0, 0.1, 0.2, 0.25, 0.3]
    cfg2 = closed_config(net, g, [0.1, 0.2], t_end=0.3, stride=7)
    t2 = run(cosine_state(g, [1, 1], [0.5, 0.2]), cfg2)
    steps = [s.steps for s in t2]
    assert all(n % 7 == 0 for n in steps[1:-1]) and t2[-1].t == 0.3
    assert np.all(np.diff(t2.times) > 0)


def test_run_is_deterministic():
    g = Grid([6, 5])
    net = parse_network(ABC)
    cfg = closed_config(net, g, [0.1, 0.05, 0.2], t_end=0.05)
    rng = np.random.default_rng(0)
    s0 = State(0.0, rng.uniform(0, 2, (3, 6, 5)), g)
    a, b = run(s0, cfg), run(s0, cfg)
    assert len(a) == len(b)
    for x, y in zip(a, b):
        assert x.t == y.t and x.u.tobytes() == y.u.tobytes()


def _random_problem(seed, dim):
    rng = np.random.default_rng(seed)
    name = sorted(BALANCED)[seed % len(BALANCED)]
    net = parse_network(BALANCED[name])
    S = net.n_species
    cells = [int(rng.integers(2, 9)) for _ in range(dim)]
    g = Grid(cells)
    D = [float(x) for x in rng.uniform(0.01, 0.5, S)]
    u0 = rng.uniform(0, 2, (S, *cells))
    u0[rng.random(u0.shape) < 0.2] = 0.0
    return net, g, D, State(0.0, u0, g)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from([1, 2]))
def test_nonnegative_and_mass_conserving(seed, dim):
    from entrodiff import conservation_vectors

    net, g, D, s0 = _random_problem(seed, dim)
    cfg = closed_config(net, g, D, t_end=0.02)
    traj = run(s0, cfg)
    qs = [q.q for q in conservation_vectors(net)]
    m0 = s0.mass()
    for s in traj:
        assert np.all(s.u >= 0)
        for q in qs:
            scale = np.abs(q) @ np.maximum(m0, s.mass())
            assert abs(q @ s.mass() - q @ m0) <= 1e-12 * max(scale, 1e-300) * max(1, s.steps / 1000)


def test_flux_antisymmetry_and_telescoping():
    # one flux per face, read by both neighbours: the divergence sums to the boundary flux
    g = Grid([7, 5], faces={"xmin": "inflow", "xmax": "outflow", "ymin": "outflow", "ymax": "noflux"})
    net = parse_network(AB)
    tr = TransportSpec.uniform(g, [0.3, [[0.2, 0.0], [0.0, 0.4]]], [[0.5, -0.25], [0.1, -0.6]])
    cfg = SolverConfig(net, tr, BoundaryData.uniform(g, {"xmin": [0.7, 0.2]}))
    op = Operator(g, cfg)
    u = np.random.default_rng(1).uniform(0.1, 2, (2, 7, 5))
    total = op.transport(u).reshape(2, -1).sum(axis=1) * g.cell_volume
    out = sum(boundary_side_flux(op, u, side).sum(axis=1) * g.face_area(("xmin", "xmax", "ymin", "ymax").index(side) // 2)
              for side in g.sides)
    np.testing.assert_allclose(total, -out, rtol=1e-13, atol=1e-13)
    Jx, Jy = op.face_fluxes(u)
    assert Jx.shape == (2, 8, 5) and Jy.shape == (2, 7, 6)
    np.testing.assert_allclose(Jx[:, 0, :], 0.7 * np.array([1.0, 0.2 / 0.7])[:, None] * np.ones((2, 5)), rtol=1e-15)
    assert np.all(Jy[:, :, -1] == 0)


def test_outflow_uses_upwind_cell_value():
    g = Grid([4], faces={"xmax": "outflow"})
    tr = TransportSpec.uniform(g, [0.1], [[2.0]])
    op = Operator(g, SolverConfig(parse_network(SINGLE), tr, BoundaryData.none()))
    u = np.array([[1.0, 2.0, 3.0, 5.0]])
    assert boundary_side_flux(op, u, "xmax")[0, 0] == 2.0 * 5.0
    assert boundary_side_flux(op, u, "xmin")[0, 0] == 0.0


def test_stable_dt_limits():
    from entrodiff.network import lipschitz_bound

    g = line(10)
    net = parse_network(AB)
    cfg = closed_config(net, g, [0.5, 0.25], advection=[[2.0], [0.0]])
    op = Operator(g, cfg)
    u = np.ones((2, 10))
    # diffusive h^2 / (2 d max|A|), advective h / max|b|, reactive 1 / L(2 max u)
    expected = min(0.1**2 / (2 * 0.5), 0.1 / 2.0, 1.0 / lipschitz_bound(net, 2.0))
    assert stable_dt(u, op) == pytest.approx(expected, rel=1e-15)
    s1 = step(State(0.0, u, g), cfg)
    assert s1.dt == pytest.approx(0.9 * expected, rel=1e-15)


def test_stiffness_failure_on_cross_diffusion():
    g = Grid([5, 5])
    tr = TransportSpec.uniform(g, [[[1.0, 0.9], [0.9, 1.0]]])
    cfg = SolverConfig(parse_network(SINGLE), tr, BoundaryData.none(), t_end=0.1)
    u = np.zeros((1, 5, 5))
    u[0, 2, 2] = 1.0
    with pytest.raises(StiffnessFailure) as err:
        run(State(0.0, u, g), cfg)
    assert err.value.dt < 1e-14 * 0.1


# ------------------------------------------------- dissipation, restrict


def test_sqrt_gradient_dissipation_examples():
    g = Grid([2], [0], [2])
    cfg = closed_config(parse_network(SINGLE), g, [1.0])
    assert sqrt_gradient_dissipation(State(0.0, [[1.0, 4.0]], g), cfg).tolist() == [4.0]
    assert sqrt_gradient_dissipation(State(0.0, [[3.0, 3.0]], g), cfg).tolist() == [0.0]
    cfg2 = closed_config(parse_network(SINGLE), g, [2.0])
    assert sqrt_gradient_dissipation(State(0.0, [[1.0, 4.0]], g), cfg2).tolist() == [8.0]


def test_sqrt_gradient_dissipation_nonnegative_2d():
    g = Grid([6, 4])
    tr = TransportSpec.uniform(g, [[[0.5, 0.0], [0.0, 2.0]], 0.3])
    cfg = SolverConfig(parse_network("species: A B\n"), tr, BoundaryData.none())
    u = np.random.default_rng(2).uniform(0, 3, (2, 6, 4))
    assert np.all(sqrt_gradient_dissipation(State(0.0, u, g), cfg) >= 0)


def test_restrict_examples():
    g1 = Grid([1])
    assert restrict(State(0.0, [[1.0, 3.0]], Grid([2])), g1).u.tolist() == [[2.0]]
    s = State(0.5, np.arange(6.0).reshape(1, 6), Grid([6]))
    r = restrict(s, Grid([6]))
    assert np.array_equal(r.u, s.u) and r.t == 0.5
    with pytest.raises(ValueError):
        restrict(s, Grid([4]))
    with pytest.raises(ValueError):
        restrict(s, Grid([3], upper=[2.0]))


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6), st.integers(1, 4), st.integers(0, 2**31), st.sampled_from([1, 2]))
def test_restrict_conserves_mass(n, r, seed, dim):
    coarse = Grid([n] * dim)
    fine = coarse.refine(r)
    u = np.random.default_rng(seed).uniform(0, 10, (2, *fine.cells))
    m_f = State(0.0, u, fine).mass()
    m_c = restrict(State(0.0, u, fine), coarse).mass()
    np.testing.assert_allclose(m_c, m_f, rtol=1e-14)


# ---------------------------------------------------------- backends


def test_backends_agree():
    backends = available_backends()
    g = Grid([9, 7], faces={"xmin": "inflow", "xmax": "outflow", "ymin": "outflow"})
    net = parse_network(BALANCED["michaelis"])
    tr = TransportSpec.uniform(g, [0.1, 0.2, 0.3, 0.4], [[0.3, -0.2]] * 4)
    cfg = SolverConfig(net, tr, BoundaryData.uniform(g, {"xmin": [0.1, 0.2, 0.0, 0.3]}))
    u = np.random.default_rng(0).uniform(0, 2, (4, 9, 7))
    ref = Operator(g, cfg, backend=_fallback)
    for name, be in backends.items():
        op = Operator(g, cfg, backend=be)
        np.testing.assert_allclose(op.rhs(u), ref.rhs(u), rtol=1e-13, atol=1e-14, err_msg=name)
        for a, b in zip(op.face_fluxes(u), ref.face_fluxes(u)):
            np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-14, err_msg=name)


def test_pure_python_switch():
    code = "import entrodiff._kernels as k; print(k.BACKEND_NAME)"
    env = dict(os.environ, ENTRODIFF_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"


# ------------------------------------------------------------ accuracy


def manufactured_error(n, D=0.1, t_end=0.1):
    """L2 error of pure diffusion against u = 1 + cos(pi x) exp(-pi^2 D t) on [0, 1]."""
    g = line(n)
    cfg = closed_config(parse_network(SINGLE), g, [D], t_end=t_end, stride=10**9)
    x0, h = g.centers(0) - 0.5 / n, 1.0 / n

    def cell_average(t):
        return 1.0 + math.exp(-math.pi**2 * D * t) * (np.sin(math.pi * (x0 + h)) - np.sin(math.pi * x0)) / (math.pi * h)

    final = run(State(0.0, cell_average(0.0)[None], g), cfg)[-1]
    return math.sqrt(np.sum((final.u[0] - cell_average(t_end)) ** 2) * h)


def test_order_of_accuracy():
    errs = [manufactured_error(n) for n in (16, 32, 64)]
    rates = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
    assert min(rates) >= 1.8, (errs, rates)
