import json
import math

import numpy as np
import pytest

from conftest import AB, CONFIGS, closed_config
from entrodiff import (
    BoundaryData,
    CutoffParams,
    EntropyParams,
    Grid,
    SolverConfig,
    State,
    Trajectory,
    TransportSpec,
    conservation_vectors,
    parse_network,
    run,
    solve_detailed_balance_mu,
)
from entrodiff.config import load_config, parse_config
from entrodiff.diagnostics import (
    RELATIVE_TERMS,
    ExperimentSpec,
    ReferenceNotStrong,
    budget_csv,
    conservation_ledger,
    entropy_budget,
    entropy_rate_terms,
    entropy_value,
    paired_runs,
    relative_entropy_budget,
    relative_entropy_value,
    smooth_perturbation,
    weak_strong_experiment,
)
from entrodiff.entropy import choose_K, choose_M


def _config(name, **overrides):
    doc = json.loads((CONFIGS / name).read_text())
    for key, val in overrides.items():
        target = doc
        *path, last = key.split("__")
        for p in path:
            target = target[p]
        target[last] = val
    return parse_config(doc, CONFIGS)


def _run(rc, output_times=None):
    cfg, s0 = rc.build(rc.grid, output_times)
    return run(s0, cfg), cfg


def _check_report_invariants(reports):
    for r in reports:
        assert abs(r.slack - (math.fsum(r.rhs_terms.values()) - r.lhs_increment)) <= 1e-13 * max(
            1.0, abs(r.lhs_increment), *map(abs, r.rhs_terms.values()))
        if r.verdict != "inconclusive":
            assert r.passed == (r.slack >= -r.tolerance)


# ------------------------------------------------------------ entropy budget


def test_equilibrium_trajectory_budget_is_zero():
    net = parse_network("species: A B\nreaction: A <-> B ; kf=2 kb=1\n")
    params = solve_detailed_balance_mu(net)
    g = Grid([5])
    cfg = closed_config(net, g, [0.1, 0.2], t_end=0.01)
    u = np.exp(-params.mu)[:, None] * np.ones((2, 5))
    traj = run(State(0.0, u, g), cfg)
    reports = entropy_budget(traj, cfg, params)
    assert reports
    for r in reports:
        assert r.passed
        assert abs(r.lhs_increment) <= 1e-15
        assert all(abs(v) <= 1e-15 for v in r.rhs_terms.values())


def test_single_cell_reaction_rate():
    net = parse_network(AB)
    g = Grid([1])
    cfg = closed_config(net, g, [1e-12, 1e-12])
    terms, note = entropy_rate_terms(State(0.0, [[2.0], [1.0]], g), cfg, EntropyParams([0.0, 0.0]))
    assert note == ""
    assert terms["reaction"] == pytest.approx(-math.log(2), rel=1e-15)
    assert terms["diffusion"] == terms["advection"] == terms["inflow"] == terms["outflow"] == 0.0


def test_closed_budget_signs_and_monotone_entropy():
    rc = load_config(CONFIGS / "ab_closed.json")
    traj, cfg = _run(rc)
    params = rc.entropy_params()
    reports = entropy_budget(traj, cfg, params)
    _check_report_invariants(reports)
    assert all(r.passed for r in reports)
    for r in reports:
        assert r.rhs_terms["reaction"] <= 0 and r.rhs_terms["diffusion"] <= 0
        assert r.rhs_terms["inflow"] == r.rhs_terms["outflow"] == r.rhs_terms["advection"] == 0
        assert r.lhs_increment <= r.tolerance
    E = [entropy_value(s, params.mu) for s in traj]
    assert E[-1] < E[0]


def test_open_2d_budget_passes():
    rc = load_config(CONFIGS / "ab_open_2d.json")
    traj, cfg = _run(rc)
    reports = entropy_budget(traj, cfg, rc.entropy_params())
    _check_report_invariants(reports)
    assert all(r.passed for r in reports)
    assert any(r.rhs_terms["inflow"] != 0 for r in reports)
    assert any(r.rhs_terms["outflow"] != 0 for r in reports)
    assert any(r.rhs_terms["advection"] != 0 for r in reports)


def test_inflow_into_empty_cell_is_inconclusive():
    g = Grid([4], faces={"xmin": "inflow"})
    net = parse_network(AB)
    cfg = SolverConfig(net, TransportSpec.uniform(g, [0.1, 0.1]), BoundaryData.uniform(g, {"xmin": [1.0, 0.0]}), t_end=1e-3)
    u = np.zeros((2, 4))
    traj = Trajectory([State(0.0, u, g), State(1e-12, u, g)])
    r = entropy_budget(traj, cfg, EntropyParams([0.0, 0.0]))[0]
    assert r.verdict == "inconclusive" and "log 0" in r.note


def test_budget_rejects_mismatched_config():
    rc = load_config(CONFIGS / "ab_closed.json")
    traj, _ = _run(_config("ab_closed.json", t_end=0.01))
    other = closed_config(parse_network("species: A\n"), rc.grid, [1.0])
    with pytest.raises(ValueError):
        entropy_budget(traj, other, EntropyParams([0.0]))


def test_budget_csv_columns():
    traj, cfg = _run(_config("ab_closed.json", t_end=0.01))
    text = budget_csv(entropy_budget(traj, cfg, EntropyParams([0.0, 0.0])))
    header = text.splitlines()[0].split(",")
    assert header == ["t0", "t1", "lhs_increment", "diffusion", "advection", "inflow", "outflow", "reaction",
                      "slack", "tolerance", "verdict"]
    assert len(text.splitlines()) == len(traj)
    assert budget_csv([]) == ""


def test_budget_slack_shrinks_with_the_step():
    # the discrete slack is O(dt + h^2): halving both should shrink the worst deficit
    worst = []
    for n, cfl in ((16, 0.9), (32, 0.45)):
        traj, cfg = _run(_config("ab_closed.json", grid__cells=[n], cfl_safety=cfl, t_end=0.05))
        reports = entropy_budget(traj, cfg, EntropyParams(solve_detailed_balance_mu(cfg.network).mu))
        worst.append(max(abs(r.slack) / (r.t1 - r.t0) for r in reports))
    assert worst[1] < worst[0]


# --------------------------------------------------------- conservation


def test_closed_ledger_drift():
    rc = load_config(CONFIGS / "abc_closed.json")
    traj, cfg = _run(rc)
    rep = conservation_ledger(traj, conservation_vectors(rc.network), cfg)
    assert rep.closed and rep.passed
    assert np.all(rep.relative_drift <= 1e-12)
    assert rep.to_json()["verdict"] == "pass"


def test_inflow_only_ledger_slope():
    g = Grid([8], faces={"xmin": "inflow"})
    net = parse_network(AB)
    g_in = [0.3, 0.1]
    cfg = SolverConfig(net, TransportSpec.uniform(g, [0.05, 0.05]), BoundaryData.uniform(g, {"xmin": g_in}), t_end=0.2)
    traj = run(State(0.0, np.ones((2, 8)), g), cfg)
    q = conservation_vectors(net)[0].q
    rep = conservation_ledger(traj, [q], cfg)
    slope = (rep.totals[0, -1] - rep.totals[0, 0]) / traj[-1].t
    assert slope == pytest.approx(float(q @ g_in) * 1.0, rel=1e-12)
    assert rep.passed and not rep.closed


def test_open_2d_ledger_passes():
    rc = load_config(CONFIGS / "ab_open_2d.json")
    traj, cfg = _run(rc)
    rep = conservation_ledger(traj, conservation_vectors(rc.network), cfg)
    assert rep.passed
    assert np.any(rep.totals[:, -1] != rep.totals[:, 0])


def test_ledger_rejects_degenerate_q():
    traj, cfg = _run(_config("ab_closed.json", t_end=0.01))
    with pytest.raises(ValueError):
        conservation_ledger(traj, [np.zeros(2)], cfg)
    with pytest.raises(ValueError):
        conservation_ledger(traj, [np.ones(3)], cfg)


# ---------------------------------------------- relative entropy budget


def _shared_times(rc, n=10):
    return np.linspace(0, rc.t_end, n + 1)[1:-1]


def _budget_for(rc, delta, p=None, r=2, seed=3):
    spec = ExperimentSpec(rc, refinement=r, delta=delta, seed=seed)
    u_traj, v_traj, cfg = paired_runs(spec, delta, _shared_times(rc))
    params = rc.entropy_params()
    if p is None:
        p = CutoffParams(choose_M(max(s.u.max() for s in v_traj), params.mu, 2), 4)
    return relative_entropy_budget(u_traj, v_traj, params, p, cfg), u_traj, v_traj, cfg, p


def test_identical_runs_give_zero_increment():
    rc = _config("ab_closed.json", t_end=0.1)
    traj, cfg = _run(rc)
    p = CutoffParams(64, 4)
    reports = relative_entropy_budget(traj, traj, rc.entropy_params(), p, cfg)
    _check_report_invariants(reports)
    scale = max(1.0, max(abs(relative_entropy_value(s, s, rc.entropy_params().mu, p)) for s in traj))
    for r in reports:
        assert abs(r.lhs_increment) <= 1e-13 * scale
        for k in ("I", "X", "XII", "XIV"):
            assert r.rhs_terms[k] <= 1e-15
        # zero in exact arithmetic; what remains is rounding of order eps^2
        assert r.slack >= -1e-13 * scale and r.passed


def test_below_M_terms_vanish_exactly():
    rc = load_config(CONFIGS / "ab_closed.json")
    reports, u_traj, _, _, p = _budget_for(rc, 1e-2)
    assert max(s.u.sum(axis=0).max() for s in u_traj) <= p.M
    _check_report_invariants(reports)
    for r in reports:
        assert r.passed
        for k in ("II", "III", "IV", "V", "VI", "VII", "VIII", "IX", "XI"):
            assert r.rhs_terms[k] == 0.0


def test_single_cell_reduces_to_reaction_term():
    net = parse_network(AB)
    g = Grid([1])
    cfg = closed_config(net, g, [1e-12, 1e-12], t_end=0.2, output_times=np.linspace(0, 0.2, 6)[1:-1])
    u = run(State(0.0, [[2.0], [1.0]], g), cfg)
    v = run(State(0.0, [[1.2], [0.9]], g), cfg)
    p = CutoffParams(2, 2)  # the totals 3 and 2.1 sit inside the transition
    reports = relative_entropy_budget(u, v, EntropyParams([0.0, 0.0]), p, cfg)
    for r in reports:
        for k in RELATIVE_TERMS:
            if k not in ("X", "XI"):
                assert r.rhs_terms[k] == 0.0, k
        assert r.rhs_terms["X"] != 0.0
        # A <-> B conserves the total, so the cutoff derivative term XI vanishes as well
        assert r.rhs_terms["XI"] == 0.0
        assert r.passed


def test_active_cutoff_with_open_boundaries():
    # totals of 2 to 4 near the boundary keep the cutoff derivative alive on the boundary faces
    rc = _config("ab_open_2d.json", initial__base=[1.5, 1.2], boundary__inflow__xmin=[2.0, 1.0])
    p = CutoffParams(2, 2)
    reports, u_traj, _, _, _ = _budget_for(rc, 0.05, p=p)
    _check_report_invariants(reports)
    assert all(r.passed for r in reports)
    active = {k for r in reports for k, v in r.rhs_terms.items() if v != 0.0}
    assert active >= {"I", "II", "III", "IV", "V", "VI", "VII", "VIII", "IX", "X", "XII", "XIII", "XIV", "XV"}


def test_relative_budget_errors():
    rc = _config("ab_closed.json", t_end=0.02)
    traj, cfg = _run(rc)
    params = rc.entropy_params()
    p = CutoffParams(4, 2)
    with pytest.raises(ValueError):
        relative_entropy_budget(traj, Trajectory(list(traj)[:-1]), params, p, cfg)
    coarse = Grid([16])
    other = Trajectory([State(s.t, s.u[:, ::2], coarse) for s in traj])
    with pytest.raises(ValueError):
        relative_entropy_budget(traj, other, params, p, cfg)
    zero = Trajectory([State(s.t, np.where(np.arange(32) == 0, 0.0, s.u), s.grid) for s in traj])
    with pytest.raises(ReferenceNotStrong):
        relative_entropy_budget(traj, zero, params, p, cfg)


def test_adjusted_relative_entropy_nonnegative_on_fields():
    rc = load_config(CONFIGS / "ab_open_2d.json")
    spec = ExperimentSpec(rc, delta=0.2, seed=1)
    u_traj, v_traj, _ = paired_runs(spec, 0.2, _shared_times(rc))
    mu = rc.entropy_params().mu
    v_max = max(s.u.max() for s in v_traj)
    K = choose_K(max(np.abs(np.log(s.u) + mu[:, None, None]).max() for s in v_traj))
    p = CutoffParams(choose_M(v_max, mu, 2, K=K), K)
    for a, b in zip(u_traj, v_traj):
        assert relative_entropy_value(a, b, mu, p) >= 0


# ------------------------------------------------------------ weak-strong


def test_identical_runs_experiment():
    rc = _config("ab_weakstrong.json", t_end=0.5)
    rep = weak_strong_experiment(ExperimentSpec(rc, refinement=1, delta=0.0, snapshots=10))
    assert np.all(np.abs(rep.E_M) <= 1e-13)
    assert rep.C_fit == 0.0 and rep.passed
    assert rep.terminal_gap == 0.0


def test_perturbed_experiment_envelope():
    rc = _config("ab_weakstrong.json", t_end=0.5)
    rep = weak_strong_experiment(ExperimentSpec(rc, refinement=2, delta=1e-3, seed=7, snapshots=10))
    assert rep.passed and math.isfinite(rep.C_fit)
    assert rep.E_M[0] > 0
    assert np.all(rep.E_M <= rep.E_M[0] * np.exp(rep.C_fit * rep.times) + rep.baseline + 1e-15)
    doc = rep.to_json()
    assert doc["verdict"] == "pass" and doc["delta"] == 1e-3 and len(doc["E_M"]) == 11


def test_reference_not_strong():
    doc = json.loads((CONFIGS / "ab_weakstrong.json").read_text())
    doc["initial"] = {"type": "constant", "values": [1.0, 0.0]}
    doc["network"] = "species: A B\n"
    del doc["network_file"]
    rc = parse_config(doc, CONFIGS)
    with pytest.raises(ReferenceNotStrong):
        weak_strong_experiment(ExperimentSpec(rc, refinement=2))


def test_experiment_spec_validation():
    rc = load_config(CONFIGS / "ab_weakstrong.json")
    for bad in ({"refinement": 0}, {"refinement": 1.5}, {"delta": -1.0}, {"delta": math.inf}, {"snapshots": 0}):
        with pytest.raises(ValueError):
            ExperimentSpec(rc, **bad)


def test_smooth_perturbation_is_seeded_and_normalised():
    g = Grid([12, 7])
    a = smooth_perturbation(np.random.default_rng(5), g, 2)
    b = smooth_perturbation(np.random.default_rng(5), g, 2)
    assert np.array_equal(a, b) and a.shape == (2, 12, 7)
    assert np.abs(a).max() == pytest.approx(1.0)
