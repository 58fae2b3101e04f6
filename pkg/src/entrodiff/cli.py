"""``entrodiff`` command-line interface.

Subcommands::

    entrodiff check      NETWORK_FILE   certificates for a reaction network
    entrodiff run        CONFIG_JSON    simulate, then entropy + conservation reports
    entrodiff weakstrong CONFIG_JSON    perturbed-vs-reference relative entropy study

Exit codes: 0 pass, 1 verdict failure, 2 invalid input, 3 solver failure,
4 reference solution lost strict positivity.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from ._kernels import BACKEND_NAME
from .config import ConfigError, RunConfig, load_config
from .diagnostics import (
    ExperimentSpec,
    ReferenceNotStrong,
    budget_csv,
    conservation_ledger,
    entropy_budget,
    entropy_value,
    weak_strong_experiment,
)
from .entropy import CutoffParams
from .io import json_dumps, series_csv, sha256_file, trajectory_csv
from .network import (
    DetailedBalanceViolated,
    EntropyParams,
    NetworkSyntaxError,
    check_entropy_condition,
    check_quasi_positivity,
    conservation_vectors,
    parse_network,
    solve_detailed_balance_mu,
)
from .solver import StiffnessFailure, run

log = logging.getLogger("entrodiff")

EXIT_OK, EXIT_VERDICT, EXIT_INPUT, EXIT_SOLVER, EXIT_REFERENCE = 0, 1, 2, 3, 4
THREADS_ENV = "ENTRODIFF_THREADS"


class _Outputs:
    """Collects artifacts and writes the manifest."""

    def __init__(self, out_dir: Path, command: str, config_path: Path, seed: int | None):
        self.dir = out_dir
        self.dir.mkdir(parents=True, exist_ok=True)
        self.command = command
        self.config_path = config_path
        self.seed = seed
        self.files: list[Path] = []
        self.inputs: list[Path] = [config_path]
        self.start = time.perf_counter()

    def write(self, name: str, text: str) -> Path:
        path = self.dir / name
        path.write_text(text, encoding="utf-8")
        self.files.append(path)
        return path

    def finish(self, exit_code: int, threads: int | None) -> None:
        manifest = {
            "command": self.command,
            "config_path": str(self.config_path),
            "inputs": {str(p): sha256_file(p) for p in self.inputs if p.is_file()},
            "outputs": {p.name: sha256_file(p) for p in self.files},
            "exit_code": exit_code,
            "wall_time_s": round(time.perf_counter() - self.start, 6),
            "version": __version__,
            "kernel_backend": BACKEND_NAME,
            "seed": self.seed,
            "threads": threads,
        }
        (self.dir / "manifest.json").write_text(json_dumps(manifest), encoding="utf-8")


def _threads() -> int | None:
    raw = os.environ.get(THREADS_ENV)
    if raw is None or raw == "":
        return None
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    # The kernels are single-threaded; the cap applies to the BLAS pools numpy may use.
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, str(n))
    return n


def _say(args, msg: str) -> None:
    if not args.quiet:
        print(msg)


# ------------------------------------------------------------------ check


def cmd_check(args) -> int:
    path = Path(args.target)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read network file: {exc}") from None
    net = parse_network(text)
    seed = args.seed if args.seed is not None else 0
    samples = args.samples
    out = _Outputs(Path(args.out_dir or "entrodiff-out/check"), "check", path, seed)

    report: dict = {"network": {"species": list(net.species_names), "reactions": net.n_reactions}}
    ok = True
    try:
        params = solve_detailed_balance_mu(net)
        report["detailed_balance"] = {"verdict": "pass", **params.to_json()}
    except DetailedBalanceViolated as exc:
        ok = False
        params = EntropyParams(exc.mu, exc.residual, "solved")
        report["detailed_balance"] = {
            "verdict": "fail",
            "error": "DetailedBalanceViolated",
            "residual": exc.residual,
            "tolerance": exc.tolerance,
            "least_squares_mu": np.asarray(exc.mu).tolist(),
        }
    qs = conservation_vectors(net)
    report["conservation_vectors"] = [q.q.tolist() for q in qs]
    ent = check_entropy_condition(net, params, sample_count=samples, seed=seed)
    qp = check_quasi_positivity(net, sample_count=samples, seed=seed)
    report["entropy_condition"] = ent.to_json()
    report["quasi_positivity"] = qp.to_json()
    ok = ok and ent.verdict and qp.verdict
    report["verdict"] = "pass" if ok else "fail"
    out.write("check_report.json", json_dumps(report))
    code = EXIT_OK if ok else EXIT_VERDICT
    out.finish(code, args.threads)
    _say(args, json_dumps(report).rstrip())
    return code


# -------------------------------------------------------------------- run


def _load(args) -> tuple[RunConfig, Path]:
    path = Path(args.target)
    cfg = load_config(path)
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg, path


def cmd_run(args) -> int:
    rc, path = _load(args)
    out = _Outputs(Path(args.out_dir or "entrodiff-out/run"), "run", path, rc.seed)
    if "network_file" in rc.source:
        out.inputs.append(rc.base_dir / rc.source["network_file"])
    cfg, init = rc.build(rc.grid)
    params = rc.entropy_params()
    traj = run(init, cfg)
    names = rc.network.species_names
    out.write("trajectory.csv", trajectory_csv(traj, names))

    budget = entropy_budget(traj, cfg, params)
    ledger = conservation_ledger(traj, conservation_vectors(rc.network), cfg) if conservation_vectors(rc.network) else None
    mu = np.asarray(params.mu)
    energies = [entropy_value(s, mu) for s in traj]
    out.write("entropy_series.csv", series_csv(["t", "E"], zip(traj.times, energies)))
    out.write("entropy_budget.csv", budget_csv(budget))
    budget_ok = all(r.verdict != "fail" for r in budget)
    ledger_ok = ledger is None or ledger.passed
    report = {
        "entropy_params": params.to_json(),
        "snapshots": len(traj),
        "steps": traj[-1].steps,
        "rejections": traj[-1].rejections,
        "entropy_budget": {
            "verdict": "pass" if budget_ok else "fail",
            "intervals": len(budget),
            "failed": sum(r.verdict == "fail" for r in budget),
            "inconclusive": sum(r.verdict == "inconclusive" for r in budget),
            "min_slack_over_tolerance": min((r.slack / r.tolerance for r in budget), default=0.0),
            "reports": [r.to_json() for r in budget],
        },
        "conservation": ledger.to_json() if ledger else {"verdict": "pass", "q": []},
    }
    ok = budget_ok and ledger_ok
    report["verdict"] = "pass" if ok else "fail"
    out.write("report.json", json_dumps(report))
    code = EXIT_OK if ok else EXIT_VERDICT
    out.finish(code, args.threads)
    _say(args, f"run: {len(traj)} snapshots, {traj[-1].steps} steps, entropy budget "
               f"{report['entropy_budget']['verdict']}, conservation {report['conservation']['verdict']}")
    return code


# ------------------------------------------------------------- weakstrong


def cmd_weakstrong(args) -> int:
    rc, path = _load(args)
    exp = dict(rc.experiment)
    r = exp.get("refinement", 2)
    if not isinstance(r, int) or r < 1:
        raise ConfigError("experiment.refinement must be a positive integer")
    delta = exp.get("delta", 0.0)
    if not isinstance(delta, (int, float)) or not math.isfinite(delta) or delta < 0:
        raise ConfigError("experiment.delta must be a finite nonnegative number")
    snapshots = exp.get("snapshots", 20)
    if not isinstance(snapshots, int) or snapshots < 1:
        raise ConfigError("experiment.snapshots must be a positive integer")
    cutoff = None
    if "M" in exp or "K" in exp:
        try:
            cutoff = CutoffParams(float(exp["M"]), float(exp["K"]))
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"experiment cutoff: {exc}") from None
    out = _Outputs(Path(args.out_dir or "entrodiff-out/weakstrong"), "weakstrong", path, rc.seed)
    spec = ExperimentSpec(rc, refinement=r, delta=float(delta), seed=rc.seed, snapshots=snapshots, cutoff=cutoff)
    rep = weak_strong_experiment(spec)
    out.write("gronwall_report.json", json_dumps(rep.to_json()))
    out.write("relative_entropy_series.csv", series_csv(["t", "E_M", "baseline"], zip(rep.times, rep.E_M, rep.baseline)))
    code = EXIT_OK if rep.passed else EXIT_VERDICT
    out.finish(code, args.threads)
    _say(args, f"weakstrong: verdict {rep.verdict}, C_fit {rep.C_fit:.6g}, terminal E_M {rep.E_M[-1]:.3e}")
    return code


# ------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("target", nargs="?", help="input file (same as --config)")
    common.add_argument("--config", dest="config", help="input file: network for check, JSON config otherwise")
    common.add_argument("--out-dir", dest="out_dir", help="directory for artifacts")
    common.add_argument("--seed", type=int, help="overrides the seed in the input")
    common.add_argument("--quiet", action="store_true", help="suppress console output")

    parser = argparse.ArgumentParser(prog="entrodiff", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"entrodiff {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("check", parents=[common], help="network certificates")
    p.add_argument("--samples", type=int, default=10_000, help="sample count per certificate")
    p.set_defaults(func=cmd_check)
    sub.add_parser("run", parents=[common], help="simulate and audit").set_defaults(func=cmd_run)
    sub.add_parser("weakstrong", parents=[common], help="weak-strong experiment").set_defaults(func=cmd_weakstrong)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse usage errors are input errors
        return EXIT_INPUT if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args.target = args.target or args.config
    if not args.target:
        print("entrodiff: an input file is required (positional or --config)", file=sys.stderr)
        return EXIT_INPUT
    if args.seed is not None and args.seed < 0:
        print("entrodiff: --seed must be nonnegative", file=sys.stderr)
        return EXIT_INPUT
    if getattr(args, "samples", 1) < 1:
        print("entrodiff: --samples must be positive", file=sys.stderr)
        return EXIT_INPUT
    try:
        args.threads = _threads()
        return args.func(args)
    except DetailedBalanceViolated as exc:
        print(f"entrodiff: entropy structure not certified: {exc}", file=sys.stderr)
        return EXIT_VERDICT
    except NetworkSyntaxError as exc:
        print(f"entrodiff: network error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ConfigError, ValueError) as exc:
        print(f"entrodiff: invalid input: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except StiffnessFailure as exc:
        print(f"entrodiff: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ReferenceNotStrong as exc:
        print(f"entrodiff: reference failure: {exc}", file=sys.stderr)
        return EXIT_REFERENCE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
