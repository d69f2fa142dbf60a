"""Command-line front end.

Subcommands: fit-muscles, check-model, synthesize, simulate, report.
Config files default to the packaged ones; a directory given via
``--config-root`` or the ``MUSCLEGAIT_CONFIG_ROOT`` environment
variable overrides any kind for which it contains ``<kind>.yaml``.

Exit codes: 0 success, 1 generic failure, 2 solver budget exhausted,
3 configuration error, 4 simulation failure, 5 schema error.
"""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (ConfigError, FitError, MuscleGaitError, SchemaError,
                     SimulationError)

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_BUDGET = 2
EXIT_CONFIG = 3
EXIT_SIM = 4
EXIT_SCHEMA = 5


def _config_path(args, kind: str):
    flag = getattr(args, kind.replace("-", "_"), None)
    if flag:
        return Path(flag)
    root = args.config_root or os.environ.get("MUSCLEGAIT_CONFIG_ROOT")
    if root:
        cand = Path(root) / f"{kind}.yaml"
        if cand.exists():
            return cand
    return None   # packaged default


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _manifest(args, command: str, kinds: list[str]):
    from .fileio import RunManifest, default_config_path
    man = RunManifest(command=command,
                      variant=getattr(args, "variant", None),
                      seed=getattr(args, "seed", None),
                      tool_version=__version__, out_dir=str(args.out))
    man.started_at = man.now()
    for kind in kinds:
        p = _config_path(args, kind)
        man.add_config(kind, p if p is not None else default_config_path(kind))
    return man


def cmd_fit_muscles(args) -> int:
    from .fileio import load_muscles, save_json
    from .muscle import fit_smooth_curves
    muscles = load_muscles(_config_path(args, "muscles"))
    out = _outdir(args)
    man = _manifest(args, "fit-muscles", ["muscles"])
    report = {"schema": "musclegait/report/v1", "kind": "muscle-fits",
              "tolerance": args.tol, "fits": {}}
    for mid, (params, _) in muscles.items():
        fv, fse = fit_smooth_curves(params, tol=args.tol, degree=args.degree)
        report["fits"][mid] = {
            "f_v": {"coef": list(fv.coef), "fit_domain": list(fv.fit_domain),
                    "max_rel_error": fv.max_rel_error},
            "f_se": {"coef": list(fse.coef),
                     "fit_domain": list(fse.fit_domain),
                     "max_rel_error": fse.max_rel_error},
        }
        print(f"{mid}: f_v {fv.max_rel_error:.4f}  f_se "
              f"{fse.max_rel_error:.4f}  (tol {args.tol})")
    save_json(report, out / "muscle_fits.json")
    man.finished_at = man.now()
    man.save(out / "manifest.json")
    print(f"wrote {out / 'muscle_fits.json'}")
    return EXIT_OK


def cmd_check_model(args) -> int:
    from .fileio import load_model, save_json
    from .model import PlanarBiped
    params = load_model(_config_path(args, "model"))
    model = PlanarBiped(params)
    rng = np.random.default_rng(args.seed)
    out = _outdir(args)
    man = _manifest(args, "check-model", ["model"])
    checks = {}

    n = args.samples
    sym = pd = 0.0
    for _ in range(n):
        q = rng.normal(scale=0.5, size=9)
        D = model.mass_matrix(q)
        sym = max(sym, float(np.max(np.abs(D - D.T))))
        pd = min(pd if pd else np.inf, float(np.linalg.eigvalsh(D).min()))
    checks["mass_matrix_symmetry"] = {"max_asymmetry": sym, "ok": sym < 1e-9}
    checks["mass_matrix_pd"] = {"min_eigenvalue": pd, "ok": pd > 0.0}

    # energy: d/dt E equals actuator plus constraint power (free fall: 0)
    worst = 0.0
    for _ in range(10):
        q = rng.normal(scale=0.3, size=9)
        dq = rng.normal(scale=0.5, size=9)
        ddq = np.linalg.solve(model.mass_matrix(q),
                              -model.coriolis_gravity(q, dq))
        e = 1e-6
        de = (model.energy(q + e * dq, dq + e * ddq)
              - model.energy(q - e * dq, dq - e * ddq)) / (2 * e)
        worst = max(worst, abs(de))
    checks["energy_conservation"] = {"max_drift_rate": worst,
                                     "ok": worst < 1e-4}

    # impact map removes contact velocity, never adds energy
    ok_imp = True
    worst_v, worst_de = 0.0, 0.0
    for _ in range(n):
        q = model.standing_pose() + rng.normal(scale=0.2, size=9)
        dq = rng.normal(scale=0.5, size=9)
        contacts = ("heel_r", "toe_l")
        dqp = model.impact_map(q, dq, contacts)
        J = model.contact_jacobian(q, contacts)
        worst_v = max(worst_v, float(np.max(np.abs(J @ dqp))))
        D = model.mass_matrix(q)
        dke = 0.5 * (dqp @ D @ dqp - dq @ D @ dq)
        worst_de = max(worst_de, dke)
    ok_imp = worst_v < 1e-8 and worst_de < 1e-10
    checks["impact_map"] = {"max_post_contact_velocity": worst_v,
                            "max_energy_gain": worst_de, "ok": ok_imp}

    all_ok = all(c["ok"] for c in checks.values())
    report = {"schema": "musclegait/report/v1", "kind": "model-checks",
              "samples": n, "checks": checks, "ok": all_ok}
    save_json(report, out / "model_checks.json")
    man.finished_at = man.now()
    man.save(out / "manifest.json")
    for name, c in checks.items():
        print(f"{'PASS' if c['ok'] else 'FAIL'}  {name}")
    return EXIT_OK if all_ok else EXIT_FAIL


def cmd_synthesize(args) -> int:
    from .fileio import (load_domains, load_model, load_muscles, load_opt,
                         save_json, write_csv)
    from .hybrid import build_gamma
    from .model import PlanarBiped
    from .nlp import (initial_guess, package_solution, solve_gait,
                      trajectory_table, transcribe, variant_from_config)

    model = PlanarBiped(load_model(_config_path(args, "model")))
    gamma = build_gamma(load_domains(_config_path(args, "domains")))
    opt = load_opt(_config_path(args, "opt"))
    if args.grid:
        opt["nodes_per_domain"] = args.grid
    if args.tol:
        opt["solver"]["tol"] = args.tol
    opt["solver"]["seed"] = args.seed
    variant = variant_from_config(opt, args.variant)
    muscles = load_muscles(_config_path(args, "muscles")) \
        if variant.muscles_enabled else None

    out = _outdir(args)
    man = _manifest(args, "synthesize",
                    ["model", "domains", "opt"]
                    + (["muscles"] if variant.muscles_enabled else []))
    nlp = transcribe(model, gamma, opt, variant, muscles)
    print(f"variant {variant.name}: {nlp.n} variables, "
          f"{nlp.m} constraint rows")
    sol = solve_gait(nlp, verbose=args.verbose)
    save_json(sol, out / "solution.json")
    header, rows = trajectory_table(nlp.layout, sol)
    write_csv(out / "trajectory.csv", header, rows)
    man.finished_at = man.now()
    man.save(out / "manifest.json")
    print(f"status {sol.status}  iterations {sol.iterations}  "
          f"objective {sol.objective:.6e}")
    if sol.status == "converged":
        return EXIT_OK
    if sol.status == "budget":
        return EXIT_BUDGET
    return EXIT_FAIL


def cmd_simulate(args) -> int:
    from .fileio import (load_domains, load_json, load_model, load_opt,
                         load_sim, save_json, write_csv)
    from .hybrid import build_gamma
    from .model import PlanarBiped
    from .nlp import (layout_for_solution, solution_from_dict,
                      solution_outputs, solution_state)
    from .sim import SimConfig, simulate_cycles

    sol = solution_from_dict(load_json(args.solution))
    model = PlanarBiped(load_model(_config_path(args, "model")))
    gamma = build_gamma(load_domains(_config_path(args, "domains")))
    opt = load_opt(_config_path(args, "opt"))
    cfg = SimConfig.from_dict(load_sim(_config_path(args, "sim")))
    if args.cycles:
        cfg.cycles = args.cycles

    lay = layout_for_solution(model, gamma, opt, sol)
    x0 = solution_state(lay, sol)
    outputs = solution_outputs(gamma, sol)
    out = _outdir(args)
    man = _manifest(args, "simulate", ["model", "domains", "opt", "sim"])
    man.input_hashes["solution"] = __import__(
        "musclegait.fileio", fromlist=["sha256_file"]).sha256_file(
        args.solution)

    report = simulate_cycles(model, gamma, outputs, x0, cfg)
    rows, t0 = [], 0.0
    for tr in report.traces:
        for i in range(len(tr.t)):
            rows.append(np.concatenate([[t0 + tr.t[i]], tr.x[i], tr.u[i]]))
        t0 += tr.t[-1] if len(tr.t) else 0.0
    header = ["t"] + [f"x_{i}" for i in range(18)] \
        + [f"u_{i}" for i in range(6)]
    write_csv(out / "sim_trajectory.csv", header, np.array(rows))
    summary = {"schema": "musclegait/report/v1", "kind": "simulation",
               "cycles_completed": report.cycles_completed,
               "fell": report.fell, "residuals": report.residuals,
               "cycle_times": report.cycle_times}
    save_json(summary, out / "sim_report.json")
    man.finished_at = man.now()
    man.save(out / "manifest.json")
    print(f"cycles {report.cycles_completed}  fell {report.fell}  "
          f"last residual {report.residual:.3e}")
    if report.fell or report.cycles_completed < cfg.cycles:
        return EXIT_SIM
    return EXIT_OK


def cmd_report(args) -> int:
    from .fileio import load_json, save_json
    out = _outdir(args)
    merged = {"schema": "musclegait/report/v1", "kind": "summary",
              "entries": {}}
    lines = ["| artifact | status | key figures |", "| - | - | - |"]
    for path in args.inputs:
        d = load_json(path)
        name = Path(path).stem
        merged["entries"][name] = d
        if d.get("kind") == "simulation":
            fig = (f"cycles {d['cycles_completed']}, "
                   f"residual {d['residuals'][-1]:.2e}"
                   if d["residuals"] else "no full cycle")
            status = "fell" if d["fell"] else "ok"
        elif "status" in d:
            status = d["status"]
            fig = f"objective {d.get('objective', float('nan')):.4e}"
        elif "ok" in d:
            status = "ok" if d["ok"] else "fail"
            fig = ""
        else:
            status, fig = "-", ""
        lines.append(f"| {name} | {status} | {fig} |")
    save_json(merged, out / "report.json")
    (out / "report.md").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="musclegait",
        description="Multicontact gait synthesis with embedded muscle "
                    "dynamics for a planar human-prosthesis model.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--config-root",
                       help="directory of <kind>.yaml overrides")
        p.add_argument("--seed", type=int, default=0)
        for kind in ("muscles", "model", "domains", "opt", "sim"):
            p.add_argument(f"--{kind}", help=f"{kind} config path")

    p = sub.add_parser("fit-muscles", help="fit smooth force surrogates")
    common(p)
    p.add_argument("--tol", type=float, default=0.02)
    p.add_argument("--degree", type=int, default=9)
    p.set_defaults(func=cmd_fit_muscles)

    p = sub.add_parser("check-model", help="run model invariant checks")
    common(p)
    p.add_argument("--samples", type=int, default=200)
    p.set_defaults(func=cmd_check_model)

    p = sub.add_parser("synthesize", help="solve a gait-generation variant")
    common(p)
    p.add_argument("--variant", default="tuned_muscles")
    p.add_argument("--grid", type=int, help="collocation nodes per domain")
    p.add_argument("--tol", type=float, help="solver tolerance")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("simulate", help="closed-loop verification")
    common(p)
    p.add_argument("--solution", required=True)
    p.add_argument("--cycles", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", help="merge artifacts into a summary")
    common(p)
    p.add_argument("inputs", nargs="+", help="report/solution JSON files")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SimulationError as exc:
        print(f"simulation failure: {exc}", file=sys.stderr)
        return EXIT_SIM
    except (FitError, MuscleGaitError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
