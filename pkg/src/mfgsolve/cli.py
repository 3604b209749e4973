"""Command-line entry point.

Subcommands: solve, sweep, flattest, groundstate, hopfcole, verify.
Every run writes into --out: a config echo (config_echo.yaml), one or more
CSV tables (17 significant digits, deterministic byte-for-byte for a fixed
seed), a summary.json, and PNG plots where meaningful.

Exit codes: 0 success, 1 solver failure, 2 configuration error,
3 verification/assertion failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time

import numpy as np

from . import asymptotics as asy
from .config import COMMANDS, ConfigError, RunConfig, parse_config
from .energy import InfeasiblePairError
from .fokker_planck import FPSolveError
from .grid import integrate
from .hjb import HJBConvergenceError
from .mfg import MFGConvergenceError, minimizer_verification, solve_mfg
from .verify import run_verify

_FMT = "%.17g"

OUT_ENV = "MFGSOLVE_OUT_DIR"


def _fnum(x) -> str:
    return _FMT % float(x)


def _write_csv(path: str, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fnum(v) if isinstance(v, (int, float, np.floating)) else str(v) for v in row])


def _stringify_keys(obj):
    if isinstance(obj, dict):
        return {str(k): _stringify_keys(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_stringify_keys(v) for v in obj]
    return obj


def _write_summary(outdir: str, payload: dict) -> None:
    payload = _stringify_keys(dict(payload))
    payload["timestamp"] = time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime())
    with open(os.path.join(outdir, "summary.json"), "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")


def _plot(outdir: str, name: str, draw) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    draw(ax)
    fig.tight_layout()
    fig.savefig(os.path.join(outdir, name), dpi=120)
    plt.close(fig)


def _cmd_solve(cfg: RunConfig, outdir: str) -> dict:
    grid = cfg.grid()
    model = cfg.model()
    sol = solve_mfg(model, grid, cfg.solver())
    x = grid.axis_coords()
    if grid.dim == 1:
        rows = [[x[i], sol.u.values[i], sol.m.values[i], sol.w.components[0][i]] for i in range(grid.points_per_axis)]
        _write_csv(os.path.join(outdir, "solution.csv"), ["x", "u", "m", "w"], rows)
        _plot(outdir, "profiles.png", lambda ax: (ax.plot(x, sol.m.values, label="m"),
                                                  ax.plot(x, sol.u.values, label="u"),
                                                  ax.legend(), ax.set_xlabel("x")))
    else:
        np.save(os.path.join(outdir, "u.npy"), sol.u.values)
        np.save(os.path.join(outdir, "m.npy"), sol.m.values)
    return {
        "lambda": float(sol.lam),
        "energy": sol.energy.as_dict(),
        "duality_gap": float(sol.duality_gap),
        "optimality_residual": float(sol.optimality_residual),
        "iterations": int(sol.fixedpoint_iterations),
        "converged": bool(sol.converged),
        "argmin_x": [float(v) for v in np.atleast_1d(sol.argmin_x)],
        "mass": float(integrate(sol.m)),
    }


_SWEEP_HEADER = [
    "epsilon", "lambda", "lambda_tilde", "x_eps", "sup_rescaled_m",
    "energy", "duality_gap", "optimality_residual", "converged",
]


def _sweep_plots(outdir: str, records) -> None:
    eps = np.array([r.epsilon for r in records])
    lams = np.array([r.lam for r in records])
    if np.all(lams < 0):
        slope, r2 = asy.fit_exponent(eps, -lams)
        _plot(outdir, "lambda_fit.png", lambda ax: (
            ax.loglog(eps, -lams, "o-"),
            ax.set_xlabel("epsilon"), ax.set_ylabel("-lambda"),
            ax.set_title(f"slope={slope:.4f}  r2={r2:.6f}")))
    radii = sorted(records[0].mass_fractions)
    _plot(outdir, "mass_fractions.png", lambda ax: (
        [ax.semilogx(eps, [r.mass_fractions[rad] for r in records], "o-", label=f"R={rad}")
         for rad in radii],
        ax.set_xlabel("epsilon"), ax.set_ylabel("rescaled mass fraction"), ax.legend()))
    dists = [float(np.linalg.norm(np.atleast_1d(r.x_eps))) for r in records]
    _plot(outdir, "argmin_trajectory.png", lambda ax: (
        ax.semilogx(eps, dists, "o-"),
        ax.set_xlabel("epsilon"), ax.set_ylabel("|x_eps|")))


def _cmd_sweep(cfg: RunConfig, outdir: str) -> dict:
    grid = cfg.grid()
    model = cfg.model()
    sw = cfg.section("sweep")
    records, rescaled = asy.run_sweep(model, sw["epsilons"], grid, cfg.solver(),
                                      radii=tuple(sw["radii"]), return_rescaled=True,
                                      eta=sw["eta"])
    _write_csv(os.path.join(outdir, "sweep.csv"), _SWEEP_HEADER,
               [[r.epsilon, r.lam, r.lambda_tilde,
                 ";".join(_fnum(v) for v in np.atleast_1d(r.x_eps)),
                 r.sup_rescaled_m, r.energy.total, r.duality_gap,
                 r.optimality_residual, int(r.converged)] for r in records])
    frac_rows = [[r.epsilon] + [r.mass_fractions[rad] for rad in sorted(r.mass_fractions)] for r in records]
    _write_csv(os.path.join(outdir, "mass_fractions.csv"),
               ["epsilon"] + [f"R_{rad:g}" for rad in sorted(records[0].mass_fractions)], frac_rows)
    _sweep_plots(outdir, records)
    report = asy.concentration_report(records, sw["eta"], model)
    eps = np.array([r.epsilon for r in records])
    slope, r2 = asy.fit_exponent(eps, np.abs([r.lam for r in records]))
    if grid.dim == 1:
        _plot(outdir, "rescaled_density.png", lambda ax: (
            [ax.plot(rs.m_bar.grid.axis_coords(), rs.m_bar.values, label=f"eps={r.epsilon:g}")
             for rs, r in zip(rescaled, records)],
            ax.set_xlabel("y"), ax.set_ylabel("rescaled m"), ax.legend()))
        rg = rescaled[-1].m_bar.grid
        y = rg.axis_coords()
        _write_csv(os.path.join(outdir, "rescaled_profile.csv"), ["y", "m"],
                   [[y[i], rescaled[-1].m_bar.values[i]] for i in range(rg.points_per_axis)])
    from .model import RescaledModel

    return {
        "lambda_slope": float(slope),
        "lambda_fit_r2": float(r2),
        "expected_slope": float(RescaledModel(model).e_lam),
        "concentration": report,
        "records": [{"epsilon": r.epsilon, "lambda": r.lam, "lambda_tilde": r.lambda_tilde,
                     "sup_rescaled_m": r.sup_rescaled_m, "converged": r.converged} for r in records],
    }


def _cmd_flattest(cfg: RunConfig, outdir: str) -> dict:
    grid = cfg.grid()
    model = cfg.model()
    fl = cfg.section("flattest")
    result = asy.flattest_min_experiment(model, fl["epsilons"], grid, cfg.solver())
    flat = result["admissible_minima"][0]
    dist_sel = [float(np.linalg.norm(np.atleast_1d(x) - np.asarray(flat)))
                for x in result["x_eps"]]
    rows = [[e, ";".join(_fnum(v) for v in np.atleast_1d(x)), sel, d, lam]
            for e, x, sel, d, lam in zip(result["epsilon"], result["x_eps"],
                                         result["selected_minimum"], dist_sel, result["lambdas"])]
    _write_csv(os.path.join(outdir, "flattest.csv"),
               ["epsilon", "x_eps", "selected_minimum", "distance_to_flattest", "lambda"], rows)
    _plot(outdir, "selection.png", lambda ax: (
        ax.semilogx(result["epsilon"], dist_sel, "o-"),
        ax.set_xlabel("epsilon"), ax.set_ylabel("|x_eps - flattest minimum|")))
    return {
        "epsilons": result["epsilon"],
        "selected_minimum": result["selected_minimum"],
        "selected_exponent": result["selected_exponent"],
        "admissible_minima": [list(x) for x in result["admissible_minima"]],
        "undetermined": result["undetermined"],
        "distance_to_flattest": dist_sel,
        "lambdas": result["lambdas"],
    }


def _cmd_groundstate(cfg: RunConfig, outdir: str) -> dict:
    grid = cfg.grid()
    model = cfg.model()
    gs = cfg.section("groundstate")
    result = asy.ground_state(model, gs["deltas"], gs["b"], grid, cfg.solver())
    lambdas = [float(s.lam) for s in result["solutions"]]
    steps = [float("nan")] + result["l1_steps"][:-1]
    rows = [[d, lam, step] for d, lam, step in zip(result["deltas"], lambdas, steps)]
    _write_csv(os.path.join(outdir, "groundstate.csv"), ["delta", "lambda", "l1_step_from_previous"], rows)
    limit = result["limit"]
    if limit.m.grid.dim == 1:
        x = limit.m.grid.axis_coords()
        _write_csv(os.path.join(outdir, "ground_state_profile.csv"), ["x", "m", "u"],
                   [[x[i], limit.m.values[i], limit.u.values[i]] for i in range(len(x))])
        _plot(outdir, "ground_state.png", lambda ax: (
            ax.semilogy(x, np.maximum(limit.m.values, 1e-300)),
            ax.set_xlabel("x"), ax.set_ylabel("m (log scale)")))
    c1, c2, envelope_ok = result["decay_fit"]
    return {
        "deltas": result["deltas"],
        "lambdas": lambdas,
        "l1_steps": result["l1_steps"],
        "limit_lambda": float(limit.lam),
        "limit_hjb_residual": float(result["limit_hjb_residual"]),
        "limit_fp_residual": float(result["limit_fp_residual"]),
        "decay_fit": {"c1": float(c1), "c2": float(c2), "envelope_ok": bool(envelope_ok)},
    }


def _cmd_hopfcole(cfg: RunConfig, outdir: str) -> dict:
    grid = cfg.grid()
    model = cfg.model()
    sol = solve_mfg(model, grid, cfg.solver())
    hc = asy.hopf_cole_crosscheck(model, grid, mfg_sol=sol, config=cfg.solver())
    x = grid.axis_coords()
    if grid.dim == 1:
        _write_csv(os.path.join(outdir, "hopf_cole.csv"), ["x", "m_mfg", "v_squared"],
                   [[x[i], sol.m.values[i], hc["v_squared"].values[i]] for i in range(len(x))])
        _plot(outdir, "hopf_cole.png", lambda ax: (
            ax.plot(x, sol.m.values, label="m (coupled solver)"),
            ax.plot(x, hc["v_squared"].values, "--", label="v^2 (eigenproblem)"),
            ax.legend(), ax.set_xlabel("x")))
    return {
        "lambda_mfg": float(sol.lam),
        "lambda_nls": float(hc["lambda_nls"]),
        "lambda_diff": float(hc["lambda_diff"]),
        "density_sup_diff": float(hc["density_sup_diff"]),
        "density_sup_diff_rel": float(hc["density_sup_diff_rel"]),
        "hopf_cole_const_dev": float(hc["hopf_cole_const_dev"]),
    }


def _cmd_verify(cfg: RunConfig, outdir: str, seed: int) -> dict:
    ver = cfg.section("verify")
    report = run_verify(seed=seed, fenchel_samples=ver["fenchel_samples"],
                        subadditivity_fractions=tuple(ver["subadditivity_fractions"]))
    grid = cfg.grid()
    model = cfg.model()
    sol = solve_mfg(model, grid, cfg.solver())
    comp = minimizer_verification(sol, model, grid, trials=ver["competitor_trials"], seed=seed)
    report["checks"]["random_competitors"] = {
        "min_margin": comp["min_margin"],
        "tolerance": comp["tolerance"],
        "passed": comp["passed"],
    }
    report["total"] += 1
    report["passed"] += int(comp["passed"])
    rows = [[name, int(c["passed"])] for name, c in report["checks"].items()]
    _write_csv(os.path.join(outdir, "verify.csv"), ["check", "passed"], rows)
    for name, c in report["checks"].items():
        print(f"[{'PASS' if c['passed'] else 'FAIL'}] {name}")
    return report


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="mfgsolve",
                                     description="Stationary mean-field-game solver and experiment harness")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="YAML configuration file")
    parser.add_argument("--out", default=None, help="output directory (or set $" + OUT_ENV + ")")
    parser.add_argument("--seed", type=int, default=None, help="override the configured RNG seed")
    parser.add_argument("--threads", type=int, default=None, help="cap BLAS/OpenMP thread counts")
    args = parser.parse_args(argv)

    if args.threads is not None:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(args.threads)

    outdir = args.out or os.environ.get(OUT_ENV)
    if not outdir:
        print("error: no output directory (--out or $" + OUT_ENV + ")", file=sys.stderr)
        return 2
    try:
        with open(args.config) as fh:
            cfg = parse_config(fh.read(), command=args.command)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    seed = args.seed if args.seed is not None else cfg.seed
    np.random.seed(seed % 2**32)
    os.makedirs(outdir, exist_ok=True)
    with open(os.path.join(outdir, "config_echo.yaml"), "w") as fh:
        fh.write(cfg.echo())

    t0 = time.perf_counter()
    try:
        if args.command == "solve":
            payload = _cmd_solve(cfg, outdir)
        elif args.command == "sweep":
            payload = _cmd_sweep(cfg, outdir)
        elif args.command == "flattest":
            payload = _cmd_flattest(cfg, outdir)
        elif args.command == "groundstate":
            payload = _cmd_groundstate(cfg, outdir)
        elif args.command == "hopfcole":
            payload = _cmd_hopfcole(cfg, outdir)
        else:
            payload = _cmd_verify(cfg, outdir, seed)
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (MFGConvergenceError, HJBConvergenceError, FPSolveError, InfeasiblePairError) as exc:
        _write_summary(outdir, {"command": args.command, "seed": seed, "status": "solver_failure",
                                "error": str(exc)})
        print(f"solver failure: {exc}", file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    status = "ok"
    code = 0
    if args.command == "verify" and payload["passed"] != payload["total"]:
        status = "verification_failure"
        code = 3
    _write_summary(outdir, {"command": args.command, "seed": seed, "status": status,
                            "elapsed_seconds": time.perf_counter() - t0, **{"result": payload}})
    print(f"{args.command}: {status} ({time.perf_counter() - t0:.1f}s), outputs in {outdir}")
    return code


if __name__ == "__main__":
    sys.exit(main())
