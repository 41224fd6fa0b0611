"""Command-line front end.

Every subcommand reads a configuration (``--preset`` and/or ``--config``),
runs one library operation and writes CSV and ``key = value`` report files
into the output directory.  Exit codes: 0 success, 2 configuration error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import network
from .config import PRESETS, ConfigError, ExperimentConfig, load_config, parse_config
from .controllability import spectral_check
from .dynamics import propagate, write_theta_csv, write_trajectory_csv
from .errors import DivergenceError, HandsOffError
from .graphon import EXACT_CUT_MAX_PARTS, check_sandwich, cut_norm, l1_norm, save_step_csv, project_to_step
from .io import write_csv, write_kv
from .solvers import SolveReport, solve_l1, solve_nonconvex

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def _out(cfg: ExperimentConfig, args) -> Path:
    d = Path(args.out or cfg.out_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _solve(cfg: ExperimentConfig, system=None):
    system = system or cfg.system()
    l1 = solve_l1(system, cfg.options)
    if cfg.kind == "l1":
        return system, l1, None
    return system, solve_nonconvex(system, cfg.penalty, cfg.options, l1_report=l1), l1


def _write_solution(out: Path, prefix: str, system, rep: SolveReport, extra=None):
    rep.write_control_csv(out / f"{prefix}_control.csv")
    write_trajectory_csv(out / f"{prefix}_trajectory.csv", system, propagate(system, rep.control))
    write_theta_csv(out / f"{prefix}_theta.csv", system, rep.theta)
    rep.write_iterations_csv(out / f"{prefix}_iterations.csv")
    metrics = {"system": system.name, "n_s": system.n_s, "m": system.m, "K": system.K,
               "T": system.T, "lambda": system.lam}
    metrics.update(rep.scalar_metrics())
    metrics.update(extra or {})
    write_kv(out / f"{prefix}_report.txt", metrics)


def cmd_solve(cfg: ExperimentConfig, args) -> int:
    out = _out(cfg, args)
    system, rep, l1 = _solve(cfg)
    extra = {}
    if l1 is not None:
        extra = {"penalty": cfg.penalty.name, "l1_sparsity_rate": l1.costs["sparsity_rate"],
                 "l1_terminal_error_sq": l1.costs["terminal_error_sq"]}
    _write_solution(out, cfg.prefix, system, rep, extra)
    print(f"{cfg.prefix}: sparsity_rate={rep.costs['sparsity_rate']:.4f} "
          f"terminal_error_sq={rep.costs['terminal_error_sq']:.6g} purity={rep.certificate.purity:.4f}")
    return EXIT_OK


def cmd_sweep(cfg: ExperimentConfig, args) -> int:
    out = _out(cfg, args)
    base = cfg.system(cfg.lambda_list[0])
    xf_sq = base.norm_sq(base.xf)
    absolute = xf_sq == 0.0
    rows = []
    for lam in cfg.lambda_list:
        _, rep, _ = _solve(cfg, base.with_lambda(lam))
        err = rep.costs["terminal_error_sq"]
        rows.append((lam, rep.costs["sparsity_rate"], err if absolute else err / xf_sq, int(absolute)))
    path = write_csv(out / f"{cfg.prefix}_sweep.csv",
                     ["lambda", "sparsity_rate", "terminal_error_rate", "error_is_absolute"], rows)
    if absolute:
        print("target state is zero: terminal_error_rate holds the absolute squared error")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_certify(cfg: ExperimentConfig, args) -> int:
    out = _out(cfg, args)
    system, rep, _ = _solve(cfg)
    cert = rep.certificate
    write_csv(out / f"{cfg.prefix}_violations.csv", ["k", "channel", "t", "u", "theta"],
              ((k, j + 1, system.midtimes[k], u, th) for k, j, u, th in cert.violations))
    check = spectral_check(system.A, system.b_cols)
    write_kv(out / f"{cfg.prefix}_certificate.txt",
             {"purity": cert.purity, "consistency": cert.consistency,
              "violations": len(cert.violations), "disc_tol": cfg.options.disc_tol,
              "theta_tol": cfg.options.theta_tol, "spectral_check": check.overall})
    print(f"{cfg.prefix}: purity={cert.purity:.4f} consistency={cert.consistency} "
          f"(spectral check {'passed' if check.overall else 'failed'})")
    return EXIT_OK


def cmd_controllability(cfg: ExperimentConfig, args) -> int:
    out = _out(cfg, args)
    system = cfg.system()
    rep = spectral_check(system.A, system.b_cols)
    rep.write_report(out / f"{cfg.prefix}_controllability.txt")
    rep.write_eigenvalues_csv(out / f"{cfg.prefix}_eigenvalues.csv")
    print(f"{cfg.prefix}: overall={str(rep.overall).lower()} "
          f"min_abs_eigenvalue={rep.min_abs_eigenvalue:.3g} min_gap={rep.min_gap:.3g}")
    return EXIT_OK


def cmd_cutnorm(cfg: ExperimentConfig, args) -> int:
    out = _out(cfg, args)
    opts = cfg.raw.get("cutnorm", {}) or {}
    g = cfg.graphon
    parts = g.parts if g.kind == "step" else int(opts.get("parts", 12))
    mode = opts.get("mode", "exact" if parts <= EXACT_CUT_MAX_PARTS else "heuristic")
    step = project_to_step(g, parts)
    res = cut_norm(step, mode=mode, seed=args.seed)
    sw = check_sandwich(step, mode=mode, seed=args.seed)
    save_step_csv(step, out / f"{cfg.prefix}_step_graphon.csv")
    write_kv(out / f"{cfg.prefix}_cutnorm.txt",
             {"graphon": g.name, "parts": parts, "mode": mode, "seed": args.seed,
              "cut_norm": res.value, "certificate": res.certificate, "l1_norm": l1_norm(step),
              "operator_norm": sw.op, "sandwich_upper": sw.upper, "sandwich_holds": sw.holds})
    print(f"{cfg.prefix}: cut_norm={res.value:.6g} ({res.certificate}) operator_norm={sw.op:.6g} "
          f"sandwich_holds={sw.holds}")
    return EXIT_OK


FAMILIES = {"example3": (network.example3_limit, network.example3_network)}


def cmd_approximate(cfg: ExperimentConfig, args) -> int:
    out = _out(cfg, args)
    exp = cfg.raw.get("experiment")
    problems = []
    if not isinstance(exp, dict):
        raise ConfigError(["missing 'experiment' block"])
    fam = exp.get("family")
    if fam not in FAMILIES:
        problems.append(f"experiment.family: expected one of {', '.join(FAMILIES)}")
    n_list = exp.get("n_list", [])
    lam_list = exp.get("lambda_list", [])
    n_s = exp.get("n_s", 500)
    if not n_list or not all(isinstance(n, int) and n > 0 for n in n_list):
        problems.append("experiment.n_list: expected positive integers")
    elif not isinstance(n_s, int) or any(n_s % n for n in n_list):
        problems.append("experiment.n_s: must be a multiple of every n")
    if not lam_list or not all(isinstance(v, (int, float)) and v > 0 for v in lam_list):
        problems.append("experiment.lambda_list: expected positive numbers")
    if problems:
        raise ConfigError(problems)
    make_limit, family = FAMILIES[fam]
    res = network.convergence_experiment(make_limit(), family, n_list, [float(v) for v in lam_list],
                                         T=float(exp.get("T", 1.0)), K=int(exp.get("K", 100)),
                                         n_s=n_s, opts=cfg.options, seed=args.seed)
    path = network.write_convergence_csv(out / f"{cfg.prefix}_convergence.csv", res.records)
    write_kv(out / f"{cfg.prefix}_approximation.txt",
             {"limit_controllable": res.limit_controllable,
              "gap_sequences_flagged": ",".join(res.approximation.flags) or "none",
              "min_gap": min(r.gap for r in res.records)})
    for c in res.caveats:
        print(f"caveat: {c}")
    print(f"wrote {path}")
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "sweep": cmd_sweep, "certify": cmd_certify,
            "controllability": cmd_controllability, "cutnorm": cmd_cutnorm,
            "approximate": cmd_approximate}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML configuration file")
    common.add_argument("--preset", help=f"built-in configuration: {', '.join(sorted(PRESETS))}")
    common.add_argument("--out", help="output directory (overrides output.dir)")
    common.add_argument("--seed", type=int, default=0, help="seed for randomized steps (default 0)")
    p = argparse.ArgumentParser(prog="handsoff", description=__doc__.splitlines()[0], parents=[common])
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")
    helps = {"solve": "solve the L1 or non-convex problem and export control, states and theta",
             "sweep": "solve over system.lambda_list and tabulate sparsity and terminal error",
             "certify": "solve and check the bang-off-bang threshold structure",
             "controllability": "spectral approximate-controllability test",
             "cutnorm": "cut norm of the (projected) graphon with the operator-norm sandwich",
             "approximate": "finite-network convergence experiment"}
    for name, text in helps.items():
        sub.add_parser(name, help=text, parents=[common])
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        raw = load_config(args.config, args.preset)
        cfg = parse_config(raw, need_lambda_list=args.command == "sweep")
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DivergenceError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except HandsOffError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
