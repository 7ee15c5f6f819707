"""Command-line surface.

Subcommands map one-to-one onto the library operations: generate a scene,
observe it, solve the coupled factorization, certify a scene, align an
estimate against the truth, run the ambiguity counterexample, evaluate
the dominance probability, and run a full SNR sweep. Exit codes: 0 on
success, 1 on a validation failure, 2 on a usage error.
"""

import argparse
import dataclasses
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import bounds, counterexample, experiment, fileio, scenegen, solver
from .model import decimate_abundances, spatial_decimate, spectral_decimate


def _print_json(payload, out=None):
    text = json.dumps(payload, indent=2, default=fileio._json_default)
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text + "\n", encoding="utf-8")
    print(text)


def _cmd_generate(args):
    config = fileio.read_scene_config(args.config)
    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed)
    spatial = scenegen.build_spatial_response(
        config.width, config.height, kernel=config.kernel,
        kernel_size=config.kernel_size, variance=config.kernel_var,
        factor=config.factor,
    )
    generated = scenegen.generate_scene(config, spatial)
    out = fileio.save_generated_scene(args.out, generated)
    print(f"scene written to {out} (draws: {generated.draws})")
    return 0


def _cmd_observe(args):
    image = fileio.read_matrix(args.image)
    spectral = fileio.read_matrix(args.spectral)
    spatial = fileio.read_spatial_response(args.spatial)
    y_ms = spectral_decimate(spectral, image)
    y_hs = spatial_decimate(image, spatial)
    if args.snr_db is not None and not math.isinf(args.snr_db):
        y_ms = scenegen.add_noise(y_ms, args.snr_db, args.seed)
        y_hs = scenegen.add_noise(y_hs, args.snr_db, args.seed + 1)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    fileio.write_matrix(out / "ms.csv", y_ms)
    fileio.write_matrix(out / "hs.csv", y_hs)
    print(f"observations written to {out}")
    return 0


def _cmd_solve(args):
    y_ms = fileio.read_matrix(args.ms)
    y_hs = fileio.read_matrix(args.hs)
    spectral = fileio.read_matrix(args.spectral)
    spatial = fileio.read_spatial_response(args.spatial)
    if args.config:
        config = fileio.read_solver_config(args.config)
    else:
        config = solver.SolverConfig(materials=args.materials)
    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed)
    solution = solver.solve_coupled(y_ms, y_hs, spectral, spatial, config)
    out = fileio.save_solution(args.out, solution)
    print(
        f"solution written to {out} "
        f"(objective {solution.objective_trace[-1]:.6g}, "
        f"{solution.iterations} iterations, {solution.termination})"
    )
    return 0


def _cmd_certify(args):
    endmembers = fileio.read_matrix(args.endmembers)
    abundances = fileio.read_matrix(args.abundances)
    spectral = fileio.read_matrix(args.spectral)
    spatial = fileio.read_spatial_response(args.spatial)
    certificate = bounds.certify(endmembers, abundances, spectral, spatial)
    _print_json(certificate.to_dict(), args.out)
    return 0


def _cmd_align(args):
    a_true = fileio.read_matrix(args.true_endmembers)
    a_est = fileio.read_matrix(args.endmembers)
    s_true = fileio.read_matrix(args.true_abundances)
    s_est = fileio.read_matrix(args.abundances)
    spatial = fileio.read_spatial_response(args.spatial)
    spectral = fileio.read_matrix(args.spectral)
    kruskal = bounds.kruskal_rank(spectral @ a_true)
    report = bounds.extract_alignment(
        a_true, a_est,
        decimate_abundances(s_true, spatial),
        decimate_abundances(s_est, spatial),
        kruskal=kruskal,
    )
    _print_json(report.to_dict(), args.out)
    return 0


def _cmd_counterexample(args):
    instance = counterexample.build_counterexample(args.rho)
    alpha1 = args.alpha1 if args.alpha1 is not None else args.rho
    report = counterexample.verify_counterexample(instance, alpha1, args.grid)
    _print_json(report.to_dict(), args.out)
    if args.surface:
        path = Path(args.surface)
        path.parent.mkdir(parents=True, exist_ok=True)
        lines = ["alpha1,error,objective"]
        for a, e, o in zip(report.grid_alphas, report.grid_errors, report.grid_objectives):
            lines.append(f"{a:.17g},{e:.17g},{o:.17g}")
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return 0 if report.passed else 1


def _cmd_dominance(args):
    analytic = bounds.dominance_probability(args.materials, args.bands)
    payload = {
        "materials": args.materials,
        "bands": args.bands,
        "analytic_raw": analytic.raw,
        "analytic": analytic.clamped,
    }
    if args.trials:
        mc = bounds.dominance_monte_carlo(args.materials, args.bands, args.trials, args.seed)
        payload.update({
            "trials": mc.trials,
            "successes": mc.successes,
            "empirical": mc.rate,
            "binomial_sigma": math.sqrt(max(mc.rate * (1 - mc.rate), 1e-12) / mc.trials),
        })
    _print_json(payload, args.out)
    return 0


def _cmd_experiment(args):
    config = fileio.read_experiment_config(args.config)
    if args.out is not None:
        config = dataclasses.replace(config, output_dir=args.out)
    if args.seed is not None:
        config = dataclasses.replace(config, master_seed=args.seed)
    records = experiment.run_experiment(config)
    means = experiment.mean_mse_by_snr(records)
    for snr in config.snr_db:
        label = "inf" if math.isinf(snr) else f"{snr:g}"
        mean = means.get(snr)
        print(f"snr {label} dB: mean mse {mean:.6g}" if mean is not None
              else f"snr {label} dB: all trials failed")
    failed = [r for r in records if r.error is not None]
    if failed:
        print(f"{len(failed)} failed trials (see summary.json)", file=sys.stderr)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="hsrfusion",
        description="Hyperspectral super-resolution: coupled factorization and recovery certificates",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate a synthetic scene")
    p.add_argument("--config", required=True, help="scene config JSON")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("observe", help="apply the observation operators to an image")
    p.add_argument("--image", required=True)
    p.add_argument("--spectral", required=True)
    p.add_argument("--spatial", required=True)
    p.add_argument("--snr-db", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_observe)

    p = sub.add_parser("solve", help="solve the coupled factorization")
    p.add_argument("--ms", required=True)
    p.add_argument("--hs", required=True)
    p.add_argument("--spectral", required=True)
    p.add_argument("--spatial", required=True)
    p.add_argument("--config", default=None, help="solver config JSON")
    p.add_argument("--materials", type=int, default=None,
                   help="number of endmembers (when no config file)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("certify", help="compute the recovery certificate of a scene")
    p.add_argument("--endmembers", required=True)
    p.add_argument("--abundances", required=True)
    p.add_argument("--spectral", required=True)
    p.add_argument("--spatial", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_certify)

    p = sub.add_parser("align", help="align an estimate against the ground truth")
    p.add_argument("--true-endmembers", required=True)
    p.add_argument("--endmembers", required=True)
    p.add_argument("--true-abundances", required=True)
    p.add_argument("--abundances", required=True)
    p.add_argument("--spectral", required=True)
    p.add_argument("--spatial", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_align)

    p = sub.add_parser("counterexample", help="verify the exact-recovery counterexample")
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--alpha1", type=float, default=None)
    p.add_argument("--grid", type=int, default=21)
    p.add_argument("--out", default=None)
    p.add_argument("--surface", default=None, help="CSV path for the error surface")
    p.set_defaults(func=_cmd_counterexample)

    p = sub.add_parser("dominance", help="dominance probability: analytic bound and Monte Carlo")
    p.add_argument("--materials", "--n", dest="materials", type=int, required=True)
    p.add_argument("--bands", "--m", dest="bands", type=int, required=True)
    p.add_argument("--trials", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_dominance)

    p = sub.add_parser("experiment", help="run an SNR sweep")
    p.add_argument("--config", required=True, help="experiment config JSON")
    p.add_argument("--out", default=None, help="override the output directory")
    p.add_argument("--seed", type=int, default=None, help="override the master seed")
    p.set_defaults(func=_cmd_experiment)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "command", None) == "solve" and not args.config and args.materials is None:
        parser.error("solve needs --config or --materials")
    try:
        return args.func(args)
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
