"""Command-line front end.

Subcommands:
    synth   solve the LMI for a spec and write a gain file
    run     execute an experiment from a config file or preset, export CSVs
    verify  run the invariant/theorem campaign and print a pass/fail table
    sweep   map LMI feasibility over a (kappa, gamma) grid

Exit codes: 0 success, 1 invalid input, 2 infeasible synthesis,
3 run divergence.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import harness as hns
from . import synthesis as syn
from . import verify as ver

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_INFEASIBLE = 2
EXIT_DIVERGED = 3


def _cmd_synth(args) -> int:
    spec = syn.SynthesisSpec(n=args.n, kappa=args.kappa, gamma=args.gamma,
                             rho0=args.rho0, delta_s=args.delta_s)
    res = syn.solve_lmi(spec)
    if not res.feasible:
        print(f"infeasible: best merit {res.best_merit:.6g} "
              f"(kappa={spec.kappa}, gamma={spec.gamma})", file=sys.stderr)
        return EXIT_INFEASIBLE
    gains = syn.derive_smo_gains(res.blocks, res.l1, res.l2, spec, w1=res.w1, w2=res.w2)
    syn.save_gains(gains, args.out)
    eigs, _ = syn.verify_eigenvalues(gains.l1, gains.l2, spec.kappa)
    sup, _ = syn.verify_hinf(gains.l1, gains.l2, spec.gamma)
    print(f"wrote {args.out}")
    print(f"L1={gains.l1:.6g} L2={gains.l2:.6g} H={gains.h:.6g} K0={gains.k0:.6g}")
    print(f"eig(A_L) = {eigs.round(4)}  hinf sup = {sup:.6g} < {spec.gamma}")
    checks = syn.schur_checks(gains.blocks)
    print(f"schur checks: {'all pass' if checks['all_ok'] else 'FAIL'}")
    return EXIT_OK


def _cmd_run(args) -> int:
    if args.config:
        try:
            config = hns.load_config(args.config)
        except (OSError, ValueError) as exc:
            print(f"bad config: {exc}", file=sys.stderr)
            return EXIT_INVALID
    elif args.preset:
        if args.preset not in hns.PRESETS:
            print(f"unknown preset {args.preset!r}; choices: {sorted(hns.PRESETS)}",
                  file=sys.stderr)
            return EXIT_INVALID
        config = hns.PRESETS[args.preset]()
    else:
        print("one of --config or --preset is required", file=sys.stderr)
        return EXIT_INVALID
    if args.seed is not None:
        from dataclasses import replace
        config = replace(config, seed=args.seed)

    gains = None
    if args.gains:
        try:
            gains = syn.load_gains(args.gains)
        except (OSError, syn.SynthesisError) as exc:
            print(f"bad gain file: {exc}", file=sys.stderr)
            return EXIT_INVALID
    try:
        record = hns.run_experiment(config, gains=gains)
    except syn.InfeasibleSynthesis as exc:
        print(f"synthesis failed: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE

    outdir = args.out or "run_output"
    files = hns.export_record(record, outdir)
    if record.aborted:
        print(f"run ABORTED at step {record.abort_step}: {record.abort_reason}",
              file=sys.stderr)
        print(f"partial record in {outdir}")
        return EXIT_DIVERGED
    metrics = hns.compute_metrics(record)
    with open(os.path.join(outdir, "metrics.txt"), "w") as fh:
        fh.write(metrics.summary() + "\n")
    print(f"wrote {len(files) + 1} files to {outdir}")
    print(metrics.summary())
    return EXIT_OK


def _cmd_verify(args) -> int:
    ok = ver.run_campaign()
    print("ALL CHECKS PASSED" if ok else "CAMPAIGN FAILED")
    return EXIT_OK if ok else EXIT_INVALID


def _cmd_sweep(args) -> int:
    kappas = np.geomspace(args.kappa_min, args.kappa_max, args.kappa_points)
    gammas = np.geomspace(args.gamma_min, args.gamma_max, args.gamma_points)
    rows = ["kappa,gamma,feasible,best_merit"]
    n_feasible = 0
    for ka in kappas:
        for ga in gammas:
            res = syn.solve_lmi(syn.SynthesisSpec(n=1, kappa=float(ka), gamma=float(ga)))
            n_feasible += res.feasible
            rows.append(f"{ka!r},{ga!r},{int(res.feasible)},{res.best_merit!r}")
    text = "\n".join(rows) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
        print(f"wrote {args.out} ({n_feasible}/{len(kappas) * len(gammas)} feasible)")
    else:
        print(text, end="")
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="smobs",
                                     description="sliding-mode disturbance observer toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="synthesize observer gains")
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--kappa", type=float, default=10.0)
    p.add_argument("--gamma", type=float, default=0.5)
    p.add_argument("--rho0", type=float, default=250.0)
    p.add_argument("--delta-s", dest="delta_s", type=float, default=0.05)
    p.add_argument("--out", default="gains.txt")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("run", help="run an experiment")
    p.add_argument("--config", help="INI config path")
    p.add_argument("--preset", help=f"one of {sorted(hns.PRESETS)}")
    p.add_argument("--gains", help="gain file (otherwise synthesized)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int, help="override config seed")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("verify", help="run the verification campaign")
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("sweep", help="feasibility sweep over (kappa, gamma)")
    p.add_argument("--kappa-min", type=float, default=0.5)
    p.add_argument("--kappa-max", type=float, default=20.0)
    p.add_argument("--kappa-points", type=int, default=7)
    p.add_argument("--gamma-min", type=float, default=0.05)
    p.add_argument("--gamma-max", type=float, default=2.0)
    p.add_argument("--gamma-points", type=int, default=7)
    p.add_argument("--out", help="CSV output path")
    p.set_defaults(func=_cmd_sweep)

    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code not in (0, None) else EXIT_OK
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
