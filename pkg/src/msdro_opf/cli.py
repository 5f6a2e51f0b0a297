"""Command-line entry point.

Subcommands
-----------
quality   derive per-feature Wasserstein budgets from noise descriptions
          or from original/published sample files
solve     solve one instance, write solution/dual/valuation CSVs
sweep     grid sweep over budgets, write the table CSVs
oos       out-of-sample violation check for one budget vector

Exit codes: 0 success, 2 input error, 3 infeasible model, 4 solver
failure.  Every file-producing run writes a ``manifest.json`` echoing the
resolved parameters and derived seeds next to its outputs.  The LP
backend is chosen by the ``MSDRO_SOLVER`` environment variable.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .data_quality import (NoiseModel, additive_noise_bound,
                           aggregation_protocol_bound, read_quality_csv,
                           read_samples_csv, write_quality_csv,
                           write_samples_csv)
from .dro_core import MultiDataset
from .errors import (ExtractionError, InputError, ModeError, SizeError,
                     TopologyError, UnsupportedError)
from .evaluation import (DEFAULT_GRID, SweepConfig, derive_seed,
                         empirical_violation, oos_matrix, run_sweep,
                         training_matrix, write_sweep_csvs)
from .lp import LpError
from .network import bundled_network, load_network
from .opf_model import cvar_tightening_rerun, solve_msdro_opf
from .valuation import (forecast_value_decomposition, marginal_data_value,
                        write_data_value_csv, write_forecast_value_csv)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_INFEASIBLE = 3
EXIT_SOLVER = 4

_INPUT_ERRORS = (InputError, SizeError, ModeError, TopologyError,
                 UnsupportedError, FileNotFoundError, IsADirectoryError,
                 json.JSONDecodeError)


def _fmt(x: float) -> str:
    return f"{x:.10g}"


def _load_net(args):
    if args.network is None:
        return bundled_network(), "bundled:case5"
    return load_network(args.network), str(args.network)


def _resolve_epsilons(args, dim: int) -> list:
    if getattr(args, "eps", None) is not None:
        eps = [float(v) for v in args.eps]
    elif getattr(args, "quality", None) is not None:
        eps = list(read_quality_csv(args.quality).values())
    else:
        raise InputError("need --eps values or a --quality file")
    if len(eps) != dim:
        raise InputError(f"got {len(eps)} budgets for {dim} uncertain "
                         "resources")
    return eps


def _resolve_samples(args, network) -> tuple:
    """Training data: from a CSV or generated; returns (matrix, source)."""
    if getattr(args, "data", None) is not None:
        names, xs = read_samples_csv(args.data)
        if xs.shape[0] != len(network.resources):
            raise InputError(f"{args.data}: {xs.shape[0]} feature columns "
                             f"for {len(network.resources)} resources")
        return xs, str(args.data)
    n = args.train
    seed = derive_seed(args.seed, "train")
    xs = training_matrix(network, n, seed, args.error_mean)
    return xs, f"generated:n={n},seed={seed}"


def _write_manifest(outdir: Path, payload: dict) -> Path:
    path = outdir / "manifest.json"
    payload = dict(payload, version=__version__)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def cmd_quality(args) -> int:
    if args.noise is not None and args.original is not None:
        raise InputError("--noise and --original are mutually exclusive")
    qualities: dict[str, float] = {}
    if args.noise is not None:
        kind, sep, value = args.noise.partition(":")
        if not sep:
            raise InputError("--noise expects KIND:PARAM, e.g. laplace:0.05")
        try:
            param = float(value)
        except ValueError:
            raise InputError(f"--noise parameter {value!r} is not a number")
        if kind == "laplace":
            model = NoiseModel.laplace(param, dimension=args.dimension)
        elif kind == "gaussian":
            model = NoiseModel.gaussian(param, dimension=args.dimension)
        else:
            raise InputError(f"unknown noise kind {kind!r}")
        norm = "l1" if args.p == 1 else "l2"
        signal = additive_noise_bound(model, p=args.p, norm=norm)
        qualities["xi_1"] = signal.epsilon
    elif args.original is not None:
        if args.published is None:
            raise InputError("--original requires --published")
        names_a, xa = read_samples_csv(args.original)
        names_b, xb = read_samples_csv(args.published)
        if len(names_a) != len(names_b):
            raise InputError("original and published files have different "
                             "feature counts")
        for j, name in enumerate(names_a):
            signal = aggregation_protocol_bound(xa[j], xb[j], p=args.p)
            qualities[name] = signal.epsilon
    else:
        raise InputError("need --noise KIND:PARAM or --original/--published")

    for name, eps in qualities.items():
        print(f"{name}: epsilon = {_fmt(eps)} (p={args.p})")
    if args.out is not None:
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        write_quality_csv(outdir / "quality.csv", qualities)
        _write_manifest(outdir, {
            "command": "quality", "noise": args.noise,
            "original": args.original and str(args.original),
            "published": args.published and str(args.published),
            "p": args.p, "outputs": ["quality.csv"],
        })
        print(f"wrote {outdir / 'quality.csv'}")
    return EXIT_OK


def _infeasibility_note(sol) -> str:
    built = sol.built
    m = built.model
    families: dict[str, int] = {}
    for name in m.constraint_index:
        families[name.split("[")[0]] = families.get(name.split("[")[0], 0) + 1
    listing = ", ".join(f"{k}({v})" for k, v in sorted(families.items()))
    return (f"model is {sol.status}: {m.num_constraints} rows in families "
            f"{listing}; check line limits, generator capacity against "
            f"loads, and the support width")


def cmd_solve(args) -> int:
    network, net_src = _load_net(args)
    xs, data_src = _resolve_samples(args, network)
    eps = _resolve_epsilons(args, len(network.resources))
    data = MultiDataset.from_matrix(xs, eps)

    sol = solve_msdro_opf(network, data, args.gamma)
    if sol.status == "infeasible":
        print(_infeasibility_note(sol), file=sys.stderr)
        return EXIT_INFEASIBLE
    if not sol.optimal:
        print(f"solver failed: status {sol.status}", file=sys.stderr)
        return EXIT_SOLVER

    final = sol
    if not args.no_tighten:
        final = cvar_tightening_rerun(network, data, args.gamma, sol)
        if not final.optimal:
            final = sol

    report = marginal_data_value(sol)
    forecast = forecast_value_decomposition(sol, network, data)

    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / "solution.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        dim = data.dimension
        writer.writerow(["generator", "bus", "p", "r_plus", "r_minus"]
                        + [f"alpha_{j + 1}" for j in range(dim)])
        dec = final.decision
        for g, gen in enumerate(network.generators):
            writer.writerow([str(g + 1), str(gen.bus), _fmt(dec.p[g]),
                             _fmt(dec.r_plus[g]), _fmt(dec.r_minus[g])]
                            + [_fmt(dec.alpha[g, j]) for j in range(dim)])

    with open(outdir / "duals.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["constraint", "dual"])
        lp_sol = sol.lp_solution
        for name in sol.built.model.constraint_index:
            writer.writerow([name, _fmt(lp_sol.dual(name))])

    write_data_value_csv(outdir / "valuation.csv", report)
    write_forecast_value_csv(outdir / "forecast_value.csv", forecast)
    outputs = ["solution.csv", "duals.csv", "valuation.csv",
               "forecast_value.csv", "samples.csv"]
    write_samples_csv(outdir / "samples.csv", xs)
    _write_manifest(outdir, {
        "command": "solve", "network": net_src, "data": data_src,
        "epsilons": eps, "gamma": args.gamma, "seed": args.seed,
        "train_seed": derive_seed(args.seed, "train"),
        "error_mean": args.error_mean, "tighten": not args.no_tighten,
        "outputs": outputs,
    })

    print("status: optimal")
    print(f"objective: {_fmt(sol.objective)}")
    if not args.no_tighten and final is not sol:
        print(f"objective after tightening re-run: {_fmt(final.objective)}")
    for j in range(data.dimension):
        print(f"feature {j}: eps={_fmt(eps[j])} "
              f"lambda_co={_fmt(report.lambda_co[j])} "
              f"lambda_cc={_fmt(report.lambda_cc[j])} "
              f"marginal_value={_fmt(report.marginal_value[j])} "
              f"[{report.regime[j]}]")
    print(f"wrote {len(outputs)} files to {outdir}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    network, net_src = _load_net(args)
    config = SweepConfig(
        grid=(DEFAULT_GRID if args.grid is None
              else tuple(float(v) for v in args.grid)),
        n_samples=args.n_samples,
        seed=args.seed,
        gamma=args.gamma,
        oos_samples=args.oos_samples,
        error_mean=args.error_mean,
        tighten=not args.no_tighten,
        # The default grid gets the extra 0.0 out-of-sample column for the
        # SAA comparison; an explicit --grid is swept exactly as given.
        oos_include_zero=args.grid is None,
    )
    result = run_sweep(network, config, jobs=args.jobs)
    failed = [c for c in result.cells if not c.optimal]
    for cell in failed:
        print(f"cell {cell.epsilons}: {cell.status} {cell.message}",
              file=sys.stderr)
    if len(failed) == len(result.cells):
        print("every sweep cell failed", file=sys.stderr)
        return EXIT_SOLVER

    outdir = Path(args.out)
    paths = write_sweep_csvs(result, outdir)
    _write_manifest(outdir, {
        "command": "sweep", "network": net_src,
        "grid": list(config.grid), "n_samples": config.n_samples,
        "gamma": config.gamma, "seed": config.seed,
        "train_seed": derive_seed(config.seed, "train"),
        "oos_samples": config.oos_samples,
        "oos_seed_scheme": "sha256(seed,'oos',cell,feature)",
        "error_mean": config.error_mean, "tighten": config.tighten,
        "jobs": args.jobs,
        "outputs": [p.name for p in paths],
    })
    print(f"{len(result.cells) - len(failed)}/{len(result.cells)} cells "
          f"solved; wrote {len(paths)} files to {outdir}")
    return EXIT_OK


def cmd_oos(args) -> int:
    network, net_src = _load_net(args)
    xs, data_src = _resolve_samples(args, network)
    eps = _resolve_epsilons(args, len(network.resources))
    data = MultiDataset.from_matrix(xs, eps)

    sol = solve_msdro_opf(network, data, args.gamma)
    if sol.status == "infeasible":
        print(_infeasibility_note(sol), file=sys.stderr)
        return EXIT_INFEASIBLE
    if not sol.optimal:
        print(f"solver failed: status {sol.status}", file=sys.stderr)
        return EXIT_SOLVER

    samples = oos_matrix(network, eps, args.oos_samples, args.seed)
    rate = empirical_violation(sol.decision, samples, network)
    print(f"objective: {_fmt(sol.objective)}")
    print(f"violation: {_fmt(rate)} over {args.oos_samples} samples "
          f"(gamma = {_fmt(args.gamma)})")
    if args.out is not None:
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        with open(outdir / "oos.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            dim = len(eps)
            writer.writerow([f"eps{j + 1}" for j in range(dim)]
                            + ["violation_probability", "n_samples", "status"])
            writer.writerow([_fmt(e) for e in eps]
                            + [_fmt(rate), str(args.oos_samples), "optimal"])
        _write_manifest(outdir, {
            "command": "oos", "network": net_src, "data": data_src,
            "epsilons": eps, "gamma": args.gamma, "seed": args.seed,
            "oos_samples": args.oos_samples,
            "oos_seed_scheme": "sha256(seed,'oos',cell,feature)",
            "error_mean": args.error_mean,
            "outputs": ["oos.csv"],
        })
    return EXIT_OK


def _add_common_model_flags(sub) -> None:
    sub.add_argument("--network", type=Path, default=None,
                     help="network JSON file (default: bundled case5)")
    sub.add_argument("--gamma", type=float, default=0.05,
                     help="joint chance-constraint risk level")
    sub.add_argument("--seed", type=int, default=1, help="master seed")
    sub.add_argument("--error-mean", choices=["zero", "forecast-shift"],
                     default="zero",
                     help="training error centering convention")


def _add_data_flags(sub) -> None:
    sub.add_argument("--data", type=Path, default=None,
                     help="training sample CSV (xi_1,...,xi_D header)")
    sub.add_argument("--train", type=int, default=20,
                     help="generate this many training samples instead")
    sub.add_argument("--eps", type=float, nargs="+", default=None,
                     help="per-feature Wasserstein budgets")
    sub.add_argument("--quality", type=Path, default=None,
                     help="feature,epsilon CSV instead of --eps")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="msdro",
        description="Multi-source Wasserstein DRO for chance-constrained "
                    "DC-OPF with data valuation",
    )
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="command", required=True)

    q = subs.add_parser("quality", help="derive Wasserstein budgets")
    q.add_argument("--noise", default=None,
                   help="analytic noise bound, KIND:PARAM "
                        "(laplace:SCALE or gaussian:STDDEV)")
    q.add_argument("--original", type=Path, default=None,
                   help="original samples CSV for the empirical bound")
    q.add_argument("--published", type=Path, default=None,
                   help="published samples CSV for the empirical bound")
    q.add_argument("--p", type=int, choices=[1, 2], default=1,
                   help="Wasserstein order")
    q.add_argument("--dimension", type=int, default=1,
                   help="feature dimension for analytic bounds")
    q.add_argument("--out", type=Path, default=None)
    q.set_defaults(func=cmd_quality)

    s = subs.add_parser("solve", help="solve one instance")
    _add_common_model_flags(s)
    _add_data_flags(s)
    s.add_argument("--no-tighten", action="store_true",
                   help="skip the re-run with idle balancers pinned")
    s.add_argument("--out", type=Path, default=Path("msdro_out"))
    s.set_defaults(func=cmd_solve)

    w = subs.add_parser("sweep", help="grid sweep over budgets")
    _add_common_model_flags(w)
    w.add_argument("--grid", type=float, nargs="+", default=None,
                   help="budget grid applied to every feature "
                        "(default: 1.0 0.1 0.005 0.001)")
    w.add_argument("--n-samples", type=int, default=20)
    w.add_argument("--oos-samples", type=int, default=1000)
    w.add_argument("--jobs", type=int, default=1,
                   help="parallel worker processes for sweep cells")
    w.add_argument("--no-tighten", action="store_true")
    w.add_argument("--out", type=Path, default=Path("msdro_out"))
    w.set_defaults(func=cmd_sweep)

    o = subs.add_parser("oos", help="out-of-sample violation check")
    _add_common_model_flags(o)
    _add_data_flags(o)
    o.add_argument("--oos-samples", type=int, default=1000)
    o.add_argument("--out", type=Path, default=None)
    o.set_defaults(func=cmd_oos)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (LpError, ExtractionError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
