"""Command-line interface.

Subcommands write their outputs to ``--out`` together with a
``manifest.json`` recording the fully resolved configuration; ``replay``
re-runs a manifest. Tables are CSV, reports JSON.

Exit codes: 0 success, 2 bad flags, 3 unparseable input, 4 dimension
mismatch, 5 numerical divergence, 6 I/O failure.
"""
import argparse
import csv
import datetime
import hashlib
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .datasets import load_dataset, read_solution, write_solution
from .errors import DataFormatError, DimensionError, DivergenceError
from .experiments import (
    DEFAULT_LAMBDA_FRACTIONS,
    DEFAULT_MU_RATIOS,
    METHODS,
    MethodSetup,
    SyntheticConfig,
    config_dict,
    cross_validate,
    default_sparsity,
    fold_indices,
    init_k_from_lasso,
    k_from_support,
    lambda_max,
    strict_from_support,
    run_synthetic_trial,
    sparsity_stats,
    summarize,
    template_for,
)
from .model import PenaltySpec, convert_lambda, predict
from .optimality import check_theorem2, perturbation_oracle
from .solver import SolveOptions, lipschitz_estimate, solve, solve_path, step_size

log = logging.getLogger("grpkmax")

EXIT_USAGE, EXIT_PARSE, EXIT_DIMENSION, EXIT_DIVERGENCE, EXIT_IO = 2, 3, 4, 5, 6

PATH_FRACTIONS = tuple(np.geomspace(1e-3, 1.0, 20))


class UsageError(Exception):
    pass


# -- flag parsing helpers ---------------------------------------------------

def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _lambda_arg(text):
    return "auto" if text == "auto" else _float_list(text)


def _k_arg(text):
    return "auto" if text == "auto" else _int_list(text)


def _methods_arg(text):
    methods = [m.strip() for m in text.split(",") if m.strip()]
    bad = [m for m in methods if m not in METHODS]
    if bad or not methods:
        raise argparse.ArgumentTypeError(f"unknown method(s) {bad}; choose from {', '.join(METHODS)}")
    return methods


def _add_solver_flags(p):
    p.add_argument("--max-iters", type=int, default=500)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--step", choices=("unit", "lipschitz"), default="lipschitz")


def _add_penalty_flags(p, lambda_default="auto"):
    p.add_argument("--lambda", dest="lam", type=_lambda_arg, default=lambda_default,
                   help="value, comma-separated grid, or 'auto' (fractions of the all-zero threshold)")
    p.add_argument("--lambda-scale", choices=("sum", "mean"), default="sum",
                   help="'mean' reads lambda for a 1/(2n)-scaled loss and converts it")
    p.add_argument("--mu", type=_float_list, default=list(DEFAULT_MU_RATIOS),
                   help="sparse group lasso l1 weights, as ratios of lambda unless --mu-absolute")
    p.add_argument("--mu-absolute", action="store_true")
    p.add_argument("--k", type=_k_arg, default=None,
                   help="per-group k for grpkmax (comma list) or 'auto' (from a lasso fit)")
    p.add_argument("--strict-full", action="store_true", help="k_i = d_i leaves group i unpenalized")


def _add_data_flags(p):
    p.add_argument("--data", required=True, help="dataset CSV with a header row")
    p.add_argument("--groups", required=True, help="JSON group configuration")
    p.add_argument("--no-standardize", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(prog="grpkmax", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="synthetic recovery benchmark")
    p.add_argument("--m", type=_int_list, default=[10], help="number of groups (comma list)")
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--d", type=int, default=10, help="columns per group")
    p.add_argument("--s", type=_int_list, default=None, help="true nonzeros per group")
    p.add_argument("--noise-var", type=float, default=4.0)
    p.add_argument("--repeats", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--methods", type=_methods_arg, default=list(METHODS))
    p.add_argument("--folds", type=int, default=10)
    _add_penalty_flags(p)
    _add_solver_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("fit", help="fit one method on a CSV dataset")
    _add_data_flags(p)
    p.add_argument("--method", choices=METHODS, default="grpkmax")
    _add_penalty_flags(p)
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--test-fraction", type=float, default=0.0,
                   help="hold out this share of rows and report metrics on them")
    _add_solver_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("path", help="regularization path table")
    _add_data_flags(p)
    p.add_argument("--methods", type=_methods_arg, default=["lasso", "grouplasso", "sparsegrouplasso", "grpkmax"])
    _add_penalty_flags(p)
    p.add_argument("--folds", type=int, default=10, help="0 or 1 skips the CV error column")
    p.add_argument("--seed", type=int, default=0)
    _add_solver_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_path)

    p = sub.add_parser("check", help="certify a grpkmax solution")
    _add_data_flags(p)
    p.add_argument("--solution", required=True, help="solution.csv written by fit")
    p.add_argument("--penalty-file", default=None, help="fit.json from fit; replaces --lambda/--k")
    p.add_argument("--method", choices=("grpkmax", "grpkmax-prior"), default="grpkmax")
    _add_penalty_flags(p, lambda_default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--margin", type=float, default=1e-10)
    p.add_argument("--perturb", type=int, default=0, help="number of random perturbations (0 = skip)")
    p.add_argument("--radius", type=float, default=1e-4)
    _add_solver_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    p.add_argument("manifest")
    p.add_argument("--out", default=None, help="output directory (default: the recorded one)")
    p.set_defaults(func=cmd_replay)
    return parser


# -- shared plumbing ----------------------------------------------------------

def _options(args):
    return SolveOptions(max_iters=args.max_iters, tol=args.tol, step_mode=args.step)


def _out_dir(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out, args, inputs=()):
    config = {k: v for k, v in vars(args).items() if k not in ("func", "verbose")}
    manifest = {
        "subcommand": args.command,
        "config": config,
        "seed": config.get("seed"),
        "version": __version__,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
    return manifest


def write_csv(path, rows, fieldnames):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=fieldnames, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _lambda_grid(args, design, template, fractions=DEFAULT_LAMBDA_FRACTIONS):
    if args.lam == "auto":
        return lambda_max(design, template) * np.asarray(fractions)
    return np.asarray([convert_lambda(v, design.n, args.lambda_scale, "sum") for v in args.lam])


def _mu_values(args, lam):
    return [m if args.mu_absolute else m * lam for m in args.mu]


def _resolve_k(args, dataset, options):
    """``(k, strict)`` for grpkmax: explicit list, group-config value, or lasso-derived."""
    sizes = dataset.design.sizes
    k = args.k
    if k is None:
        k = dataset.config.k
        if k is None:
            if args.method == "grpkmax-prior":
                raise UsageError("--k is required for grpkmax-prior (or give k in the group config)")
            k = "auto"
    if k == "auto":
        folds = args.folds if getattr(args, "folds", 0) >= 2 else 10
        support = init_k_from_lasso(dataset.design, None, cv_folds=folds, seed=args.seed,
                                    options=options)
        strict = strict_from_support(support, sizes)
        if args.strict_full:
            strict = True
        return k_from_support(support, sizes), strict
    if len(k) != len(sizes):
        raise DimensionError(f"--k has {len(k)} values for {len(sizes)} groups")
    return tuple(k), args.strict_full


def _template(args, method, dataset, options):
    k, strict = None, False
    if method in ("grpkmax", "grpkmax-prior"):
        k, strict = _resolve_k(argparse.Namespace(**{**vars(args), "method": method}), dataset, options)
    return template_for(method, dataset.design.sizes, k, strict)


def _cv_for(args, design, template, grid, options):
    """Cross-validate over ``grid`` (and mu for the sparse group lasso)."""
    mu_grid = args.mu if template.kind == "sparse-group-lasso" else None
    return cross_validate(design, template, grid, mu_grid=mu_grid, folds=args.folds, seed=args.seed,
                          options=options, mu_relative=not args.mu_absolute)


# -- subcommands --------------------------------------------------------------

def cmd_synth(args):
    out = _out_dir(args)
    if args.repeats < 1:
        raise UsageError("--repeats must be positive")
    options = _options(args)
    setup = MethodSetup(mu_ratios=tuple(args.mu), folds=args.folds, options=options)
    if args.lam != "auto":
        setup.lambda_grid = tuple(convert_lambda(v, args.n, args.lambda_scale, "sum") for v in args.lam)
    records, timings, summary = [], [], []
    for m in args.m:
        s = args.s if args.s is not None else default_sparsity(m, args.d)
        per_method = {method: [] for method in args.methods}
        for r in range(args.repeats):
            config = SyntheticConfig(n=args.n, m=m, d_per_group=args.d, s=tuple(s),
                                     noise_variance=args.noise_var, seed=args.seed + r)
            log.info("m=%d repeat %d/%d", m, r + 1, args.repeats)
            for method, rec in run_synthetic_trial(config, args.methods, setup).items():
                per_method[method].append(rec)
                records.append({"m": m, "repeat": r, "seed": config.seed, "method": method, **rec.row()})
                timings.append({"m": m, "repeat": r, "method": method, "wall_time": rec.wall_time})
        for method, recs in per_method.items():
            mean = summarize(recs)
            summary.append({
                "m": m, "method": method, "repeats": len(recs),
                "mean_cpr_pct": mean["cpr_pct"], "mean_rmse_pct": mean["rmse_pct"],
                "mean_nnz_overall": mean["nnz_overall"], "mean_nnz_groups": mean["nnz_groups"],
            })
    write_csv(out / "records.csv", records,
              ["m", "repeat", "seed", "method", "lambda", "mu", "k", "cpr_pct", "rmse_pct",
               "nnz_overall", "nnz_groups"])
    write_csv(out / "summary.csv", summary,
              ["m", "method", "repeats", "mean_cpr_pct", "mean_rmse_pct", "mean_nnz_overall",
               "mean_nnz_groups"])
    write_csv(out / "timings.csv", timings, ["m", "repeat", "method", "wall_time"])
    write_manifest(out, args)
    return 0


def _penalty_json(spec):
    return {"kind": spec.kind, "lambda": spec.lam, "mu": spec.mu,
            "k": None if spec.k is None else list(spec.k),
            "strict_full": list(spec.strict_full) if isinstance(spec.strict_full, tuple) else spec.strict_full}


def cmd_fit(args):
    out = _out_dir(args)
    dataset = load_dataset(args.data, args.groups, standardize=not args.no_standardize)
    options = _options(args)
    design = dataset.design
    test_rows = None
    if args.test_fraction:
        if not 0 < args.test_fraction < 1:
            raise UsageError("--test-fraction must lie in (0, 1)")
        perm = np.random.default_rng(args.seed).permutation(design.n)
        n_test = max(1, int(round(args.test_fraction * design.n)))
        test_rows, train_rows = np.sort(perm[:n_test]), np.sort(perm[n_test:])
        design = design.subset_rows(train_rows)
    train = replace(dataset, design=design)
    template = _template(args, args.method, train, options)
    grid = _lambda_grid(args, design, template)

    cv = None
    mus = args.mu if template.kind == "sparse-group-lasso" else [None]
    if len(grid) > 1 or len(mus) > 1:
        cv = _cv_for(args, design, template, grid, options)
        spec = cv.best
    else:
        spec = template.replace(lam=float(grid[0]))
        if template.kind == "sparse-group-lasso":
            spec = spec.replace(mu=_mu_values(args, spec.lam)[0])
    result = solve(design, spec, options)

    write_solution(out / "solution.csv", result.x, dataset.config)
    nnz, groups = sparsity_stats(result.x)
    report = {
        "method": args.method,
        "penalty": _penalty_json(spec),
        "iterations": result.iterations,
        "terminated_by": result.terminated_by,
        "final_gap": result.final_gap,
        "gamma": result.gamma,
        "nnz_overall": nnz,
        "nnz_groups": groups,
    }
    with open(out / "fit.json", "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2)
    if cv is not None:
        write_csv(out / "cv_scores.csv",
                  [{"lambda": float(lam), "mu": float(mu), "cv_mse": float(score)} for lam, mu, score in cv.cells()],
                  ["lambda", "mu", "cv_mse"])
    if test_rows is not None:
        test = dataset.design.subset_rows(test_rows)
        r = test.response - predict(test, result.x)
        metrics = {"n_train": design.n, "n_test": int(test_rows.size),
                   "test_mse": float(r @ r) / r.size, "test_rmse": float(np.sqrt(r @ r / r.size)),
                   "nnz_overall": nnz, "nnz_groups": groups, "wall_time": result.wall_time}
        with open(out / "metrics.json", "w", encoding="utf-8") as fh:
            json.dump(metrics, fh, indent=2)
    write_manifest(out, args, inputs=(args.data, args.groups))
    return 0


def cmd_path(args):
    out = _out_dir(args)
    dataset = load_dataset(args.data, args.groups, standardize=not args.no_standardize)
    design = dataset.design
    options = _options(args)
    if options.step_mode == "lipschitz":
        options = replace(options, lipschitz=lipschitz_estimate(design))
    names = dataset.column_names
    rows = []
    for method in args.methods:
        template = _template(args, method, dataset, options)
        grid = np.sort(_lambda_grid(args, design, template, PATH_FRACTIONS))[::-1]
        cv_scores = None
        if args.folds >= 2:
            cv = _cv_for(args, design, template, grid, _options(args))
            best_mu = int(np.argmin(cv.scores.min(axis=1)))
            cv_scores = cv.scores[best_mu]
            if template.kind == "sparse-group-lasso":
                template = template.replace(mu=0.0)
                ratio = cv.mus[best_mu]
        elif template.kind == "sparse-group-lasso":
            ratio = args.mu[0]
        prev = None
        for j, lam in enumerate(grid):
            spec = template.replace(lam=float(lam))
            if spec.kind == "sparse-group-lasso":
                spec = spec.replace(mu=float(lam * ratio if not args.mu_absolute else ratio))
            res = solve(design, spec, options, x0=prev)
            prev = res.x
            r = design.response - predict(design, res.x)
            nnz, groups = sparsity_stats(res.x)
            row = {
                "method": method, "lambda": float(lam), "mu": spec.mu,
                "rmse": float(np.sqrt(r @ r / r.size)),
                "cv_error": "" if cv_scores is None else float(cv_scores[j]),
                "nnz_overall": nnz, "nnz_groups": groups,
            }
            row.update({f"coef:{name}": float(v) for name, v in zip(names, res.x.flat)})
            rows.append(row)
    fields = ["method", "lambda", "mu", "rmse", "cv_error", "nnz_overall", "nnz_groups"]
    write_csv(out / "path.csv", rows, fields + [f"coef:{name}" for name in names])
    write_manifest(out, args, inputs=(args.data, args.groups))
    return 0


def cmd_check(args):
    out = _out_dir(args)
    dataset = load_dataset(args.data, args.groups, standardize=not args.no_standardize)
    design = dataset.design
    options = _options(args)
    if args.penalty_file:
        with open(args.penalty_file, encoding="utf-8") as fh:
            pen = json.load(fh)["penalty"]
        if pen["kind"] != "group-kmax":
            raise UsageError(f"check needs a group-kmax penalty, got {pen['kind']}")
        spec = PenaltySpec("group-kmax", pen["lambda"], k=tuple(pen["k"]), strict_full=pen["strict_full"])
    else:
        if args.lam is None or args.lam == "auto" or len(args.lam) != 1:
            raise UsageError("check needs a single --lambda value (or --penalty-file)")
        lam = convert_lambda(args.lam[0], design.n, args.lambda_scale, "sum")
        spec = _template(args, args.method, dataset, options).replace(lam=lam)
    spec.validate(design.sizes)
    x = read_solution(args.solution, dataset.config)
    gamma = step_size(design, options)
    report = check_theorem2(design, x, spec, gamma, margin=args.margin, tol=10 * args.tol)
    if args.perturb > 0:
        report.perturbation_ok = perturbation_oracle(design, x, spec, args.radius, args.perturb, args.seed)
    payload = report.to_dict()
    payload["penalty"] = _penalty_json(spec)
    with open(out / "check.json", "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
    write_manifest(out, args, inputs=(args.data, args.groups, args.solution))
    return 0


def cmd_replay(args):
    with open(args.manifest, encoding="utf-8") as fh:
        manifest = json.load(fh)
    for path, digest in manifest.get("inputs", {}).items():
        if not Path(path).exists() or _sha256(path) != digest:
            raise DataFormatError(f"input {path} is missing or changed since the manifest was written")
    parser = build_parser()
    config = dict(manifest["config"])
    if args.out is not None:
        config["out"] = args.out
    command = manifest["subcommand"]
    # defaults for the recorded subcommand, overridden by the recorded values
    defaults = parser.parse_args([command, *_required_placeholders(command)])
    replayed = argparse.Namespace(**{**vars(defaults), **config, "command": command, "verbose": args.verbose})
    return replayed.func(replayed)


def _required_placeholders(command):
    base = ["--out", "_"]
    if command in ("fit", "path", "check"):
        base += ["--data", "_", "--groups", "_"]
    if command == "check":
        base += ["--solution", "_"]
    return base


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except DataFormatError as exc:
        print(f"grpkmax: parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except DimensionError as exc:
        print(f"grpkmax: dimension error: {exc}", file=sys.stderr)
        return EXIT_DIMENSION
    except DivergenceError as exc:
        print(f"grpkmax: divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except OSError as exc:
        print(f"grpkmax: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"grpkmax: invalid input: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
