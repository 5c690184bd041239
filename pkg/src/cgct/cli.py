"""Command-line interface: ingest, train, evaluate, curves, allocate,
ablation, serve.

Every subcommand prints human-readable text by default and a single JSON
document with --json. Runtime failures exit 1 with a stage-labeled message
on stderr; argparse handles unknown flags with exit code 2.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys

import numpy as np

from . import __version__
from .allocation import AllocationProblem, bootstrap_ci, expected_infections, optimize_allocation
from .data import bundled_data_path, impute_knn, load_dataset
from .evaluation import (ablation_matrix, build_semisynthetic,
                         format_ablation_table, repeat_runs)
from .pipeline import (ESTIMATORS, AblationFlags, HyperParams, fit_arrays,
                       load_model, save_model, train_cgct)


class StageError(RuntimeError):
    def __init__(self, stage, cause):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage


def _load(args, year=None):
    path = args.data or bundled_data_path()
    try:
        d = load_dataset(path, year if year is not None else args.year)
        return impute_knn(d, k=args.knn)
    except Exception as exc:
        raise StageError("data", exc) from exc


def _hp_from_args(args):
    hp = HyperParams()
    for name in vars(hp):
        flag = getattr(args, name, None)
        if flag is not None:
            setattr(hp, name, flag)
    return hp


def _emit(args, payload, text):
    if args.json:
        json.dump(payload, sys.stdout, indent=2, sort_keys=True)
        sys.stdout.write("\n")
    else:
        sys.stdout.write(text + "\n")


def cmd_ingest(args):
    d = _load(args)
    x = d.covariate_matrix()
    stats = {}
    for j, name in enumerate(d.feature_names):
        col = x[:, j]
        stats[name] = {"mean": float(col.mean()), "sd": float(col.std(ddof=1)),
                       "min": float(col.min()), "max": float(col.max())}
    payload = {"year": d.year, "countries": d.n, "features": stats,
               "total_aid_musd": float(d.treatments().sum())}
    _emit(args, payload, f"{d.n} countries for {d.year}; total aid "
                         f"{d.treatments().sum():.1f} USD mn (imputed, validated)")
    return 0


def cmd_train(args):
    d = _load(args)
    flags, inference = ESTIMATORS[args.method]
    if args.no_bae:
        flags = AblationFlags(False, flags.cfgen)
    if args.no_cfgen:
        flags = AblationFlags(flags.bae, False)
    hp = _hp_from_args(args)
    if args.strict_grid:
        hp.validate_grid(args.method if args.method in ("ann", "drnet", "lm")
                         else "cgct")
    try:
        model = train_cgct(d, hp, flags, args.seed, inference)
    except Exception as exc:
        raise StageError("train", exc) from exc
    save_model(model, args.out)
    payload = {"out": args.out, "method": args.method,
               "flags": flags.to_dict(), "metadata": model.metadata}
    _emit(args, payload, f"trained {args.method} on {d.n} rows "
                         f"(fit rows: {model.metadata['n_fit_rows']}) -> {args.out}")
    return 0


def cmd_evaluate(args):
    d_train = _load(args, year=args.train_year)
    d_eval = _load(args, year=args.eval_year)
    hp = _hp_from_args(args)
    try:
        if args.semi_synthetic:
            sim_train, curves, _ = build_semisynthetic(
                d_train, d_eval, grid_size=args.grid_size,
                noise_seed=args.data_seed)
            report = repeat_runs(args.method, sim_train, curves,
                                 runs=args.runs, base_seed=args.seed, hp=hp)
        else:
            report = repeat_runs(args.method, d_train, d_eval,
                                 runs=args.runs, base_seed=args.seed, hp=hp)
    except Exception as exc:
        raise StageError("evaluate", exc) from exc
    _emit(args, report.to_dict(), str(report))
    return 0


def cmd_ablation(args):
    d_train = _load(args, year=args.train_year)
    d_eval = _load(args, year=args.eval_year)
    hp = _hp_from_args(args)
    try:
        sim_train, curves, _ = build_semisynthetic(
            d_train, d_eval, grid_size=args.grid_size, noise_seed=args.data_seed)
        reports = ablation_matrix(sim_train, curves, runs=args.runs,
                                  base_seed=args.seed, hp=hp)
    except Exception as exc:
        raise StageError("ablation", exc) from exc
    _emit(args, [r.to_dict() for r in reports], format_ablation_table(reports))
    return 0


def cmd_curves(args):
    try:
        model = load_model(args.model)
    except Exception as exc:
        raise StageError("model", exc) from exc
    d = _load(args)
    try:
        record = d.record_for(args.country)
    except KeyError:
        raise StageError("curves", f"unknown country {args.country!r}")
    bound = args.max if args.max is not None else model.default_bound
    grid = np.linspace(args.min, bound, args.points)
    try:
        curve = model.predict_curve(record.covariates, grid,
                                    country_id=args.country,
                                    max_treatment=bound)
    except Exception as exc:
        raise StageError("curves", exc) from exc
    if args.json:
        payload = curve.to_dict()
        payload["observed_aid_musd"] = record.treatment_a
        _emit(args, payload, "")
    else:
        out = io.StringIO()
        writer = csv.writer(out)
        writer.writerow(["country", "aid_usd_mn", "predicted_reduction"])
        for a, y in zip(curve.treatments, curve.predictions):
            writer.writerow([args.country, f"{a:.6f}", repr(float(y))])
        sys.stdout.write(out.getvalue())
    return 0


def _parse_pins(items):
    pins = {}
    for item in items or []:
        if "=" not in item:
            raise StageError("allocate", f"bad --pin {item!r}; expected CODE=VALUE")
        code, value = item.split("=", 1)
        pins[code.strip()] = float(value)
    return pins


def cmd_allocate(args):
    try:
        model = load_model(args.model)
    except Exception as exc:
        raise StageError("model", exc) from exc
    d = _load(args)
    budget = None if args.budget in (None, "observed-total") else float(args.budget)
    try:
        problem = AllocationProblem.from_dataset(
            d, budget=budget, bound=args.bound, pins=_parse_pins(args.pin))
        current = expected_infections(model, problem.observed_aid, problem)
        plan = optimize_allocation(model, problem, seed=args.seed,
                                   max_iter=args.max_iter)
    except Exception as exc:
        raise StageError("allocate", exc) from exc
    payload = {"plan": plan.to_dict(),
               "current_expected_infections": current,
               "suggested_expected_infections": plan.objective,
               "reduction": current - plan.objective,
               "reduction_pct": 100.0 * (current - plan.objective) / current}
    if args.resamples:
        hp = _hp_from_args(args)
        flags, inference = ESTIMATORS[args.method]
        Y, A, X = d.outcomes(), d.treatments(), d.covariate_matrix()

        def factory(idx, seed):
            return fit_arrays(Y[idx], A[idx], X[idx], hp, flags, seed, inference)

        try:
            boot = bootstrap_ci(factory, d, problem,
                                resamples=args.resamples, seed=args.seed,
                                max_iter=args.max_iter)
        except Exception as exc:
            raise StageError("bootstrap", exc) from exc
        payload["bootstrap"] = boot.to_dict()
    lines = [f"current  expected infections: {current:,.0f}",
             f"suggested expected infections: {plan.objective:,.0f}",
             f"reduction: {current - plan.objective:,.0f} "
             f"({100 * (current - plan.objective) / current:.2f}%)",
             f"total suggested aid: {plan.aid.sum():.1f} / budget {problem.budget:.1f} USD mn"]
    _emit(args, payload, "\n".join(lines))
    return 0


def cmd_serve(args):
    try:
        import uvicorn

        from .server import ApiConfig, create_app
    except ImportError as exc:
        raise StageError("serve", f"service dependencies missing: {exc}")
    try:
        model = load_model(args.model)
    except Exception as exc:
        raise StageError("model", exc) from exc
    d = _load(args)
    import os
    config = ApiConfig(host=os.environ.get("CGCT_BIND", args.host),
                       port=args.port,
                       cors_origins=args.cors or [],
                       allocate_max_iter=args.max_iter)
    app = create_app(model, d, config)
    uvicorn.run(app, host=config.host, port=config.port, log_level="warning")
    return 0


def _add_common(p, year_default=2016):
    p.add_argument("--data", default=None, help="panel CSV (default: bundled)")
    p.add_argument("--year", type=int, default=year_default)
    p.add_argument("--knn", type=int, default=5, help="imputation neighbours")
    p.add_argument("--json", action="store_true", help="machine-readable output")
    p.add_argument("--seed", type=int, default=0)


def _add_hp(p):
    hp = HyperParams()
    for name, value in hp.to_dict().items():
        kind = type(value)
        p.add_argument(f"--{name.replace('_', '-')}", dest=name, type=kind,
                       default=None, help=f"hyperparameter (default {value})")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="cgct",
        description="Aid-response curves and budget-constrained allocation")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate, impute, and summarize a panel")
    _add_common(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train", help="train a model and write it to disk")
    _add_common(p)
    p.add_argument("--method", choices=sorted(ESTIMATORS), default="cgct")
    p.add_argument("--out", required=True)
    p.add_argument("--no-bae", action="store_true")
    p.add_argument("--no-cfgen", action="store_true")
    p.add_argument("--strict-grid", action="store_true",
                   help="reject hyperparameters outside the search grid")
    _add_hp(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="repeated-run evaluation")
    _add_common(p)
    p.add_argument("--method", choices=sorted(ESTIMATORS), default="cgct")
    p.add_argument("--semi-synthetic", action="store_true")
    p.add_argument("--runs", type=int, default=10)
    p.add_argument("--train-year", type=int, default=2016)
    p.add_argument("--eval-year", type=int, default=2017)
    p.add_argument("--grid-size", type=int, default=65)
    p.add_argument("--data-seed", type=int, default=0)
    _add_hp(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablation", help="stage-toggle matrix over inference models")
    _add_common(p)
    p.add_argument("--runs", type=int, default=10)
    p.add_argument("--train-year", type=int, default=2016)
    p.add_argument("--eval-year", type=int, default=2017)
    p.add_argument("--grid-size", type=int, default=65)
    p.add_argument("--data-seed", type=int, default=0)
    _add_hp(p)
    p.set_defaults(func=cmd_ablation)

    p = sub.add_parser("curves", help="predict a country's aid-response curve")
    _add_common(p, year_default=2017)
    p.add_argument("--model", required=True)
    p.add_argument("--country", required=True)
    p.add_argument("--min", type=float, default=0.0)
    p.add_argument("--max", type=float, default=None)
    p.add_argument("--points", type=int, default=65)
    p.set_defaults(func=cmd_curves)

    p = sub.add_parser("allocate", help="optimize the aid allocation")
    _add_common(p, year_default=2017)
    p.add_argument("--model", required=True)
    p.add_argument("--method", choices=sorted(ESTIMATORS), default="cgct")
    p.add_argument("--budget", default=None,
                   help="USD millions or 'observed-total'")
    p.add_argument("--bound", type=float, default=None)
    p.add_argument("--pin", action="append",
                   help="CODE=VALUE fixed allocation (repeatable)")
    p.add_argument("--resamples", type=int, default=0,
                   help="bootstrap resamples (0 = skip)")
    p.add_argument("--max-iter", type=int, default=2000)
    _add_hp(p)
    p.set_defaults(func=cmd_allocate)

    p = sub.add_parser("serve", help="run the HTTP service")
    _add_common(p, year_default=2017)
    p.add_argument("--model", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--cors", action="append", help="allowed origin (repeatable)")
    p.add_argument("--max-iter", type=int, default=2000)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except StageError as exc:
        print(f"error {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # anything unlabeled is its command's stage
        print(f"error [{args.command}] {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
