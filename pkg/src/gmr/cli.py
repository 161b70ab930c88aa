"""Command line front end.

Subcommands: ``simulate``, ``fit``, ``predict``, ``evaluate``, ``select-k``,
``benchmark``.  Data outputs go to files (or stdout for ``evaluate``);
diagnostics go to stderr at a level picked by the ``GMR_LOG`` environment
variable (``error``, ``warn``, ``info``, ``debug``).  Every subcommand is
deterministic given its ``--seed``.

Exit codes: 0 on success, 1 on runtime failure, 2 on usage errors.

The model has no implicit intercept: features are exactly the ``x1..xp``
columns of the dataset.  To fit an intercept, append a constant column of
ones before fitting.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from collections import Counter
from dataclasses import replace
from pathlib import Path

from . import benchmark as bench
from . import io
from .em import EmConfig, fit
from .errors import GmrError
from .metrics import beta_error, confusion, nmi, rmse
from .predict import predict_groups
from .select import select_k
from .simulate import SimConfig, generate, train_test_split

__all__ = ["build_parser", "entrypoint", "main"]

logger = logging.getLogger(__name__)

_LOG_LEVELS = {
    "error": logging.ERROR,
    "warn": logging.WARNING,
    "info": logging.INFO,
    "debug": logging.DEBUG,
}


class _UsageError(Exception):
    """Bad flags or config values; reported with exit code 2."""


def _configure_logging() -> None:
    name = os.environ.get("GMR_LOG", "warn").strip().lower()
    logging.basicConfig(
        stream=sys.stderr,
        level=_LOG_LEVELS.get(name, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
    )


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise _UsageError(f"cannot read config {path}: {exc}") from None
    if not isinstance(doc, dict):
        raise _UsageError(f"config {path} must hold a JSON object")
    return doc


def _merged_config(args: argparse.Namespace, fields: dict[str, str], allowed: set[str]) -> dict:
    """Config-file values overridden by any flag that was actually given."""
    conf = _load_config_file(getattr(args, "config", None))
    unknown = set(conf) - allowed
    if unknown:
        raise _UsageError(f"unknown config keys: {sorted(unknown)}")
    for field_name, attr in fields.items():
        value = getattr(args, attr)
        if value is not None:
            conf[field_name] = value
    return conf


def _size_summary(sizes) -> str:
    counts = Counter(int(s) for s in sizes)
    return ", ".join(f"{cnt} of {size}" for size, cnt in sorted(counts.items(), reverse=True))


def _parse_k_grid(text: str) -> list[int]:
    grid: list[int] = []
    for token in text.split(","):
        token = token.strip()
        if not token:
            continue
        if "-" in token[1:]:
            lo, _, hi = token.partition("-")
            try:
                grid.extend(range(int(lo), int(hi) + 1))
            except ValueError:
                raise _UsageError(f"bad K range {token!r}") from None
        else:
            try:
                grid.append(int(token))
            except ValueError:
                raise _UsageError(f"bad K value {token!r}") from None
    if not grid:
        raise _UsageError("empty K grid")
    return grid


def cmd_simulate(args: argparse.Namespace) -> int:
    fields = {
        "n": "n",
        "K": "K",
        "p": "p",
        "G": "G",
        "sigma": "sigma",
        "delta_beta": "delta_beta",
        "wishart_df": "wishart_df",
        "seed": "seed",
    }
    conf = _merged_config(args, fields, set(fields))
    try:
        cfg = SimConfig(**conf)
    except (TypeError, ValueError) as exc:
        raise _UsageError(str(exc)) from None
    data, truth = generate(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    io.write_dataset_csv(data, out / "dataset.csv")
    io.write_truth_json(truth, cfg, out / "truth.json")
    written = ["dataset.csv", "truth.json"]
    if args.split is not None:
        try:
            train, test = train_test_split(data, args.split, seed=cfg.seed)
        except ValueError as exc:
            raise _UsageError(str(exc)) from None
        io.write_dataset_csv(train, out / "train.csv")
        io.write_dataset_csv(test, out / "test.csv")
        written += ["train.csv", "test.csv"]
    print(
        f"R={data.R} groups; sizes: {_size_summary(data.n_r)}; "
        f"wrote {', '.join(written)} in {out}"
    )
    return 0


def _em_config(args: argparse.Namespace) -> EmConfig:
    fields = {
        "K": "K",
        "epsilon": "epsilon",
        "max_iter": "max_iter",
        "n_restarts": "restarts",
        "init": "init",
        "sigma2_floor": "sigma2_floor",
        "ridge": "ridge",
        "seed": "seed",
    }
    conf = _merged_config(args, fields, set(fields))
    try:
        return EmConfig(**conf)
    except (TypeError, ValueError) as exc:
        raise _UsageError(str(exc)) from None


def cmd_fit(args: argparse.Namespace) -> int:
    cfg = _em_config(args)
    data = io.read_dataset_csv(args.data)
    result = fit(data, cfg)
    io.write_model_json(result, args.out)
    print(
        f"log_likelihood={result.log_likelihood:.6f} n_iter={result.n_iter} "
        f"converged={result.converged}"
    )
    return 0


def cmd_predict(args: argparse.Namespace) -> int:
    model = io.read_model_json(args.model)
    data = io.read_dataset_csv(args.data)
    on_unknown = "prior" if args.fallback == "prior" else "error"
    preds = predict_groups(model, data, on_unknown=on_unknown)
    io.write_predictions_csv(preds, args.out)
    n_fallback = int(preds.used_fallback.sum())
    print(f"wrote {len(preds.y_pred)} predictions ({n_fallback} with prior fallback)")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    if args.model is None and args.predictions is None:
        raise _UsageError("need --model (with --truth) and/or --predictions")
    record = {
        "nmi": None,
        "beta_error": None,
        "rmse_train": None,
        "rmse_test": None,
        "n_iter": None,
        "converged": None,
        "K": None,
        "seed": args.seed,
    }
    model = io.read_model_json(args.model) if args.model else None
    if model is not None:
        record["n_iter"] = model.n_iter
        record["converged"] = model.converged
        record["K"] = model.params.K
        if args.truth:
            truth, _ = io.read_truth_json(args.truth)
            est = model.tau.hard_labels()
            f = confusion(
                truth.labels, est, n_true=truth.beta_true.shape[1], n_est=model.params.K
            )
            record["nmi"] = nmi(truth.labels, est)
            record["beta_error"] = beta_error(truth.beta_true, model.params.beta, f)
        if args.train:
            preds = predict_groups(model, io.read_dataset_csv(args.train), on_unknown="prior")
            record["rmse_train"] = rmse(preds.y_true, preds.y_pred)
        if args.test:
            preds = predict_groups(model, io.read_dataset_csv(args.test), on_unknown="prior")
            record["rmse_test"] = rmse(preds.y_true, preds.y_pred)
    if args.predictions is not None:
        cols = io.read_predictions_csv(args.predictions)
        record["rmse_test"] = rmse(cols["y_true"], cols["y_pred"])
    line = json.dumps(record)
    if args.out:
        Path(args.out).write_text(line + "\n")
    else:
        print(line)
    return 0


def cmd_select_k(args: argparse.Namespace) -> int:
    data = io.read_dataset_csv(args.data)
    grid = _parse_k_grid(args.k_grid)
    template = EmConfig(K=1)
    overrides = {}
    for field_name, attr in (
        ("epsilon", "epsilon"),
        ("max_iter", "max_iter"),
        ("n_restarts", "restarts"),
        ("init", "init"),
    ):
        value = getattr(args, attr)
        if value is not None:
            overrides[field_name] = value
    try:
        template = replace(template, **overrides)
        report = select_k(
            data,
            grid,
            cfg=template,
            test_frac=args.test_frac,
            n_reps=args.reps,
            seed=args.seed,
        )
    except ValueError as exc:
        raise _UsageError(str(exc)) from None
    out = Path(args.out)
    io.write_selection_report(report, out, out.with_suffix(".csv"))
    print(f"best_k={report.best_k} best_mixture_k={report.best_mixture_k} n_reps={report.n_reps}")
    return 0


def cmd_benchmark(args: argparse.Namespace) -> int:
    doc = _load_config_file(args.spec)
    if not doc:
        raise _UsageError(f"benchmark spec {args.spec} is empty")
    try:
        spec = bench.BenchmarkSpec.from_dict(doc)
        if args.seed is not None:
            spec = replace(spec, seed=args.seed)
    except (TypeError, ValueError) as exc:
        raise _UsageError(str(exc)) from None
    out = Path(args.out)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    records = []
    with out.open("w") as fh:
        for record in bench.iter_records(spec, jobs=args.jobs):
            fh.write(json.dumps(record) + "\n")
            records.append(record)
    rows = bench.aggregate(records)
    columns = bench.aggregate_columns(spec)
    csv_path = out.with_suffix(".csv")
    with csv_path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow(
                [
                    ""
                    if row[c] is None
                    else (repr(row[c]) if isinstance(row[c], float) else row[c])
                    for c in columns
                ]
            )
    n_failed = sum(row["n_failed"] for row in rows)
    print(
        f"{len(records)} replications in {len(rows)} cells; {n_failed} failures; "
        f"wrote {out} and {csv_path}"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gmr",
        description="Grouped mixture of regressions: simulate, fit, predict, evaluate, select K, benchmark.",
        epilog=(
            "The model has no implicit intercept; append a constant feature "
            "column to the dataset if you want one.  Set GMR_LOG=debug for "
            "verbose diagnostics on stderr."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="draw a synthetic dataset and its ground truth")
    sim.add_argument("--config", help="JSON file with simulation settings (flags win)")
    sim.add_argument("--n", type=int, help="total observations")
    sim.add_argument("--K", type=int, help="number of clusters")
    sim.add_argument("--p", type=int, help="feature dimension")
    sim.add_argument("--G", type=int, help="groups per cluster")
    sim.add_argument("--sigma", type=float, help="noise standard deviation")
    sim.add_argument("--delta-beta", type=float, help="pairwise coefficient distance")
    sim.add_argument("--wishart-df", type=int, help="design covariance degrees of freedom")
    sim.add_argument("--split", type=float, help="also write train/test CSVs with this hold-out fraction")
    sim.add_argument("--seed", type=int, help="RNG seed")
    sim.add_argument("--out", required=True, help="output directory")
    sim.set_defaults(func=cmd_simulate)

    fit_p = sub.add_parser("fit", help="fit the mixture to a dataset CSV")
    fit_p.add_argument("--config", help="JSON file with EM settings (flags win)")
    fit_p.add_argument("--data", required=True, help="dataset CSV (group,y,x1,...,xp)")
    fit_p.add_argument("--K", type=int, help="number of clusters")
    fit_p.add_argument("--epsilon", type=float, help="convergence threshold on responsibilities")
    fit_p.add_argument("--max-iter", type=int, help="iteration cap per restart")
    fit_p.add_argument("--restarts", type=int, help="independent restarts")
    fit_p.add_argument(
        "--init",
        choices=["random_hard", "random_soft", "kmeans_on_group_coefs"],
        help="initialization strategy",
    )
    fit_p.add_argument("--sigma2-floor", type=float, help="minimum noise variance")
    fit_p.add_argument("--ridge", type=float, help="relative ridge for the beta solve")
    fit_p.add_argument("--seed", type=int, help="RNG seed")
    fit_p.add_argument("--out", required=True, help="model JSON path")
    fit_p.set_defaults(func=cmd_fit)

    pred = sub.add_parser("predict", help="predict a dataset CSV with a fitted model")
    pred.add_argument("--model", required=True, help="model JSON from fit")
    pred.add_argument("--data", required=True, help="dataset CSV to predict")
    pred.add_argument(
        "--fallback",
        choices=["prior", "error"],
        default="prior",
        help="behavior for groups unseen at training time (default: prior weights, flagged)",
    )
    pred.add_argument("--out", required=True, help="predictions CSV path")
    pred.set_defaults(func=cmd_predict)

    ev = sub.add_parser("evaluate", help="compute metrics from fit artifacts and ground truth")
    ev.add_argument("--model", help="model JSON from fit")
    ev.add_argument("--truth", help="ground-truth JSON from simulate")
    ev.add_argument("--train", help="training dataset CSV, for rmse_train")
    ev.add_argument("--test", help="hold-out dataset CSV, for rmse_test")
    ev.add_argument("--predictions", help="predictions CSV; its y_true/y_pred give rmse_test")
    ev.add_argument("--seed", type=int, help="seed to record in the metrics")
    ev.add_argument("--out", help="metrics JSON path (default: stdout)")
    ev.set_defaults(func=cmd_evaluate)

    sel = sub.add_parser("select-k", help="choose K by repeated hold-out validation")
    sel.add_argument("--data", required=True, help="dataset CSV")
    sel.add_argument("--k-grid", required=True, help="candidates, e.g. '2,3,4' or '2-8'")
    sel.add_argument("--reps", type=int, default=10, help="hold-out repetitions (default 10)")
    sel.add_argument("--test-frac", type=float, default=0.2, help="per-group hold-out fraction")
    sel.add_argument("--epsilon", type=float, help="convergence threshold on responsibilities")
    sel.add_argument("--max-iter", type=int, help="iteration cap per restart")
    sel.add_argument("--restarts", type=int, help="independent restarts per fit")
    sel.add_argument(
        "--init",
        choices=["random_hard", "random_soft", "kmeans_on_group_coefs"],
        help="initialization strategy",
    )
    sel.add_argument("--seed", type=int, help="RNG seed")
    sel.add_argument("--out", required=True, help="report JSON path (a CSV twin is written beside it)")
    sel.set_defaults(func=cmd_select_k)

    ben = sub.add_parser("benchmark", help="run a Monte Carlo grid sweep")
    ben.add_argument("--spec", required=True, help="benchmark spec JSON")
    ben.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")
    ben.add_argument("--seed", type=int, help="override the spec's seed")
    ben.add_argument("--out", required=True, help="JSON-lines output path (aggregate CSV beside it)")
    ben.set_defaults(func=cmd_benchmark)

    return parser


def main(argv=None) -> int:
    _configure_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (GmrError, OSError) as exc:
        logger.debug("failure detail", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # keep the exit-code contract even for surprises
        logger.debug("unexpected failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    sys.exit(main())
