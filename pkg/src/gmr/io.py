"""File formats: dataset CSV, model JSON, ground-truth JSON, prediction CSV.

All writers produce byte-stable output for identical inputs: fixed column
orders, insertion-ordered JSON objects, shortest round-trip float formatting
and a bare ``\\n`` line terminator.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .data import Group, GroupedDataset, ModelParams, Responsibilities
from .em import FitResult
from .errors import GmrError
from .predict import GroupPredictions
from .select import SelectionReport
from .simulate import GroundTruth, SimConfig

__all__ = [
    "read_dataset_csv",
    "read_model_json",
    "read_predictions_csv",
    "read_truth_json",
    "write_dataset_csv",
    "write_model_json",
    "write_predictions_csv",
    "write_selection_report",
    "write_truth_json",
]


class FormatError(GmrError, ValueError):
    """A file does not match the expected format."""


def _float(text: str, where: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise FormatError(f"{where}: {text!r} is not a number") from None


def read_dataset_csv(path) -> GroupedDataset:
    """Read a ``group,y,x1,...,xp`` CSV; groups ordered by first appearance."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or len(header) < 3 or header[0] != "group" or header[1] != "y":
            raise FormatError(
                f"{path}: expected header 'group,y,x1,...,xp', got {header!r}"
            )
        p = len(header) - 2
        rows_by_group: dict[str, list[list[float]]] = {}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != p + 2:
                raise FormatError(f"{path}:{lineno}: expected {p + 2} columns, got {len(row)}")
            values = [_float(cell, f"{path}:{lineno}") for cell in row[1:]]
            rows_by_group.setdefault(row[0], []).append(values)
    groups = tuple(
        Group(
            id=gid,
            responses=np.array(rows)[:, 0],
            features=np.array(rows)[:, 1:],
        )
        for gid, rows in rows_by_group.items()
    )
    return GroupedDataset(groups)


def write_dataset_csv(d: GroupedDataset, path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["group", "y"] + [f"x{j + 1}" for j in range(d.p)])
        for g in d.groups:
            for y, x in zip(g.responses, g.features):
                writer.writerow([g.id, repr(float(y))] + [repr(float(v)) for v in x])


def write_model_json(result: FitResult, path) -> None:
    """Serialize a fit: parameters, per-group posteriors and fit metadata."""
    params = result.params
    doc = {
        "K": params.K,
        "p": params.p,
        "pi": params.pi.tolist(),
        "beta": [params.beta[:, k].tolist() for k in range(params.K)],
        "sigma2": params.sigma2.tolist(),
        "group_posteriors": {
            gid: row.tolist() for gid, row in zip(result.group_ids, result.tau.tau)
        },
        "log_likelihood": result.log_likelihood,
        "n_iter": result.n_iter,
        "converged": result.converged,
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def read_model_json(path) -> FitResult:
    """Load a model written by `write_model_json`; ``ll_trace`` is not stored."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise FormatError(f"{path}: expected a JSON object")
    try:
        params = ModelParams(
            pi=doc["pi"],
            beta=np.array(doc["beta"], dtype=float).T,
            sigma2=doc["sigma2"],
        )
        posteriors = doc["group_posteriors"]
        tau = Responsibilities(np.array(list(posteriors.values()), dtype=float))
        return FitResult(
            params=params,
            tau=tau,
            group_ids=tuple(posteriors.keys()),
            log_likelihood=float(doc["log_likelihood"]),
            n_iter=int(doc["n_iter"]),
            converged=bool(doc["converged"]),
            ll_trace=None,
        )
    except KeyError as exc:
        raise FormatError(f"{path}: missing field {exc}") from None


def write_truth_json(truth: GroundTruth, cfg: SimConfig, path) -> None:
    p, K = truth.beta_true.shape
    doc = {
        "beta_true": [truth.beta_true[:, k].tolist() for k in range(K)],
        "labels": truth.labels.tolist(),
        "sigma": truth.sigma_true.tolist(),
        "Sigma_x": truth.Sigma_x.tolist(),
        "config": {
            "n": cfg.n,
            "K": cfg.K,
            "p": cfg.p,
            "G": cfg.G,
            "sigma": cfg.sigma,
            "delta_beta": cfg.delta_beta,
            "wishart_df": cfg.wishart_df,
            "seed": cfg.seed,
        },
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def read_truth_json(path) -> tuple[GroundTruth, SimConfig]:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise FormatError(f"{path}: expected a JSON object")
    try:
        truth = GroundTruth(
            beta_true=np.array(doc["beta_true"], dtype=float).T,
            labels=doc["labels"],
            sigma_true=doc["sigma"],
            Sigma_x=doc["Sigma_x"],
        )
        cfg = SimConfig(**doc["config"])
    except KeyError as exc:
        raise FormatError(f"{path}: missing field {exc}") from None
    return truth, cfg


def write_predictions_csv(preds: GroupPredictions, path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["group", "y_true", "y_pred", "log_density", "used_fallback"])
        for gid, yt, yp, ld, fb in zip(
            preds.group, preds.y_true, preds.y_pred, preds.log_density, preds.used_fallback
        ):
            writer.writerow([gid, repr(float(yt)), repr(float(yp)), repr(float(ld)), int(fb)])


def read_predictions_csv(path) -> dict[str, np.ndarray]:
    """Read a predictions CSV back into column arrays."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        expected = ["group", "y_true", "y_pred", "log_density", "used_fallback"]
        if header != expected:
            raise FormatError(f"{path}: expected header {expected}, got {header!r}")
        cols: dict[str, list] = {name: [] for name in expected}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 5:
                raise FormatError(f"{path}:{lineno}: expected 5 columns, got {len(row)}")
            cols["group"].append(row[0])
            cols["y_true"].append(_float(row[1], f"{path}:{lineno}"))
            cols["y_pred"].append(_float(row[2], f"{path}:{lineno}"))
            cols["log_density"].append(_float(row[3], f"{path}:{lineno}"))
            cols["used_fallback"].append(bool(int(row[4])))
    return {
        "group": np.array(cols["group"], dtype=object),
        "y_true": np.array(cols["y_true"]),
        "y_pred": np.array(cols["y_pred"]),
        "log_density": np.array(cols["log_density"]),
        "used_fallback": np.array(cols["used_fallback"], dtype=bool),
    }


def write_selection_report(report: SelectionReport, json_path, csv_path) -> None:
    """Write a selection report as JSON plus a ``K,mean_rmse,sd_rmse`` table."""
    doc = {
        "k_grid": list(report.k_grid),
        "rmse_by_k": {str(k): report.rmse_by_k[k] for k in sorted(report.rmse_by_k)},
        "sd_by_k": {str(k): report.sd_by_k[k] for k in sorted(report.sd_by_k)},
        "best_k": report.best_k,
        "best_mixture_k": report.best_mixture_k,
        "n_reps": report.n_reps,
    }
    Path(json_path).write_text(json.dumps(doc, indent=2) + "\n")
    with Path(csv_path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["K", "mean_rmse", "sd_rmse"])
        for k in sorted(report.rmse_by_k):
            writer.writerow([k, repr(report.rmse_by_k[k]), repr(report.sd_by_k[k])])
