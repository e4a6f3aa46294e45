"""Experiment harness: stratified splits, training with validation-based model
selection, macro metrics, loss-term ablation and the parameter sweep."""

from __future__ import annotations

import csv
import itertools
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from sklearn.metrics import confusion_matrix, precision_recall_fscore_support

from .config import ExperimentConfig
from .errors import ConfigError, DataError
from .estimator import MRLMCClassifier
from .signals import Label, Record
from .validation import check_labels, check_records

logger = logging.getLogger(__name__)

SWEEP_GRID = {"n_scale": (4, 5, 6), "n_trans": (1, 2, 3), "n_head": (4, 8, 16, 32)}
ABLATION_ROWS = (  # (use L_MSC, use L_SC); L_FL always on
    (False, False),
    (True, False),
    (False, True),
    (True, True),
)


@dataclass
class MetricsReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    confusion: list  # rows = true (CONTROL, DEPRESSED), cols = predicted
    n: int
    trace: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def compute_metrics(y_true, y_pred, trace=None) -> MetricsReport:
    """Accuracy and macro (unweighted two-class mean) precision/recall/F1.

    Undefined ratios (no predicted or no true members of a class) count as 0.
    """
    y_true, y_pred = np.asarray(y_true), np.asarray(y_pred)
    if y_true.size == 0:
        raise DataError("cannot evaluate an empty record set")
    cm = confusion_matrix(y_true, y_pred, labels=[0, 1])
    p, r, f, _ = precision_recall_fscore_support(y_true, y_pred, labels=[0, 1], average="macro", zero_division=0)
    return MetricsReport(
        accuracy=float(np.trace(cm) / cm.sum()),
        precision=float(p),
        recall=float(r),
        f1=float(f),
        confusion=cm.tolist(),
        n=int(cm.sum()),
        trace=list(trace or []),
    )


def split_dataset(records: Sequence[Record], fractions=(0.7, 0.15, 0.15), seed=0):
    """Stratified, disjoint (train, val, test) split; order within each split
    follows the input order."""
    records = check_records(records)
    fractions = [float(f) for f in fractions]
    if len(fractions) != 3 or any(f <= 0 for f in fractions) or abs(sum(fractions) - 1) > 1e-9:
        raise ConfigError("fractions must be three positive numbers summing to 1", "fractions")
    labels = check_labels(records)
    parts = [[], [], []]
    for lab in Label:
        idx = np.flatnonzero(labels == lab)
        if len(idx) < 3:
            raise DataError(f"class {lab.name} has {len(idx)} records; a stratified split needs >= 3")
        rng = np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), 0x5B17, int(lab)]))
        idx = rng.permutation(idx)
        n_val = max(1, int(round(len(idx) * fractions[1])))
        n_test = max(1, int(round(len(idx) * fractions[2])))
        n_train = len(idx) - n_val - n_test
        if n_train < 1:
            n_train, n_val = 1, len(idx) - 1 - n_test
        parts[0].extend(idx[:n_train])
        parts[1].extend(idx[n_train:n_train + n_val])
        parts[2].extend(idx[n_train + n_val:])
    return tuple([records[i] for i in sorted(p)] for p in parts)


def evaluate(estimator: MRLMCClassifier, records: Sequence[Record]) -> MetricsReport:
    records = check_records(records)
    return compute_metrics(check_labels(records), estimator.predict(records))


@dataclass
class TrainResult:
    estimator: MRLMCClassifier
    report: MetricsReport
    splits: tuple

    def split_ids(self) -> dict:
        return {name: [r.subject_id for r in part] for name, part in zip(("train", "val", "test"), self.splits)}


def train(config: ExperimentConfig, records: Sequence[Record]) -> TrainResult:
    """Split, fit with validation-F1 model selection, report test metrics."""
    config.validate()
    records = check_records(records, config.mode)
    splits = split_dataset(records, config.train.fractions, config.train.seed)
    est = MRLMCClassifier(**config.estimator_params())
    est.fit(splits[0], validation_data=splits[1])
    report = evaluate(est, splits[2])
    report.trace = est.history_
    return TrainResult(est, report, splits)


def max_workers() -> int:
    try:
        return max(1, int(os.environ.get("MRLMC_THREADS", "1")))
    except ValueError:
        raise ConfigError("MRLMC_THREADS must be an integer", "MRLMC_THREADS") from None


def _run_cell(args):
    cfg_dict, records = args
    result = train(ExperimentConfig.from_dict(cfg_dict), records)
    return result.report.to_dict()


def _run_cells(configs: list[dict], records) -> list[dict]:
    workers = min(max_workers(), len(configs)) if configs else 1
    jobs = [(c, records) for c in configs]
    if workers <= 1:
        return [_run_cell(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_cell, jobs))


def _metric_columns(report: dict) -> dict:
    return {k: report[k] for k in ("accuracy", "precision", "recall", "f1")}


def ablation_configs(config: ExperimentConfig) -> list[ExperimentConfig]:
    base = config.to_dict()
    out = []
    for use_msc, use_sc in ABLATION_ROWS:
        d = ExperimentConfig.from_dict(base).to_dict()
        d["head"]["lambda1"] = base["head"]["lambda1"] if use_msc else 0.0
        d["head"]["lambda2"] = base["head"]["lambda2"] if use_sc else 0.0
        out.append(ExperimentConfig.from_dict(d))
    return out


def ablate(config: ExperimentConfig, records: Sequence[Record]) -> list[dict]:
    """Four rows: FL only, MSC+FL, SC+FL, all losses; shared seed and splits."""
    configs = ablation_configs(config)
    reports = _run_cells([c.to_dict() for c in configs], records)
    rows = []
    for (use_msc, use_sc), cfg, rep in zip(ABLATION_ROWS, configs, reports):
        rows.append({"L_MSC": use_msc, "L_SC": use_sc, "L_FL": True,
                     "lambda1": cfg.head.lambda1, "lambda2": cfg.head.lambda2, **_metric_columns(rep)})
    return rows


def sweep(config: ExperimentConfig, records: Sequence[Record], grid=None) -> list[dict]:
    """One row per grid point over n_scale x n_trans x n_head.

    Points whose head count does not divide the token width are reported with
    status ``invalid config`` instead of being trained.
    """
    grid = dict(grid or SWEEP_GRID)
    unknown = set(grid) - set(SWEEP_GRID)
    if unknown:
        raise ConfigError(f"unknown sweep axis {sorted(unknown)}", sorted(unknown)[0])
    axes = [grid.get(k, (v,)) for k, v in (("n_scale", config.model.n_scale), ("n_trans", config.semantic.n_trans),
                                          ("n_head", config.semantic.n_head))]
    rows, pending = [], []
    for n_scale, n_trans, n_head in itertools.product(*axes):
        d = config.to_dict()
        d["model"]["n_scale"], d["semantic"]["n_trans"], d["semantic"]["n_head"] = n_scale, n_trans, n_head
        row = {"n_scale": n_scale, "n_trans": n_trans, "n_head": n_head}
        try:
            ExperimentConfig.from_dict(d)
        except ConfigError as exc:
            row.update(status="invalid config", reason=str(exc))
        else:
            row.update(status="ok", reason="")
            pending.append((len(rows), d))
        rows.append(row)
    reports = _run_cells([d for _, d in pending], records)
    for (i, _), rep in zip(pending, reports):
        rows[i].update(_metric_columns(rep))
    for row in rows:
        for k in ("accuracy", "precision", "recall", "f1"):
            row.setdefault(k, "")
    return rows


def write_csv(rows: list[dict], path) -> None:
    if not rows:
        raise DataError("no rows to write")
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)


def write_trace(trace: list[dict], path) -> None:
    cols = ["epoch", "total", "msc", "sc", "fl", "val_f1"]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=cols, extrasaction="ignore")
        writer.writeheader()
        for row in trace:
            writer.writerow({c: row.get(c, "") for c in cols})
