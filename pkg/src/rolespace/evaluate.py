"""Confusion metrics, rank-based ROC AUC, lift curves and feature ablation.

Departed is the positive class everywhere. Metrics with an empty denominator
are carried as explicit (metric, reason) markers instead of NaN. Lift sorts
by score descending with ties kept in input order, and the top-of-list cutoff
is ceil(s * N) on a value snapped to 9 decimals so binary float noise cannot
move an exact decimal boundary.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

from .validation import check_binary_labels, check_consistent_length, check_scores

DEFAULT_FRACTIONS = tuple(round(0.05 * i, 2) for i in range(1, 21))

_METRIC_FIELDS = ("tp_rate", "fp_rate", "precision", "recall", "f_measure", "roc_auc")


class UndefinedMetricError(ValueError):
    """A metric has no defined value for this input (reason in args)."""


@dataclass(frozen=True)
class EvalReport:
    """Confusion counts plus derived rates; None fields are undefined."""

    tp: int
    fp: int
    tn: int
    fn: int
    tp_rate: float | None
    fp_rate: float | None
    precision: float | None
    recall: float | None
    f_measure: float | None
    roc_auc: float | None
    lift_points: tuple[tuple[float, float], ...] = ()
    undefined: tuple[tuple[str, str], ...] = ()

    @property
    def n_instances(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def as_dict(self) -> dict:
        out = {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn}
        for name in _METRIC_FIELDS:
            out[name] = getattr(self, name)
        out["lift_points"] = [list(p) for p in self.lift_points]
        out["undefined"] = {name: reason for name, reason in self.undefined}
        return out


def confusion_metrics(scores, labels, threshold: float = 0.5) -> EvalReport:
    """Threshold scores at ``threshold`` (>= is positive) and tabulate.

    roc_auc is filled from the rank statistic when both classes are present;
    lift points are left empty (see lift_curve / evaluate_scores).
    """
    scores = check_scores(scores)
    y = check_binary_labels(labels)
    check_consistent_length(scores, y)
    predicted = scores >= threshold
    actual = y == 1
    tp = int(np.sum(predicted & actual))
    fp = int(np.sum(predicted & ~actual))
    tn = int(np.sum(~predicted & ~actual))
    fn = int(np.sum(~predicted & actual))
    undefined: list[tuple[str, str]] = []
    values: dict[str, float | None] = {}

    def ratio(name, numerator, denominator, reason):
        if denominator == 0:
            values[name] = None
            undefined.append((name, reason))
        else:
            values[name] = numerator / denominator

    ratio("tp_rate", tp, tp + fn, "no positive instances")
    ratio("fp_rate", fp, fp + tn, "no negative instances")
    ratio("precision", tp, tp + fp, "no predicted positives")
    values["recall"] = values["tp_rate"]
    p, r = values["precision"], values["recall"]
    if p is None or r is None:
        values["f_measure"] = None
        undefined.append(("f_measure", "precision or recall undefined"))
    elif p + r == 0:
        values["f_measure"] = None
        undefined.append(("f_measure", "precision and recall both zero"))
    else:
        values["f_measure"] = 2 * p * r / (p + r)
    try:
        values["roc_auc"] = roc_auc(scores, y)
    except UndefinedMetricError as exc:
        values["roc_auc"] = None
        undefined.append(("roc_auc", str(exc)))
    return EvalReport(tp=tp, fp=fp, tn=tn, fn=fn,
                      tp_rate=values["tp_rate"], fp_rate=values["fp_rate"],
                      precision=values["precision"], recall=values["recall"],
                      f_measure=values["f_measure"], roc_auc=values["roc_auc"],
                      undefined=tuple(undefined))


def roc_auc(scores, labels) -> float:
    """Mann-Whitney AUC: average ranks over tied scores, exact for ties."""
    scores = check_scores(scores)
    y = check_binary_labels(labels)
    check_consistent_length(scores, y)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("roc_auc needs both classes present")
    ranks = rankdata(scores, method="average")
    pos_rank_sum = float(ranks[y == 1].sum())
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg)


def _cutoff(fraction: float, n: int) -> int:
    # snap before ceil: 0.1 * 100 must select 10 rows, not 11
    return math.ceil(round(fraction * n, 9))


def lift_curve(scores, labels,
               fractions: Sequence[float] = DEFAULT_FRACTIONS) -> list[tuple[float, float]]:
    """Lift at each fraction: churner share captured in the top ceil(s*N) / s."""
    scores = check_scores(scores)
    y = check_binary_labels(labels)
    check_consistent_length(scores, y)
    total_pos = int(y.sum())
    if total_pos == 0 or total_pos == y.size:
        raise UndefinedMetricError("lift_curve needs both classes present")
    for s in fractions:
        if not 0.0 < s <= 1.0:
            raise ValueError(f"fractions must lie in (0, 1], got {s}")
    order = np.argsort(-scores, kind="stable")
    cum_pos = np.cumsum(y[order])
    points = []
    for s in fractions:
        m = _cutoff(s, y.size)
        captured = int(cum_pos[m - 1]) if m > 0 else 0
        points.append((float(s), (captured / total_pos) / s))
    return points


def evaluate_scores(scores, labels, threshold: float = 0.5,
                    fractions: Sequence[float] = DEFAULT_FRACTIONS) -> EvalReport:
    """confusion_metrics plus lift points when both classes are present."""
    report = confusion_metrics(scores, labels, threshold)
    try:
        lift = tuple(lift_curve(scores, labels, fractions))
        return _replace_report(report, lift_points=lift)
    except UndefinedMetricError as exc:
        return _replace_report(
            report, undefined=report.undefined + (("lift", str(exc)),))


def _replace_report(report: EvalReport, **changes) -> EvalReport:
    fields = report.__dict__ | changes
    return EvalReport(**fields)


def average_reports(reports: Sequence[EvalReport]) -> EvalReport:
    """Sum counts; average each metric over the folds where it is defined."""
    if not reports:
        raise ValueError("no reports to average")
    counts = {name: sum(getattr(r, name) for r in reports)
              for name in ("tp", "fp", "tn", "fn")}
    values: dict[str, float | None] = {}
    undefined: list[tuple[str, str]] = []
    for name in _METRIC_FIELDS:
        defined = [getattr(r, name) for r in reports if getattr(r, name) is not None]
        if defined:
            values[name] = float(np.mean(defined))
        else:
            values[name] = None
            undefined.append((name, f"undefined in all {len(reports)} folds"))
    lift_by_fraction: dict[float, list[float]] = {}
    for r in reports:
        for s, lift in r.lift_points:
            lift_by_fraction.setdefault(s, []).append(lift)
    lift_points = tuple((s, float(np.mean(lifts)))
                        for s, lifts in sorted(lift_by_fraction.items()))
    return EvalReport(**counts, **values, lift_points=lift_points,
                      undefined=tuple(undefined))


@dataclass(frozen=True)
class AblationResult:
    """Averaged metric deltas (full minus ablated) per removed feature group."""

    full_report: EvalReport
    ablated_reports: tuple[tuple[str, EvalReport], ...]

    def delta(self, group: str, metric: str = "roc_auc") -> float | None:
        full_value = getattr(self.full_report, metric)
        for name, report in self.ablated_reports:
            if name == group:
                ablated_value = getattr(report, metric)
                if full_value is None or ablated_value is None:
                    return None
                return full_value - ablated_value
        raise KeyError(f"unknown feature group {group!r}")

    def deltas(self, metric: str = "roc_auc") -> dict[str, float | None]:
        return {name: self.delta(name, metric) for name, _ in self.ablated_reports}

    @property
    def group_names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.ablated_reports)


def ablate(dataset, feature_groups: Mapping[str, Sequence[int]], trainer,
           folds: int = 10, seed: int = 0) -> AblationResult:
    """Retrain with each group's columns removed under identical folds.

    Fold assignment depends only on labels and seed, so every ablated run
    sees the same partition as the full run. Removing a group that covers
    every column degrades to a constant prior scorer.
    """
    from .classify import cross_validate, dataset_drop_columns, train_prior

    n_features = dataset.n_features
    covered = set()
    for name, columns in feature_groups.items():
        for c in columns:
            if not 0 <= c < n_features:
                raise ValueError(f"group {name!r} references unknown column {c}")
            covered.add(c)
    if covered != set(range(n_features)):
        missing = sorted(set(range(n_features)) - covered)
        raise ValueError(f"feature groups do not cover columns {missing}")
    full = cross_validate(dataset, trainer, folds=folds, seed=seed)
    ablated = []
    for name in feature_groups:
        reduced = dataset_drop_columns(dataset, feature_groups[name])
        fold_trainer = trainer if reduced.n_features > 0 else train_prior
        result = cross_validate(reduced, fold_trainer, folds=folds, seed=seed)
        ablated.append((name, result.averaged))
    return AblationResult(full_report=full.averaged, ablated_reports=tuple(ablated))


def write_report_json(report: EvalReport, path: str | Path) -> None:
    Path(path).write_text(json.dumps(report.as_dict(), indent=2, sort_keys=True) + "\n")


def write_lift_csv(points: Iterable[tuple[float, float]], path: str | Path) -> None:
    lines = ["fraction,lift"]
    lines += [f"{s:g},{lift:.12g}" for s, lift in points]
    Path(path).write_text("\n".join(lines) + "\n")


def write_window_series_csv(series: Sequence[tuple[int, EvalReport]],
                            path: str | Path) -> None:
    """Per-window metric rows for trend plots."""
    lines = ["window," + ",".join(_METRIC_FIELDS)]
    for window, report in series:
        cells = []
        for name in _METRIC_FIELDS:
            value = getattr(report, name)
            cells.append("" if value is None else f"{value:.12g}")
        lines.append(f"{window}," + ",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n")


def write_ablation_csv(result: AblationResult, path: str | Path) -> None:
    lines = ["group,roc_auc_delta,f_measure_delta,ablated_roc_auc,ablated_f_measure"]
    for name, report in result.ablated_reports:
        auc_delta = result.delta(name, "roc_auc")
        f_delta = result.delta(name, "f_measure")
        cells = [name,
                 "" if auc_delta is None else f"{auc_delta:.12g}",
                 "" if f_delta is None else f"{f_delta:.12g}",
                 "" if report.roc_auc is None else f"{report.roc_auc:.12g}",
                 "" if report.f_measure is None else f"{report.f_measure:.12g}"]
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n")
