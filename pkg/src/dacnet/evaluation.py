"""Per-disease AUC-ROC / F1 metrics, threshold tuning, and report generation.

AUC follows the Mann-Whitney rank formulation with average ranks for ties,
so it equals (concordant pairs + 0.5 * tied pairs) / (P * N). When a disease
has no positives or no negatives in the evaluated split its AUC is undefined
and reported as None; macro averages skip undefined entries with a warning.

The binary decision rule everywhere is ``predict positive iff score >= t``.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from dacnet.errors import DacnetError, LeakageError
from dacnet.labels import DISEASES, NUM_DISEASES, disease_index

DEFAULT_GRID: tuple[float, ...] = tuple(round(i / 100, 2) for i in range(101))


def auc_roc(scores, targets) -> float | None:
    """Rank-statistic AUC-ROC; None when only one class is present."""
    scores = np.asarray(scores, dtype=np.float64)
    targets = np.asarray(targets)
    if scores.shape != targets.shape or scores.ndim != 1:
        raise ValueError(
            f"scores/targets must be aligned 1-d arrays, got {scores.shape} vs {targets.shape}"
        )
    pos = targets == 1
    n_pos = int(pos.sum())
    n_neg = int(targets.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = _average_ranks(scores)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks, ties assigned the mean rank of their group."""
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(values.size, dtype=np.float64)
    sorted_vals = values[order]
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def f1_at_threshold(scores, targets, t: float) -> float:
    """F1 of the decision ``score >= t``; 0 when there are no positives anywhere."""
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"threshold must be in [0, 1], got {t}")
    scores = np.asarray(scores, dtype=np.float64)
    targets = np.asarray(targets)
    if scores.shape != targets.shape:
        raise ValueError("scores and targets must be aligned")
    pred = scores >= t
    truth = targets == 1
    tp = int(np.sum(pred & truth))
    fp = int(np.sum(pred & ~truth))
    fn = int(np.sum(~pred & truth))
    denom = 2 * tp + fp + fn
    return 2.0 * tp / denom if denom else 0.0


@dataclass
class PredictionSet:
    """Row-aligned scores and targets for one split."""

    image_ids: list[str]
    scores: np.ndarray  # (N, 14) in [0, 1]
    targets: np.ndarray  # (N, 14) binary
    split: str | None = None  # provenance: which split produced these rows

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.targets = np.asarray(self.targets)
        n = len(self.image_ids)
        if self.scores.shape != (n, NUM_DISEASES) or self.targets.shape != (n, NUM_DISEASES):
            raise ValueError(
                f"expected ({n}, {NUM_DISEASES}) scores and targets, "
                f"got {self.scores.shape} and {self.targets.shape}"
            )
        if n == 0:
            raise ValueError("empty prediction set")
        if self.scores.min() < 0 or self.scores.max() > 1:
            raise ValueError("scores must lie in [0, 1]")


@dataclass(frozen=True)
class ThresholdSet:
    """One decision threshold per disease, tagged with where it was fitted."""

    values: tuple[float, ...]
    fitted_on: str  # "val", "test", or "default"

    def __post_init__(self):
        if len(self.values) != NUM_DISEASES:
            raise ValueError(f"expected {NUM_DISEASES} thresholds, got {len(self.values)}")
        for t in self.values:
            if not 0.0 <= t <= 1.0:
                raise ValueError(f"threshold out of [0, 1]: {t}")

    @classmethod
    def global_threshold(cls, t: float = 0.5, fitted_on: str = "default") -> "ThresholdSet":
        return cls(values=(float(t),) * NUM_DISEASES, fitted_on=fitted_on)

    def for_disease(self, name: str) -> float:
        return self.values[disease_index(name)]


def tune_thresholds(predictions: PredictionSet, grid=DEFAULT_GRID) -> ThresholdSet:
    """Pick, per disease, the grid threshold maximizing F1 on ``predictions``.

    Ties break toward the smallest threshold. A disease whose best F1 is 0
    (e.g. no positives in the split) gets the largest grid value so the
    deployed rule stays maximally conservative.
    """
    grid = [float(t) for t in grid]
    if not grid:
        raise ValueError("threshold grid is empty")
    if sorted(grid) != grid:
        raise ValueError("threshold grid must be sorted ascending")
    if grid[0] < 0 or grid[-1] > 1:
        raise ValueError("threshold grid must lie within [0, 1]")
    chosen = []
    for d in range(NUM_DISEASES):
        best_t, best_f1 = grid[0], -1.0
        for t in grid:
            f1 = f1_at_threshold(predictions.scores[:, d], predictions.targets[:, d], t)
            if f1 > best_f1:
                best_t, best_f1 = t, f1
        if best_f1 == 0.0:
            best_t = grid[-1]
        chosen.append(best_t)
    fitted_on = predictions.split or "val"
    return ThresholdSet(values=tuple(chosen), fitted_on=fitted_on)


@dataclass
class EvalReport:
    """Per-disease AUC and F1 with macro averages and mean loss for one split."""

    per_disease_auc: dict[str, float | None]
    per_disease_f1: dict[str, float]
    macro_auc: float
    macro_f1: float
    mean_loss: float
    thresholds: ThresholdSet
    split: str | None = None
    model_fingerprint: str | None = None
    num_images: int = 0
    undefined_auc: list[str] = field(default_factory=list)


def evaluate_predictions(
    predictions: PredictionSet,
    thresholds: ThresholdSet,
    mean_loss: float | None = None,
    model_fingerprint: str | None = None,
) -> EvalReport:
    """Score a prediction set against fitted thresholds.

    ``mean_loss`` carries the recipe's loss computed from logits by the
    caller; when absent, the mean BCE of the probabilities is reported.
    Thresholds fitted on the test split are refused outright: tuning on the
    data being scored would leak the answer into the decision rule.
    """
    if thresholds.fitted_on == "test":
        raise LeakageError(
            "refusing to evaluate with thresholds fitted on the test split; "
            "fit thresholds on validation predictions only"
        )
    aucs: dict[str, float | None] = {}
    f1s: dict[str, float] = {}
    undefined = []
    for d, name in enumerate(DISEASES):
        scores_d = predictions.scores[:, d]
        targets_d = predictions.targets[:, d]
        auc = auc_roc(scores_d, targets_d)
        aucs[name] = auc
        if auc is None:
            undefined.append(name)
        f1s[name] = f1_at_threshold(scores_d, targets_d, thresholds.values[d])
    if undefined:
        warnings.warn(
            f"AUC undefined (single-class split) for: {', '.join(undefined)}; "
            "excluded from macro-AUC",
            stacklevel=2,
        )
    defined = [v for v in aucs.values() if v is not None]
    macro_auc = float(np.mean(defined)) if defined else float("nan")
    macro_f1 = float(np.mean(list(f1s.values())))
    loss = (
        mean_loss
        if mean_loss is not None
        else _probability_bce(predictions.scores, predictions.targets)
    )
    return EvalReport(
        per_disease_auc=aucs,
        per_disease_f1=f1s,
        macro_auc=macro_auc,
        macro_f1=macro_f1,
        mean_loss=loss,
        thresholds=thresholds,
        split=predictions.split,
        model_fingerprint=model_fingerprint,
        num_images=len(predictions.image_ids),
        undefined_auc=undefined,
    )


def _probability_bce(scores: np.ndarray, targets: np.ndarray) -> float:
    eps = 1e-12
    p = np.clip(scores, eps, 1 - eps)
    y = targets.astype(np.float64)
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))


# ---------------------------------------------------------------------------
# Prediction / threshold / report files
# ---------------------------------------------------------------------------


def write_predictions_csv(predictions: PredictionSet, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = (
            ["image_id"]
            + [f"score_{n}" for n in DISEASES]
            + [f"target_{n}" for n in DISEASES]
        )
        writer.writerow(header)
        for i, image_id in enumerate(predictions.image_ids):
            writer.writerow(
                [image_id]
                + [repr(float(s)) for s in predictions.scores[i]]
                + [int(t) for t in predictions.targets[i]]
            )


def read_predictions_csv(path, split: str | None = None) -> PredictionSet:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        expected = (
            ["image_id"]
            + [f"score_{n}" for n in DISEASES]
            + [f"target_{n}" for n in DISEASES]
        )
        if header != expected:
            raise DacnetError(f"unexpected predictions header in {path}")
        ids, scores, targets = [], [], []
        for row in reader:
            ids.append(row[0])
            scores.append([float(x) for x in row[1 : 1 + NUM_DISEASES]])
            targets.append([int(x) for x in row[1 + NUM_DISEASES :]])
    return PredictionSet(ids, np.array(scores), np.array(targets), split=split)


def write_thresholds(thresholds: ThresholdSet, path) -> None:
    doc = {
        "fitted_on": thresholds.fitted_on,
        "thresholds": {name: thresholds.values[i] for i, name in enumerate(DISEASES)},
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def read_thresholds(path) -> ThresholdSet:
    with open(path) as fh:
        doc = json.load(fh)
    try:
        values = tuple(float(doc["thresholds"][name]) for name in DISEASES)
        fitted_on = str(doc["fitted_on"])
    except KeyError as exc:
        raise DacnetError(f"malformed thresholds file {path}: missing {exc}") from None
    return ThresholdSet(values=values, fitted_on=fitted_on)


def report_to_dict(report: EvalReport) -> dict:
    return {
        "split": report.split,
        "model_fingerprint": report.model_fingerprint,
        "num_images": report.num_images,
        "macro_auc": report.macro_auc,
        "macro_f1": report.macro_f1,
        "mean_loss": report.mean_loss,
        "undefined_auc": report.undefined_auc,
        "thresholds": {
            "fitted_on": report.thresholds.fitted_on,
            "values": {n: report.thresholds.values[i] for i, n in enumerate(DISEASES)},
        },
        "per_disease": {
            n: {"auc": report.per_disease_auc[n], "f1": report.per_disease_f1[n]}
            for n in DISEASES
        },
    }


def write_report(report: EvalReport, path) -> None:
    with open(path, "w") as fh:
        json.dump(report_to_dict(report), fh, indent=2)
        fh.write("\n")


def render_report(report: EvalReport) -> str:
    lines = [f"{'Disease':<20} {'AUC':>8} {'F1':>8} {'thr':>6}"]
    for i, name in enumerate(DISEASES):
        auc = report.per_disease_auc[name]
        auc_s = f"{auc:.4f}" if auc is not None else "   n/a"
        lines.append(
            f"{name:<20} {auc_s:>8} {report.per_disease_f1[name]:>8.4f} "
            f"{report.thresholds.values[i]:>6.2f}"
        )
    lines.append("-" * 44)
    lines.append(
        f"{'macro':<20} {report.macro_auc:>8.4f} {report.macro_f1:>8.4f}"
        f"   loss {report.mean_loss:.4f}"
    )
    return "\n".join(lines)


def render_comparison(
    reports: list[EvalReport],
    labels: list[str],
    baseline: dict[str, float] | None = None,
    baseline_label: str = "baseline",
) -> str:
    """Aligned per-disease AUC table across reports, max value per row marked ``*``.

    ``baseline`` is an extra static per-disease AUC column (e.g. published
    reference numbers) prepended before the reports' columns.
    """
    if len(reports) != len(labels):
        raise ValueError("one label per report required")
    for r in reports:
        if list(r.per_disease_auc.keys()) != list(DISEASES):
            raise DacnetError("report disease ordering mismatch")
    if baseline is not None and set(baseline) != set(DISEASES):
        raise DacnetError("baseline disease set mismatch")
    columns = ([baseline_label] if baseline is not None else []) + labels
    widths = [max(len(c), 7) for c in columns]
    head = f"{'Disease':<20} " + " ".join(c.rjust(w) for c, w in zip(columns, widths))
    lines = [head]
    mark_max = len(columns) > 1
    for name in DISEASES:
        row: list[float | None] = []
        if baseline is not None:
            row.append(baseline[name])
        row.extend(r.per_disease_auc[name] for r in reports)
        defined = [v for v in row if v is not None]
        best = max(defined) if defined else None
        cells = []
        for v, w in zip(row, widths):
            if v is None:
                cells.append("n/a".rjust(w))
            else:
                marker = "*" if mark_max and v == best else " "
                cells.append(f"{v:.3f}{marker}".rjust(w))
        lines.append(f"{name:<20} " + " ".join(cells))
    return "\n".join(lines)


def comparison_to_dict(
    reports: list[EvalReport],
    labels: list[str],
    baseline: dict[str, float] | None = None,
    baseline_label: str = "baseline",
) -> dict:
    cols: dict[str, dict[str, float | None]] = {}
    if baseline is not None:
        cols[baseline_label] = dict(baseline)
    for label, report in zip(labels, reports):
        cols[label] = dict(report.per_disease_auc)
    return {"metric": "auc", "columns": cols}
