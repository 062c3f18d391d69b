"""Recipe-driven training loop with checkpointing and metric logging.

Per-epoch randomness (shuffle order, augmentation draws) is derived from
(recipe seed, epoch), never from a running RNG stream, so resuming from a
checkpoint continues with exactly the trajectory of an uninterrupted run.
The best checkpoint is selected by validation macro-AUC.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from dacnet.dataset import ImageRecord, SplitManifest, check_patient_disjoint, split_records
from dacnet.errors import DacnetError, LeakageError, TrainingDivergedError
from dacnet.evaluation import ThresholdSet, auc_roc, f1_at_threshold
from dacnet.inference import (
    ChestXrayDataset,
    collect_logits,
    make_loader,
    mean_loss_from_logits,
    recipe_loss_fn,
    sigmoid,
)
from dacnet.labels import NUM_DISEASES
from dacnet.models import build_classifier, load_checkpoint, save_checkpoint
from dacnet.recipes import ModelRecipe, recipe_to_dict, save_recipe
from dacnet.transforms import build_eval_transform, build_train_transform

BEST_CKPT = "best.ckpt"
LAST_CKPT = "last.ckpt"
HISTORY_CSV = "history.csv"
CONFIG_YAML = "config.yaml"


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    val_loss: float
    val_macro_auc: float
    val_macro_f1: float


@dataclass
class TrainState:
    epochs_completed: int = 0
    best_val_auc: float | None = None
    best_epoch: int | None = None
    best_checkpoint: str | None = None
    history: list[EpochMetrics] = field(default_factory=list)
    stopped_early: bool = False


class ConsoleSink:
    def emit(self, record: dict) -> None:
        print(
            "epoch {epoch:>3}  train_loss {train_loss:.4f}  val_loss {val_loss:.4f}  "
            "val_auc {val_macro_auc:.4f}  val_f1 {val_macro_f1:.4f}".format(**record)
        )


class CsvSink:
    """Appends one row per epoch; header written on first emit."""

    FIELDS = ("epoch", "train_loss", "val_loss", "val_macro_auc", "val_macro_f1")

    def __init__(self, path):
        self.path = Path(path)
        self._started = self.path.exists() and self.path.stat().st_size > 0

    def emit(self, record: dict) -> None:
        with open(self.path, "a", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=self.FIELDS, extrasaction="ignore")
            if not self._started:
                writer.writeheader()
                self._started = True
            writer.writerow(record)


def _epoch_seed(seed: int, epoch: int) -> int:
    digest = hashlib.sha256(f"{seed}:{epoch}".encode()).digest()
    return int.from_bytes(digest[:4], "big")


def make_optimizer(recipe: ModelRecipe, model) -> torch.optim.Optimizer:
    spec = recipe.optimizer
    if spec.kind == "adamw":
        return torch.optim.AdamW(model.parameters(), lr=spec.lr, weight_decay=spec.weight_decay)
    return torch.optim.Adam(model.parameters(), lr=spec.lr)


def make_scheduler(recipe: ModelRecipe, optimizer):
    spec = recipe.scheduler
    if spec.kind == "reduce_on_plateau":
        return torch.optim.lr_scheduler.ReduceLROnPlateau(
            optimizer, mode="max", factor=spec.factor, patience=spec.patience
        )
    if spec.kind == "cosine_annealing":
        return torch.optim.lr_scheduler.CosineAnnealingLR(optimizer, T_max=spec.t_max)
    return None


def _step_scheduler(scheduler, val_macro_auc: float) -> None:
    if scheduler is None:
        return
    if isinstance(scheduler, torch.optim.lr_scheduler.ReduceLROnPlateau):
        scheduler.step(val_macro_auc)
    else:
        scheduler.step()


def _validation_metrics(model, recipe, val_dataset) -> tuple[float, float, float]:
    """(val loss under the recipe loss, macro-AUC, macro-F1 at global 0.5)."""
    loader = make_loader(val_dataset, batch_size=recipe.batch_size)
    logits, targets = collect_logits(model, loader)
    val_loss = mean_loss_from_logits(recipe, logits, targets)
    scores = sigmoid(logits)
    aucs = [auc_roc(scores[:, d], targets[:, d]) for d in range(NUM_DISEASES)]
    defined = [a for a in aucs if a is not None]
    macro_auc = float(np.mean(defined)) if defined else float("nan")
    macro_f1 = float(
        np.mean([f1_at_threshold(scores[:, d], targets[:, d], 0.5) for d in range(NUM_DISEASES)])
    )
    return val_loss, macro_auc, macro_f1


def train(
    recipe: ModelRecipe,
    records: list[ImageRecord],
    manifest: SplitManifest,
    data_dir,
    run_dir,
    sinks: tuple = (),
    num_workers: int = 0,
    cache_images: bool = False,
) -> TrainState:
    """Train a recipe from scratch; see module docstring for determinism."""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    save_recipe(recipe, run_dir / CONFIG_YAML)

    model = build_classifier(recipe.backbone, pretrained=recipe.pretrained, seed=recipe.seed)
    optimizer = make_optimizer(recipe, model)
    scheduler = make_scheduler(recipe, optimizer)
    state = TrainState()
    return _run_epochs(
        recipe, model, optimizer, scheduler, state, records, manifest,
        data_dir, run_dir, sinks, num_workers, cache_images,
    )


def resume(
    checkpoint_path,
    records: list[ImageRecord],
    manifest: SplitManifest,
    data_dir,
    run_dir,
    sinks: tuple = (),
    expected_recipe: ModelRecipe | None = None,
    num_workers: int = 0,
    cache_images: bool = False,
) -> TrainState:
    """Continue training from a ``last.ckpt``; a finished run exits cleanly."""
    from dacnet.recipes import recipe_from_dict

    expected_dict = recipe_to_dict(expected_recipe) if expected_recipe is not None else None
    payload = load_checkpoint(checkpoint_path, expected_recipe_dict=expected_dict)
    recipe = recipe_from_dict(payload["recipe"])
    extra = payload["extra"]
    if "train_state" not in extra:
        raise DacnetError(
            f"{checkpoint_path} carries no resumable training state (inference-only checkpoint)"
        )

    model = build_classifier(recipe.backbone, pretrained=False)
    model.load_state_dict(payload["state_dict"])
    optimizer = make_optimizer(recipe, model)
    optimizer.load_state_dict(extra["optimizer"])
    scheduler = make_scheduler(recipe, optimizer)
    if scheduler is not None and extra.get("scheduler") is not None:
        scheduler.load_state_dict(extra["scheduler"])

    saved = extra["train_state"]
    state = TrainState(
        epochs_completed=saved["epochs_completed"],
        best_val_auc=saved["best_val_auc"],
        best_epoch=saved["best_epoch"],
        best_checkpoint=saved["best_checkpoint"],
        history=[EpochMetrics(**h) for h in saved["history"]],
        stopped_early=saved["stopped_early"],
    )
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    return _run_epochs(
        recipe, model, optimizer, scheduler, state, records, manifest,
        data_dir, run_dir, sinks, num_workers, cache_images,
    )


def _run_epochs(
    recipe, model, optimizer, scheduler, state, records, manifest,
    data_dir, run_dir, sinks, num_workers, cache_images,
) -> TrainState:
    check_patient_disjoint(records, manifest)
    splits = split_records(records, manifest)
    train_recs, val_recs = splits["train"], splits["val"]
    if not train_recs:
        raise DacnetError("train split is empty")
    if not val_recs:
        raise DacnetError("val split is empty; model selection needs validation data")
    train_patients = {r.patient_id for r in train_recs}
    val_patients = {r.patient_id for r in val_recs}
    if train_patients & val_patients:
        raise LeakageError(
            f"train/val patient overlap: {sorted(train_patients & val_patients)[:5]}"
        )

    loss_fn = recipe_loss_fn(recipe)
    train_transform = build_train_transform(recipe.transform, recipe.seed)
    train_dataset = ChestXrayDataset(train_recs, data_dir, train_transform, cache=cache_images)
    val_dataset = ChestXrayDataset(
        val_recs, data_dir, build_eval_transform(recipe.transform), cache=cache_images
    )

    for epoch in range(state.epochs_completed, recipe.max_epochs):
        epoch_seed = _epoch_seed(recipe.seed, epoch)
        train_transform.reseed(epoch_seed)
        loader = make_loader(
            train_dataset,
            batch_size=recipe.batch_size,
            shuffle=True,
            shuffle_seed=epoch_seed,
            num_workers=num_workers,
        )
        model.train()
        losses = []
        for step, (batch, targets) in enumerate(loader):
            optimizer.zero_grad()
            loss = loss_fn(model(batch), targets)
            if not math.isfinite(loss.item()):
                _dump_divergence(run_dir, model, recipe, state, epoch, step, loss.item())
                raise TrainingDivergedError(
                    f"non-finite loss {loss.item()} at epoch {epoch} step {step}; "
                    f"diagnostic snapshot written to {run_dir}"
                )
            loss.backward()
            optimizer.step()
            losses.append(loss.item())

        val_loss, val_auc, val_f1 = _validation_metrics(model, recipe, val_dataset)
        metrics = EpochMetrics(
            epoch=epoch,
            train_loss=float(np.mean(losses)),
            val_loss=val_loss,
            val_macro_auc=val_auc,
            val_macro_f1=val_f1,
        )
        state.history.append(metrics)
        state.epochs_completed = epoch + 1
        for sink in sinks:
            sink.emit(asdict(metrics))

        if state.best_val_auc is None or val_auc > state.best_val_auc:
            state.best_val_auc = val_auc
            state.best_epoch = epoch
            state.best_checkpoint = str(run_dir / BEST_CKPT)
            save_checkpoint(
                run_dir / BEST_CKPT,
                model,
                recipe_to_dict(recipe),
                extra={"epoch": epoch, "val_macro_auc": val_auc, "val_macro_f1": val_f1},
            )
        _step_scheduler(scheduler, val_auc)
        _save_last(run_dir, model, recipe, optimizer, scheduler, state)

        epochs_since_best = epoch - (state.best_epoch if state.best_epoch is not None else epoch)
        if recipe.early_stop_patience and epochs_since_best >= recipe.early_stop_patience:
            state.stopped_early = True
            _save_last(run_dir, model, recipe, optimizer, scheduler, state)
            break

    _write_history(run_dir / HISTORY_CSV, state.history)
    return state


def _save_last(run_dir, model, recipe, optimizer, scheduler, state) -> None:
    save_checkpoint(
        run_dir / LAST_CKPT,
        model,
        recipe_to_dict(recipe),
        extra={
            "optimizer": optimizer.state_dict(),
            "scheduler": scheduler.state_dict() if scheduler is not None else None,
            "train_state": {
                "epochs_completed": state.epochs_completed,
                "best_val_auc": state.best_val_auc,
                "best_epoch": state.best_epoch,
                "best_checkpoint": state.best_checkpoint,
                "history": [asdict(h) for h in state.history],
                "stopped_early": state.stopped_early,
            },
        },
    )


def _write_history(path, history: list[EpochMetrics]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CsvSink.FIELDS)
        writer.writeheader()
        for metrics in history:
            writer.writerow(asdict(metrics))


def _dump_divergence(run_dir, model, recipe, state, epoch, step, loss_value) -> None:
    save_checkpoint(
        run_dir / "diverged.ckpt",
        model,
        recipe_to_dict(recipe),
        extra={"epoch": epoch, "step": step},
    )
    with open(run_dir / "diverged.json", "w") as fh:
        json.dump(
            {
                "epoch": epoch,
                "step": step,
                "loss": repr(loss_value),
                "epochs_completed": state.epochs_completed,
            },
            fh,
            indent=2,
        )


def tuned_thresholds_for_checkpoint(
    checkpoint_path,
    records: list[ImageRecord],
    manifest: SplitManifest,
    data_dir,
    split: str = "val",
    grid=None,
) -> ThresholdSet:
    """Fit per-disease thresholds on a split's predictions (validation by default)."""
    from dacnet.evaluation import DEFAULT_GRID, tune_thresholds
    from dacnet.inference import predict_split
    from dacnet.models import model_from_checkpoint
    from dacnet.recipes import recipe_from_dict

    payload = load_checkpoint(checkpoint_path)
    model = model_from_checkpoint(payload)
    recipe = recipe_from_dict(payload["recipe"])
    predictions, _ = predict_split(model, recipe, records, manifest, split, data_dir)
    return tune_thresholds(predictions, grid=grid or DEFAULT_GRID)
