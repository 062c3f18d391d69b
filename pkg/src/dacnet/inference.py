"""Batched inference plumbing shared by training, evaluation, and the service."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch
from torch.utils.data import DataLoader, Dataset

from dacnet.dataset import ImageRecord, SplitManifest, split_records
from dacnet.errors import DacnetError
from dacnet.evaluation import PredictionSet
from dacnet.losses import bce_loss, focal_loss
from dacnet.models import Classifier
from dacnet.transforms import TrainTransform, build_eval_transform, load_image


class ChestXrayDataset(Dataset):
    """Image records -> (transformed tensor, 14-dim float target).

    ``cache=True`` keeps transformed tensors in memory; only sensible for
    deterministic transforms on small record sets (tests, tiny val splits).
    """

    def __init__(self, records: list[ImageRecord], image_dir, transform, cache: bool = False):
        self.records = records
        self.image_dir = Path(image_dir)
        self.transform = transform
        self._cache: dict[int, torch.Tensor] | None = {} if cache else None

    def __len__(self):
        return len(self.records)

    def __getitem__(self, index: int):
        rec = self.records[index]
        if self._cache is not None and index in self._cache:
            tensor = self._cache[index]
        else:
            image = load_image(self.image_dir / rec.image_id, image_id=rec.image_id)
            tensor = self.transform(image)
            if self._cache is not None:
                self._cache[index] = tensor
        target = torch.tensor(rec.labels, dtype=torch.float32)
        return tensor, target


def _reseed_worker_transform(worker_id: int) -> None:
    info = torch.utils.data.get_worker_info()
    transform = getattr(info.dataset, "transform", None)
    if isinstance(transform, TrainTransform):
        transform.reseed(transform.seed ^ worker_id)


def make_loader(
    dataset: ChestXrayDataset,
    batch_size: int,
    shuffle: bool = False,
    shuffle_seed: int | None = None,
    num_workers: int = 0,
) -> DataLoader:
    generator = None
    if shuffle:
        generator = torch.Generator()
        generator.manual_seed(shuffle_seed if shuffle_seed is not None else 0)
    return DataLoader(
        dataset,
        batch_size=batch_size,
        shuffle=shuffle,
        generator=generator,
        num_workers=num_workers,
        worker_init_fn=_reseed_worker_transform if num_workers else None,
    )


def recipe_loss_fn(recipe):
    """The recipe's loss as a (logits, targets) -> scalar tensor callable."""
    if recipe.loss == "focal":
        params = recipe.focal
        return lambda logits, targets: focal_loss(logits, targets, params)
    return bce_loss


def sigmoid(logits: np.ndarray) -> np.ndarray:
    """Overflow-safe elementwise sigmoid on numpy arrays."""
    return torch.sigmoid(torch.from_numpy(np.asarray(logits))).numpy()


@torch.no_grad()
def collect_logits(model: Classifier, loader: DataLoader) -> tuple[np.ndarray, np.ndarray]:
    """Run the model over a loader; returns (logits, targets) as float64 arrays."""
    model.eval()
    all_logits, all_targets = [], []
    for batch, targets in loader:
        all_logits.append(model(batch).double().numpy())
        all_targets.append(targets.numpy())
    if not all_logits:
        raise DacnetError("loader produced no batches")
    return np.concatenate(all_logits), np.concatenate(all_targets).astype(np.int64)


def predict_split(
    model: Classifier,
    recipe,
    records: list[ImageRecord],
    manifest: SplitManifest,
    split: str,
    data_dir,
    cache: bool = False,
) -> tuple[PredictionSet, np.ndarray]:
    """Deterministic predictions for one manifest split.

    Returns the PredictionSet (sigmoid probabilities, provenance-tagged with
    the split name) plus the raw logits for loss computation.
    """
    split_recs = split_records(records, manifest)[split]
    if not split_recs:
        raise DacnetError(f"split {split!r} has no records")
    dataset = ChestXrayDataset(
        split_recs, data_dir, build_eval_transform(recipe.transform), cache=cache
    )
    loader = make_loader(dataset, batch_size=recipe.batch_size)
    logits, targets = collect_logits(model, loader)
    scores = sigmoid(logits)
    predictions = PredictionSet(
        image_ids=[r.image_id for r in split_recs],
        scores=scores,
        targets=targets,
        split=split,
    )
    return predictions, logits


def mean_loss_from_logits(recipe, logits: np.ndarray, targets: np.ndarray) -> float:
    loss_fn = recipe_loss_fn(recipe)
    return float(loss_fn(torch.from_numpy(logits), torch.from_numpy(targets).double()))
