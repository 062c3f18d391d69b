"""Shared fixtures: synthetic catalogs, label-coded images, a trained tiny model.

Synthetic images encode their label bits as bright/dark blocks in a 4x4
grid, so the tiny CNN can genuinely learn the mapping and tests exercising
"trained model" behavior (top-k ranking, CAM locality, service responses)
run in seconds without real data or pretrained weights.
"""

from __future__ import annotations

import numpy as np
import pytest
from PIL import Image

from dacnet.dataset import ImageRecord, make_patient_split
from dacnet.labels import NUM_DISEASES
from dacnet.recipes import ModelRecipe, OptimizerSpec, SchedulerSpec
from dacnet.transforms import TransformSpec

IMAGE_SIDE = 64
BLOCK = IMAGE_SIDE // 4


def label_coded_image(labels, rng: np.random.Generator) -> Image.Image:
    """Grayscale image whose 4x4 block grid encodes the 14 label bits."""
    pixels = rng.integers(40, 80, size=(IMAGE_SIDE, IMAGE_SIDE)).astype(np.uint8)
    for d in range(NUM_DISEASES):
        r, c = divmod(d, 4)
        value = 220 if labels[d] else 15
        pixels[r * BLOCK : (r + 1) * BLOCK, c * BLOCK : (c + 1) * BLOCK] = value
    return Image.fromarray(pixels, mode="L")


def synth_records(
    n_patients: int,
    images_per_patient=(1, 1),
    prevalence=(0.3, 0.2, 0.1),
    seed: int = 0,
) -> list[ImageRecord]:
    """Patients with shared labels; ``prevalence[d]`` is P(disease d present)."""
    rng = np.random.default_rng(seed)
    records = []
    for p in range(n_patients):
        labels = [0] * NUM_DISEASES
        for d, rate in enumerate(prevalence):
            if rng.random() < rate:
                labels[d] = 1
        n_images = int(rng.integers(images_per_patient[0], images_per_patient[1] + 1))
        for k in range(n_images):
            records.append(
                ImageRecord(
                    image_id=f"p{p:05d}_{k}.png",
                    patient_id=f"p{p:05d}",
                    labels=tuple(labels),
                    age=int(rng.integers(20, 90)),
                    gender="M" if rng.random() < 0.5 else "F",
                )
            )
    return records


def write_images(records, directory, seed: int = 0) -> None:
    rng = np.random.default_rng(seed)
    for rec in records:
        label_coded_image(rec.labels, rng).save(directory / rec.image_id)


def table1_like_records(n_patients: int, seed: int = 0) -> list[ImageRecord]:
    """Corpus shaped like the real catalog: ~55% finding-free, single labels
    dominating with a long skewed tail, occasional two-disease patients."""
    rng = np.random.default_rng(seed)
    weights = np.array(
        [8.5, 3.8, 3.5, 2.4, 2.0, 1.9, 1.2, 1.0, 0.97, 0.8, 0.5, 0.3, 0.2, 0.1]
    )
    weights = weights / weights.sum()
    records = []
    for p in range(n_patients):
        labels = [0] * NUM_DISEASES
        if rng.random() > 0.55:
            labels[rng.choice(NUM_DISEASES, p=weights)] = 1
            if rng.random() < 0.05:
                labels[rng.choice(NUM_DISEASES, p=weights)] = 1
        for k in range(int(rng.integers(1, 3))):
            records.append(
                ImageRecord(f"p{p:05d}_{k}.png", f"p{p:05d}", tuple(labels))
            )
    return records


TINY_TRANSFORM = TransformSpec(
    resize_policy="fixed_resize_224",
    horizontal_flip_prob=0.0,
    mean=(0.5, 0.5, 0.5),
    std=(0.25, 0.25, 0.25),
)


def tiny_recipe(**overrides) -> ModelRecipe:
    base = dict(
        name="tiny",
        backbone="tiny_test_cnn",
        pretrained=False,
        loss="bce",
        focal=None,
        optimizer=OptimizerSpec(kind="adam", lr=0.02),
        scheduler=SchedulerSpec(kind="none"),
        transform=TINY_TRANSFORM,
        batch_size=8,
        max_epochs=3,
        early_stop_patience=0,
        seed=7,
    )
    base.update(overrides)
    return ModelRecipe(**base)


@pytest.fixture(scope="session")
def synth_corpus(tmp_path_factory):
    """40 single-image patients with images on disk plus a 70/10/20 manifest."""
    data_dir = tmp_path_factory.mktemp("images")
    records = synth_records(
        40, images_per_patient=(1, 1),
        prevalence=(0.5, 0.4, 0.3, 0.25, 0.2), seed=11,
    )
    write_images(records, data_dir, seed=11)
    manifest = make_patient_split(records, ratios=(0.7, 0.1, 0.2), seed=5)
    return records, manifest, data_dir


@pytest.fixture(scope="session")
def trained_tiny_run(tmp_path_factory, synth_corpus):
    """A completed training run of the tiny backbone on the synthetic corpus."""
    from dacnet.training import train

    records, manifest, data_dir = synth_corpus
    run_dir = tmp_path_factory.mktemp("run")
    recipe = tiny_recipe(max_epochs=25, batch_size=8, seed=7)
    state = train(recipe, records, manifest, data_dir, run_dir, cache_images=True)
    return {
        "state": state,
        "run_dir": run_dir,
        "recipe": recipe,
        "records": records,
        "manifest": manifest,
        "data_dir": data_dir,
        "best_ckpt": run_dir / "best.ckpt",
        "last_ckpt": run_dir / "last.ckpt",
    }
