"""Training recipes: the three shipped presets and the YAML config schema.

A recipe file is a flat YAML document (see README for the schema). The three
presets are frozen constants; ``load_recipe`` accepts either a preset name
or a path to a YAML file, so experiments start from a preset and override
fields by editing a copy.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace
from importlib import resources

import yaml

from dacnet.errors import DacnetError
from dacnet.losses import FocalParams
from dacnet.models import BACKBONES
from dacnet.transforms import ColorJitterSpec, TransformSpec

OPTIMIZERS = ("adam", "adamw")
SCHEDULERS = ("none", "reduce_on_plateau", "cosine_annealing")
LOSSES = ("bce", "focal")


@dataclass(frozen=True)
class OptimizerSpec:
    kind: str = "adam"
    lr: float = 0.001
    weight_decay: float = 0.0

    def __post_init__(self):
        if self.kind not in OPTIMIZERS:
            raise DacnetError(f"unknown optimizer {self.kind!r}")
        if self.lr <= 0:
            raise DacnetError("learning rate must be positive")


@dataclass(frozen=True)
class SchedulerSpec:
    kind: str = "none"
    factor: float = 0.1
    patience: int = 2
    t_max: int = 10  # cosine_annealing period; kept as an option, no preset uses it

    def __post_init__(self):
        if self.kind not in SCHEDULERS:
            raise DacnetError(f"unknown scheduler {self.kind!r}")


@dataclass(frozen=True)
class ModelRecipe:
    name: str
    backbone: str
    pretrained: bool = True
    loss: str = "bce"
    focal: FocalParams | None = None
    optimizer: OptimizerSpec = OptimizerSpec()
    scheduler: SchedulerSpec = SchedulerSpec()
    transform: TransformSpec = TransformSpec()
    batch_size: int = 32
    max_epochs: int = 30
    early_stop_patience: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.backbone not in BACKBONES:
            raise DacnetError(f"unknown backbone {self.backbone!r}")
        if self.loss not in LOSSES:
            raise DacnetError(f"unknown loss {self.loss!r}")
        if self.loss == "focal" and self.focal is None:
            object.__setattr__(self, "focal", FocalParams())
        if self.batch_size <= 0 or self.max_epochs < 0:
            raise DacnetError("batch_size must be positive and max_epochs >= 0")


REPLICATE_CHEXNET = ModelRecipe(
    name="replicate_chexnet",
    backbone="densenet121",
    pretrained=True,
    loss="bce",
    optimizer=OptimizerSpec(kind="adam", lr=0.001),
    scheduler=SchedulerSpec(kind="none"),
    transform=TransformSpec(resize_policy="fixed_resize_224", horizontal_flip_prob=0.5),
)

DACNET = ModelRecipe(
    name="dacnet",
    backbone="densenet121",
    pretrained=True,
    loss="focal",
    focal=FocalParams(gamma=2.0, alpha=1.0),
    optimizer=OptimizerSpec(kind="adamw", lr=0.00005, weight_decay=0.01),
    scheduler=SchedulerSpec(kind="reduce_on_plateau", factor=0.1, patience=2),
    transform=TransformSpec(
        resize_policy="random_resized_crop_224",
        horizontal_flip_prob=0.5,
        color_jitter=ColorJitterSpec(brightness=0.1, contrast=0.1),
    ),
)

VIT_TRANSFORMER = ModelRecipe(
    name="vit_transformer",
    backbone="vit_base_patch16",
    pretrained=True,
    loss="bce",
    optimizer=OptimizerSpec(kind="adamw", lr=0.00005, weight_decay=0.01),
    scheduler=SchedulerSpec(kind="none"),
    transform=TransformSpec(resize_policy="fixed_resize_224", horizontal_flip_prob=0.5),
)

PRESETS: dict[str, ModelRecipe] = {
    r.name: r for r in (REPLICATE_CHEXNET, DACNET, VIT_TRANSFORMER)
}


def recipe_to_dict(recipe: ModelRecipe) -> dict:
    d = asdict(recipe)
    if recipe.focal is None:
        d.pop("focal")
    if recipe.transform.color_jitter is None:
        d["transform"].pop("color_jitter")
    for key in ("mean", "std"):
        d["transform"][key] = list(d["transform"][key])
    return d


def recipe_from_dict(doc: dict) -> ModelRecipe:
    doc = dict(doc)
    try:
        transform_doc = dict(doc.get("transform", {}))
        jitter_doc = transform_doc.pop("color_jitter", None)
        if jitter_doc is not None:
            transform_doc["color_jitter"] = ColorJitterSpec(**jitter_doc)
        for key in ("mean", "std"):
            if key in transform_doc:
                transform_doc[key] = tuple(transform_doc[key])
        focal_doc = doc.pop("focal", None)
        return ModelRecipe(
            name=doc["name"],
            backbone=doc["backbone"],
            pretrained=bool(doc.get("pretrained", True)),
            loss=doc.get("loss", "bce"),
            focal=FocalParams(**focal_doc) if focal_doc is not None else None,
            optimizer=OptimizerSpec(**doc.get("optimizer", {})),
            scheduler=SchedulerSpec(**doc.get("scheduler", {})),
            transform=TransformSpec(**transform_doc),
            batch_size=int(doc.get("batch_size", 32)),
            max_epochs=int(doc.get("max_epochs", 30)),
            early_stop_patience=int(doc.get("early_stop_patience", 5)),
            seed=int(doc.get("seed", 0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DacnetError(f"invalid recipe config: {exc}") from exc


def save_recipe(recipe: ModelRecipe, path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(recipe_to_dict(recipe), fh, sort_keys=False)


def load_recipe(name_or_path) -> ModelRecipe:
    """Resolve a preset name or read a recipe YAML file."""
    key = str(name_or_path)
    if key in PRESETS:
        return PRESETS[key]
    try:
        with open(name_or_path) as fh:
            doc = yaml.safe_load(fh)
    except FileNotFoundError:
        raise DacnetError(
            f"no preset or recipe file named {key!r}; presets: {', '.join(PRESETS)}"
        ) from None
    if not isinstance(doc, dict):
        raise DacnetError(f"recipe file {key!r} is not a YAML mapping")
    return recipe_from_dict(doc)


def load_preset_file(name: str) -> ModelRecipe:
    """Read one of the shipped preset YAML files from package data."""
    ref = resources.files("dacnet").joinpath(f"presets/{name}.yaml")
    with ref.open() as fh:
        return recipe_from_dict(yaml.safe_load(fh))


def with_overrides(recipe: ModelRecipe, **kwargs) -> ModelRecipe:
    return replace(recipe, **kwargs)
