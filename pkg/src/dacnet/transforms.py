"""Image preprocessing pipelines, deterministic by seed.

Every pipeline maps a decodable image to a float32 3x224x224 tensor:
grayscale inputs are replicated to three channels, spatial ops run before
the per-channel normalization. Training pipelines draw all stochastic
choices (crop, flip, jitter) from a private generator seeded at
construction, so two pipelines built with the same seed produce identical
output sequences; evaluation pipelines contain no stochastic ops at all.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torchvision.transforms.functional as TF
from PIL import Image, UnidentifiedImageError

from dacnet.errors import ImageDecodeError, TransformError

OUTPUT_SIZE = 224

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)

RESIZE_POLICIES = ("fixed_resize_224", "random_resized_crop_224")

# Crop scale range preserves at least 70% of the image area: anatomy must
# survive augmentation.
CROP_SCALE = (0.7, 1.0)
CROP_RATIO = (3.0 / 4.0, 4.0 / 3.0)


@dataclass(frozen=True)
class ColorJitterSpec:
    brightness: float = 0.0
    contrast: float = 0.0
    saturation: float = 0.0
    hue: float = 0.0

    def __post_init__(self):
        for name in ("brightness", "contrast", "saturation"):
            if getattr(self, name) < 0:
                raise TransformError(f"jitter {name} must be >= 0")
        if not 0.0 <= self.hue <= 0.5:
            raise TransformError("jitter hue must be in [0, 0.5]")

    @property
    def active(self) -> bool:
        return any((self.brightness, self.contrast, self.saturation, self.hue))


@dataclass(frozen=True)
class TransformSpec:
    resize_policy: str = "fixed_resize_224"
    horizontal_flip_prob: float = 0.0
    color_jitter: ColorJitterSpec | None = None
    mean: tuple[float, float, float] = IMAGENET_MEAN
    std: tuple[float, float, float] = IMAGENET_STD

    def __post_init__(self):
        if self.resize_policy not in RESIZE_POLICIES:
            raise TransformError(f"unknown resize policy {self.resize_policy!r}")
        if not 0.0 <= self.horizontal_flip_prob <= 1.0:
            raise TransformError("horizontal_flip_prob must be in [0, 1]")
        if len(self.mean) != 3 or len(self.std) != 3:
            raise TransformError("normalization stats must be per-channel triples")
        if any(s <= 0 for s in self.std):
            raise TransformError("normalization std must be positive")


def load_image(path, image_id: str | None = None) -> Image.Image:
    try:
        with Image.open(path) as img:
            return img.convert("RGB")
    except (UnidentifiedImageError, OSError) as exc:
        ident = image_id if image_id is not None else str(path)
        raise ImageDecodeError(f"cannot decode image {ident!r}: {exc}", image_id=ident) from exc


def normalize(tensor: torch.Tensor, mean, std) -> torch.Tensor:
    mean_t = torch.tensor(mean, dtype=tensor.dtype).view(3, 1, 1)
    std_t = torch.tensor(std, dtype=tensor.dtype).view(3, 1, 1)
    return (tensor - mean_t) / std_t


def denormalize(tensor: torch.Tensor, mean, std) -> torch.Tensor:
    mean_t = torch.tensor(mean, dtype=tensor.dtype).view(3, 1, 1)
    std_t = torch.tensor(std, dtype=tensor.dtype).view(3, 1, 1)
    return tensor * std_t + mean_t


def _to_rgb(image: Image.Image) -> Image.Image:
    return image if image.mode == "RGB" else image.convert("RGB")


def _fixed_resize(image: Image.Image) -> Image.Image:
    if image.size == (OUTPUT_SIZE, OUTPUT_SIZE):
        return image
    return TF.resize(image, [OUTPUT_SIZE, OUTPUT_SIZE], antialias=True)


class EvalTransform:
    """Deterministic resize + normalize, no stochastic ops."""

    def __init__(self, spec: TransformSpec):
        self.spec = spec

    def __call__(self, image: Image.Image) -> torch.Tensor:
        image = _fixed_resize(_to_rgb(image))
        tensor = TF.to_tensor(image)
        return normalize(tensor, self.spec.mean, self.spec.std)


class TrainTransform:
    """Augmenting pipeline whose randomness is a pure function of its seed.

    Each call advances the internal generator, so one instance yields an
    augmentation sequence; rebuilding with the same seed replays it. With
    jitter off, flip probability 0 or 1, and the fixed resize policy the
    pipeline is deterministic call to call.
    """

    def __init__(self, spec: TransformSpec, seed: int):
        self.spec = spec
        self.seed = seed
        self._rng = torch.Generator().manual_seed(seed)

    def reseed(self, seed: int) -> None:
        """Rebase the augmentation stream, e.g. per epoch or per worker."""
        self.seed = seed
        self._rng.manual_seed(seed)

    def _uniform(self, low: float, high: float) -> float:
        return float(torch.empty(1).uniform_(low, high, generator=self._rng).item())

    def __call__(self, image: Image.Image) -> torch.Tensor:
        image = _to_rgb(image)
        if self.spec.resize_policy == "random_resized_crop_224":
            image = self._random_resized_crop(image)
        else:
            image = _fixed_resize(image)
        if self._uniform(0.0, 1.0) < self.spec.horizontal_flip_prob:
            image = TF.hflip(image)
        jitter = self.spec.color_jitter
        if jitter is not None and jitter.active:
            image = self._apply_jitter(image, jitter)
        tensor = TF.to_tensor(image)
        return normalize(tensor, self.spec.mean, self.spec.std)

    def _random_resized_crop(self, image: Image.Image) -> Image.Image:
        width, height = image.size
        area = width * height
        for _ in range(10):
            target_area = area * self._uniform(*CROP_SCALE)
            log_ratio = (torch.log(torch.tensor(CROP_RATIO[0])), torch.log(torch.tensor(CROP_RATIO[1])))
            ratio = float(torch.exp(torch.empty(1).uniform_(
                float(log_ratio[0]), float(log_ratio[1]), generator=self._rng)).item())
            w = int(round((target_area * ratio) ** 0.5))
            h = int(round((target_area / ratio) ** 0.5))
            if 0 < w <= width and 0 < h <= height:
                top = int(self._uniform(0, height - h + 1))
                left = int(self._uniform(0, width - w + 1))
                return TF.resized_crop(
                    image, top, left, h, w, [OUTPUT_SIZE, OUTPUT_SIZE], antialias=True
                )
        return _fixed_resize(image)  # fallback: crop params never fit

    def _apply_jitter(self, image: Image.Image, jitter: ColorJitterSpec) -> Image.Image:
        if jitter.brightness:
            image = TF.adjust_brightness(
                image, self._uniform(max(0.0, 1 - jitter.brightness), 1 + jitter.brightness)
            )
        if jitter.contrast:
            image = TF.adjust_contrast(
                image, self._uniform(max(0.0, 1 - jitter.contrast), 1 + jitter.contrast)
            )
        if jitter.saturation:
            image = TF.adjust_saturation(
                image, self._uniform(max(0.0, 1 - jitter.saturation), 1 + jitter.saturation)
            )
        if jitter.hue:
            image = TF.adjust_hue(image, self._uniform(-jitter.hue, jitter.hue))
        return image


def build_train_transform(spec: TransformSpec, seed: int) -> TrainTransform:
    return TrainTransform(spec, seed)


def build_eval_transform(spec: TransformSpec) -> EvalTransform:
    return EvalTransform(spec)
