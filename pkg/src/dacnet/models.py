"""Backbone registry and the 14-logit classifier used by every recipe.

Supported backbones: densenet121, resnet50, efficientnet_b3 (convolutional,
CAM-capable), vit_base_patch16 (no spatial feature maps, CAM unsupported),
and tiny_test_cnn, a <100k-parameter CNN that keeps the whole test suite
runnable in seconds without pretrained downloads.

Checkpoints carry a fingerprint over the recipe and the canonical disease
ordering; loading verifies it so a checkpoint can never silently be reused
with a different configuration or label order.
"""

from __future__ import annotations

import hashlib
import json
import urllib.error

import torch
import torch.nn as nn
import torch.nn.functional as F
import torchvision.models as tvm

from dacnet.errors import (
    CamUnsupportedError,
    FingerprintMismatchError,
    ModelError,
    UnknownBackboneError,
    WeightsUnavailableError,
)
from dacnet.labels import DISEASES, NUM_DISEASES

FEATURE_DIMS = {
    "densenet121": 1024,
    "resnet50": 2048,
    "efficientnet_b3": 1536,
    "vit_base_patch16": 768,
    "tiny_test_cnn": 64,
}

CONV_BACKBONES = ("densenet121", "resnet50", "efficientnet_b3", "tiny_test_cnn")

BACKBONES = tuple(FEATURE_DIMS)

CHECKPOINT_FORMAT_VERSION = 1


class TinyTestCnn(nn.Module):
    """Three stride-2 conv blocks; cheap enough to overfit 32 images in seconds."""

    def __init__(self):
        super().__init__()
        self.blocks = nn.Sequential(
            nn.Conv2d(3, 16, 3, stride=4, padding=1),
            nn.GroupNorm(4, 16),
            nn.ReLU(inplace=True),
            nn.Conv2d(16, 32, 3, stride=2, padding=1),
            nn.GroupNorm(4, 32),
            nn.ReLU(inplace=True),
            nn.Conv2d(32, 64, 3, stride=2, padding=1),
            nn.GroupNorm(4, 64),
            nn.ReLU(inplace=True),
        )

    def forward(self, x):
        return self.blocks(x)


def _load_tv_backbone(factory, weights_enum, pretrained: bool, kind: str):
    if not pretrained:
        return factory(weights=None)
    try:
        return factory(weights=weights_enum.DEFAULT)
    except (urllib.error.URLError, OSError, RuntimeError) as exc:
        raise WeightsUnavailableError(
            f"pretrained weights for {kind!r} could not be loaded: {exc}. "
            "Download them on a connected machine and place the cache under "
            "$TORCH_HOME/hub/checkpoints (default ~/.cache/torch/hub/checkpoints); "
            "there is no silent fallback to random initialization."
        ) from exc


class Classifier(nn.Module):
    """Backbone feature extractor plus a fresh linear head emitting 14 logits."""

    def __init__(self, backbone: str, pretrained: bool = False):
        super().__init__()
        if backbone not in BACKBONES:
            raise UnknownBackboneError(
                f"unknown backbone {backbone!r}; supported: {', '.join(BACKBONES)}"
            )
        self.backbone_name = backbone
        self.pretrained = pretrained
        feature_dim = FEATURE_DIMS[backbone]

        if backbone == "densenet121":
            net = _load_tv_backbone(tvm.densenet121, tvm.DenseNet121_Weights, pretrained, backbone)
            self.features = net.features
        elif backbone == "resnet50":
            net = _load_tv_backbone(tvm.resnet50, tvm.ResNet50_Weights, pretrained, backbone)
            self.features = nn.Sequential(
                net.conv1, net.bn1, net.relu, net.maxpool,
                net.layer1, net.layer2, net.layer3, net.layer4,
            )
        elif backbone == "efficientnet_b3":
            net = _load_tv_backbone(
                tvm.efficientnet_b3, tvm.EfficientNet_B3_Weights, pretrained, backbone
            )
            self.features = net.features
        elif backbone == "tiny_test_cnn":
            if pretrained:
                raise WeightsUnavailableError("tiny_test_cnn has no pretrained weights")
            self.features = TinyTestCnn()
        else:  # vit_base_patch16
            net = _load_tv_backbone(tvm.vit_b_16, tvm.ViT_B_16_Weights, pretrained, backbone)
            net.heads = nn.Identity()
            self.features = net

        self.head = nn.Linear(feature_dim, NUM_DISEASES)
        nn.init.uniform_(self.head.weight, -0.01, 0.01)
        nn.init.zeros_(self.head.bias)

    @property
    def cam_supported(self) -> bool:
        return self.backbone_name in CONV_BACKBONES

    def feature_map(self, x: torch.Tensor) -> torch.Tensor:
        """Last convolutional activations (N, K, h, w); error for the ViT."""
        if not self.cam_supported:
            raise CamUnsupportedError(
                f"{self.backbone_name!r} exposes no spatial feature maps"
            )
        return self.features(x)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.ndim != 4 or x.shape[1] != 3:
            raise ModelError(f"expected (N, 3, H, W) input, got {tuple(x.shape)}")
        feats = self.features(x)
        if feats.ndim == 4:
            feats = F.relu(feats)
            feats = F.adaptive_avg_pool2d(feats, 1).flatten(1)
        return self.head(feats)


def build_classifier(kind: str, pretrained: bool = False, seed: int | None = None) -> Classifier:
    """Construct a classifier; ``seed`` fixes all randomly-initialized weights."""
    if seed is not None:
        torch.manual_seed(seed)
    return Classifier(kind, pretrained=pretrained)


def predict_probabilities(model: Classifier, batch: torch.Tensor) -> torch.Tensor:
    """Independent per-disease probabilities: elementwise sigmoid of the logits."""
    if model.training:
        raise ModelError("model must be in inference mode; call model.eval() first")
    if batch.ndim != 4 or batch.shape[1:] != (3, 224, 224):
        raise ModelError(f"expected (N, 3, 224, 224) batch, got {tuple(batch.shape)}")
    with torch.no_grad():
        return torch.sigmoid(model(batch))


class CamFeatureHook:
    """Captures the last conv activations and their gradients for Grad-CAM.

    Usage::

        with capture_cam_features(model) as cap:
            logits = model(batch)
            logits[0, disease].backward()
        cap.activations, cap.gradients  # both (N, K, h, w)

    Gradient capture is stateful: one forward+backward at a time per hook.
    """

    def __init__(self, model: Classifier):
        if not model.cam_supported:
            raise CamUnsupportedError(
                f"Grad-CAM needs a convolutional backbone, not {model.backbone_name!r}"
            )
        self._model = model
        self._handle = None
        self.activations: torch.Tensor | None = None
        self.gradients: torch.Tensor | None = None

    def __enter__(self):
        def forward_hook(_module, _inputs, output):
            self.activations = output
            output.register_hook(self._store_grad)

        self._handle = self._model.features.register_forward_hook(forward_hook)
        return self

    def _store_grad(self, grad):
        self.gradients = grad

    def __exit__(self, *exc_info):
        if self._handle is not None:
            self._handle.remove()
            self._handle = None
        return False


def capture_cam_features(model: Classifier) -> CamFeatureHook:
    return CamFeatureHook(model)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def recipe_fingerprint(recipe_dict: dict, diseases=DISEASES) -> str:
    """Stable hash over the recipe configuration and the disease ordering."""
    canon = json.dumps({"recipe": recipe_dict, "diseases": list(diseases)}, sort_keys=True)
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def save_checkpoint(path, model: Classifier, recipe_dict: dict, extra: dict | None = None) -> None:
    payload = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "state_dict": model.state_dict(),
        "recipe": recipe_dict,
        "diseases": list(DISEASES),
        "fingerprint": recipe_fingerprint(recipe_dict),
        "extra": extra or {},
    }
    torch.save(payload, path)


def load_checkpoint(path, expected_recipe_dict: dict | None = None) -> dict:
    """Load and verify a checkpoint payload (not yet bound to a model).

    Verifies internal fingerprint consistency, the disease ordering, and,
    when ``expected_recipe_dict`` is given, that the checkpoint was produced
    by that exact recipe.
    """
    payload = torch.load(path, map_location="cpu", weights_only=False)
    stored = payload.get("fingerprint")
    recomputed = recipe_fingerprint(payload["recipe"], payload["diseases"])
    if stored != recomputed:
        raise FingerprintMismatchError(
            f"checkpoint {path} fingerprint {stored!r} does not match its contents"
        )
    if payload["diseases"] != list(DISEASES):
        raise FingerprintMismatchError(
            f"checkpoint {path} was written with a different disease ordering"
        )
    if expected_recipe_dict is not None:
        expected = recipe_fingerprint(expected_recipe_dict)
        if stored != expected:
            raise FingerprintMismatchError(
                f"checkpoint fingerprint {stored!r} != expected recipe fingerprint {expected!r}"
            )
    return payload


def model_from_checkpoint(payload: dict) -> Classifier:
    recipe = payload["recipe"]
    model = Classifier(recipe["backbone"], pretrained=False)
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model
