"""Grad-CAM heatmaps and overlay rendering for convolutional checkpoints.

The CAM for disease d weights each feature channel by the spatial mean of
d(logit_d)/dA^k, sums the weighted channels, clips negatives with ReLU,
min-max normalizes (a constant map becomes all zeros rather than NaN), and
bilinearly upsamples to the 224x224 input frame.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image

from dacnet.errors import DacnetError
from dacnet.labels import DISEASES, disease_index
from dacnet.models import Classifier, capture_cam_features
from dacnet.transforms import OUTPUT_SIZE

# Overlay constants are fixed so rendered files are stable across runs.
OVERLAY_ALPHA = 0.4


@dataclass
class HeatMap:
    values: np.ndarray  # (h, w), min-max normalized to [0, 1]
    upsampled: np.ndarray  # (224, 224) in [0, 1]
    disease: str


def cam_from_activations(activations: np.ndarray, gradients: np.ndarray) -> np.ndarray:
    """Normalized CAM from raw (K, h, w) activations and matching gradients."""
    activations = np.asarray(activations, dtype=np.float64)
    gradients = np.asarray(gradients, dtype=np.float64)
    if activations.shape != gradients.shape or activations.ndim != 3:
        raise DacnetError(
            f"activations {activations.shape} and gradients {gradients.shape} "
            "must both be (K, h, w)"
        )
    weights = gradients.mean(axis=(1, 2))
    raw = np.maximum((weights[:, None, None] * activations).sum(axis=0), 0.0)
    lo, hi = raw.min(), raw.max()
    if hi == lo:
        return np.zeros_like(raw)
    return (raw - lo) / (hi - lo)


def upsample_bilinear(values: np.ndarray, size: int = OUTPUT_SIZE) -> np.ndarray:
    tensor = torch.from_numpy(np.asarray(values, dtype=np.float64))[None, None]
    out = F.interpolate(tensor, size=(size, size), mode="bilinear", align_corners=False)
    return out[0, 0].numpy()


def grad_cam(model: Classifier, image: torch.Tensor, disease: str | int) -> HeatMap:
    """Grad-CAM heatmap for one disease logit on one 3x224x224 image tensor."""
    if isinstance(disease, str):
        idx = disease_index(disease)
    else:
        idx = int(disease)
        if not 0 <= idx < len(DISEASES):
            raise DacnetError(f"disease index out of range: {idx}")
    if image.ndim != 3:
        raise DacnetError(f"expected a single (3, H, W) image, got {tuple(image.shape)}")
    model.eval()
    with capture_cam_features(model) as captured:
        with torch.enable_grad():
            logits = model(image[None])
            model.zero_grad(set_to_none=True)
            logits[0, idx].backward()
    activations = captured.activations[0].detach().numpy()
    gradients = captured.gradients[0].detach().numpy()
    values = cam_from_activations(activations, gradients)
    return HeatMap(
        values=values,
        upsampled=np.clip(upsample_bilinear(values), 0.0, 1.0),
        disease=DISEASES[idx],
    )


def _jet_colormap(values: np.ndarray) -> np.ndarray:
    """Classic jet colormap; (h, w) in [0,1] -> (h, w, 3) floats in [0,1]."""
    v = np.asarray(values, dtype=np.float64)
    r = np.clip(1.5 - np.abs(4.0 * v - 3.0), 0.0, 1.0)
    g = np.clip(1.5 - np.abs(4.0 * v - 2.0), 0.0, 1.0)
    b = np.clip(1.5 - np.abs(4.0 * v - 1.0), 0.0, 1.0)
    return np.stack([r, g, b], axis=-1)


def overlay(heatmap: HeatMap, image: Image.Image) -> Image.Image:
    """Alpha-blend the colormapped heatmap over the input image.

    Per-pixel alpha is OVERLAY_ALPHA * heat, so zero-heat regions pass the
    source pixels through untouched.
    """
    hm = heatmap.upsampled
    if image.size != (hm.shape[1], hm.shape[0]):
        raise DacnetError(
            f"image size {image.size} does not match heatmap {hm.shape[::-1]}"
        )
    base = np.asarray(image.convert("RGB"), dtype=np.float64) / 255.0
    color = _jet_colormap(hm)
    alpha = (OVERLAY_ALPHA * hm)[..., None]
    blended = (1.0 - alpha) * base + alpha * color
    return Image.fromarray((blended * 255.0).round().astype(np.uint8), mode="RGB")


def render_overlay_png(heatmap: HeatMap, image: Image.Image, path) -> None:
    overlay(heatmap, image).save(path, format="PNG")
