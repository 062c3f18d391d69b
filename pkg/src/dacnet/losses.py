"""Multi-label classification losses over independent per-disease logits.

Both losses reduce by the mean over every batch x disease element and are
computed from log-sigmoid identities, so raw logits are never exponentiated.
With ``z = logit * (2y - 1)``:

    per-element BCE   = softplus(-z)                    (= -log p_t)
    per-element focal = alpha * sigmoid(-z)**gamma * softplus(-z)

where ``p_t = sigmoid(z)`` is the probability assigned to the true label.
Setting gamma=0, alpha=1 makes the focal loss identical to BCE, including
bit-for-bit on the same inputs. The alpha factor scales positive and
negative elements symmetrically.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F


@dataclass(frozen=True)
class FocalParams:
    gamma: float = 2.0
    alpha: float = 1.0

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if self.alpha <= 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")


def _check_shapes(logits: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    if logits.shape != targets.shape:
        raise ValueError(
            f"logits shape {tuple(logits.shape)} != targets shape {tuple(targets.shape)}"
        )
    targets = targets.to(dtype=logits.dtype)
    bad = (targets != 0) & (targets != 1)
    if bool(bad.any()):
        raise ValueError("targets must be binary (0/1)")
    return targets


def bce_loss(logits: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    """Mean binary cross-entropy from logits, numerically stable for any magnitude."""
    targets = _check_shapes(logits, targets)
    z = logits * (2.0 * targets - 1.0)
    return F.softplus(-z).mean()


def focal_loss(
    logits: torch.Tensor,
    targets: torch.Tensor,
    params: FocalParams = FocalParams(),
) -> torch.Tensor:
    """Mean focal loss: BCE per element down-weighted by (1 - p_t)**gamma.

    Easy elements (p_t near 1) contribute almost nothing for gamma > 0,
    which is what counteracts the heavy "No Finding" majority.
    """
    targets = _check_shapes(logits, targets)
    z = logits * (2.0 * targets - 1.0)
    ce = F.softplus(-z)
    if params.gamma == 0:
        return (params.alpha * ce).mean()
    modulator = torch.sigmoid(-z) ** params.gamma
    return (params.alpha * modulator * ce).mean()
