"""Canonical disease labels and multi-hot encoding helpers.

The 14 thoracic diseases are kept in a fixed alphabetical order; every
array-shaped structure in the toolkit (label vectors, logits, thresholds,
reports) is indexed by this order. "No Finding" is represented by the
all-zero vector, never as a 15th class.
"""

from __future__ import annotations

from typing import Iterable, Sequence

from dacnet.errors import UnknownDiseaseError

DISEASES: tuple[str, ...] = (
    "Atelectasis",
    "Cardiomegaly",
    "Consolidation",
    "Edema",
    "Effusion",
    "Emphysema",
    "Fibrosis",
    "Hernia",
    "Infiltration",
    "Mass",
    "Nodule",
    "Pleural_Thickening",
    "Pneumonia",
    "Pneumothorax",
)

NUM_DISEASES = len(DISEASES)

DISEASE_INDEX: dict[str, int] = {name: i for i, name in enumerate(DISEASES)}

NO_FINDING = "No Finding"


def disease_index(name: str) -> int:
    try:
        return DISEASE_INDEX[name]
    except KeyError:
        raise UnknownDiseaseError(f"unknown disease name: {name!r}") from None


def encode_labels(tokens: Iterable[str]) -> tuple[int, ...]:
    """Map disease name tokens to a 14-bit multi-hot tuple.

    The "No Finding" token is accepted and contributes no bits, so
    ``encode_labels(["No Finding"])`` is the all-zero vector.
    """
    bits = [0] * NUM_DISEASES
    for token in tokens:
        token = token.strip()
        if not token or token == NO_FINDING:
            continue
        bits[disease_index(token)] = 1
    return tuple(bits)


def decode_labels(bits: Sequence[int]) -> list[str]:
    """Inverse of :func:`encode_labels`: names of the set bits, canonical order."""
    if len(bits) != NUM_DISEASES:
        raise ValueError(f"expected {NUM_DISEASES} bits, got {len(bits)}")
    return [DISEASES[i] for i, b in enumerate(bits) if b]


def combination_key(bits: Sequence[int]) -> str:
    """Pipe-joined disease names in canonical order; "No Finding" if all zero."""
    names = decode_labels(bits)
    return "|".join(names) if names else NO_FINDING
