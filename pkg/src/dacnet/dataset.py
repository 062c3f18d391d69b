"""NIH ChestX-ray14 metadata parsing, label statistics, and patient-wise splits.

The metadata file is the public ``Data_Entry_2017.csv``: comma-separated with
a header, one row per image, diseases pipe-separated in "Finding Labels".
All functions here are pure over their inputs and deterministic for a fixed
seed, so split manifests are reproducible byte for byte.
"""

from __future__ import annotations

import csv
import hashlib
import logging
import random
from dataclasses import dataclass

from dacnet.errors import DatasetError, ManifestError, UnknownDiseaseError
from dacnet.labels import NUM_DISEASES, combination_key, encode_labels

logger = logging.getLogger(__name__)

REQUIRED_COLUMNS = ("Image Index", "Finding Labels", "Patient ID")

SPLITS = ("train", "val", "test")

DEFAULT_RATIOS = (0.7, 0.1, 0.2)


@dataclass(frozen=True)
class ImageRecord:
    image_id: str
    patient_id: str
    labels: tuple[int, ...]
    age: int | None = None  # provenance only, unused by models
    gender: str = ""

    def __post_init__(self):
        if not self.patient_id:
            raise DatasetError(f"record {self.image_id!r} has empty patient id")
        if len(self.labels) != NUM_DISEASES:
            raise DatasetError(f"record {self.image_id!r} has {len(self.labels)} label bits")


def parse_catalog(metadata_file) -> list[ImageRecord]:
    """Parse the metadata CSV into one ImageRecord per row.

    Unknown disease tokens and missing required columns are hard errors;
    non-numeric ages are tolerated (age=None) and counted in a warning.
    """
    records: list[ImageRecord] = []
    seen_ids: set[str] = set()
    bad_ages = 0
    with open(metadata_file, newline="", encoding="utf-8-sig") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DatasetError(f"{metadata_file}: empty metadata file")
        missing = [c for c in REQUIRED_COLUMNS if c not in reader.fieldnames]
        if missing:
            raise DatasetError(f"{metadata_file}: missing required column(s) {missing}")
        for row_num, row in enumerate(reader, start=2):
            image_id = row["Image Index"].strip()
            if image_id in seen_ids:
                raise DatasetError(f"{metadata_file}:{row_num}: duplicate image id {image_id!r}")
            seen_ids.add(image_id)
            try:
                labels = encode_labels(row["Finding Labels"].split("|"))
            except UnknownDiseaseError as exc:
                raise UnknownDiseaseError(f"{metadata_file}:{row_num}: {exc}") from None
            age_raw = (row.get("Patient Age") or "").strip()
            age: int | None
            try:
                age = int(age_raw)
            except ValueError:
                age = None
                bad_ages += 1
            records.append(
                ImageRecord(
                    image_id=image_id,
                    patient_id=row["Patient ID"].strip(),
                    labels=labels,
                    age=age,
                    gender=(row.get("Patient Gender") or "").strip(),
                )
            )
    if bad_ages:
        logger.warning("parse_catalog: %d rows had non-numeric ages (kept, age=None)", bad_ages)
    return records


def label_combination_stats(records: list[ImageRecord]) -> dict[str, tuple[int, float]]:
    """Count each distinct disease combination, keyed canonically.

    Returns combination -> (count, fraction), ordered by descending count
    then key, so iterating yields the most common findings first.
    """
    if not records:
        raise DatasetError("label_combination_stats: empty record list")
    counts: dict[str, int] = {}
    for rec in records:
        key = combination_key(rec.labels)
        counts[key] = counts.get(key, 0) + 1
    total = len(records)
    ordered = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return {key: (n, n / total) for key, n in ordered}


@dataclass
class SplitManifest:
    split_of: dict[str, str]  # image_id -> train/val/test
    seed: int
    ratios: tuple[float, float, float]

    def image_ids(self, split: str) -> list[str]:
        if split not in SPLITS:
            raise ManifestError(f"unknown split {split!r}")
        return [i for i, s in self.split_of.items() if s == split]


def _validate_ratios(ratios) -> tuple[float, float, float]:
    if len(ratios) != len(SPLITS):
        raise DatasetError(f"expected {len(SPLITS)} ratios, got {len(ratios)}")
    ratios = tuple(float(r) for r in ratios)
    if any(r <= 0 for r in ratios):
        raise DatasetError(f"ratios must be positive, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise DatasetError(f"ratios must sum to 1, got sum={sum(ratios)!r}")
    return ratios


def _bucket_rng(seed: int, bucket: str) -> random.Random:
    digest = hashlib.sha256(f"{seed}:{bucket}".encode()).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def make_patient_split(
    records: list[ImageRecord],
    ratios=DEFAULT_RATIOS,
    seed: int = 0,
) -> SplitManifest:
    """Deterministic stratified patient-level split.

    Every patient's images land in exactly one split. Patients are bucketed
    by their rarest present disease (by image-level prevalence; a "No
    Finding" bucket when none), shuffled per bucket with a seed-derived RNG,
    and streamed through a largest-deficit quota assignment weighted by each
    patient's image count, which keeps per-split image fractions tight to
    the requested ratios while preserving per-disease prevalence.
    """
    ratios = _validate_ratios(ratios)
    if not records:
        raise DatasetError("make_patient_split: empty record list")

    by_patient: dict[str, list[ImageRecord]] = {}
    for rec in records:
        by_patient.setdefault(rec.patient_id, []).append(rec)
    if len(by_patient) < len(SPLITS):
        raise DatasetError(
            f"need at least {len(SPLITS)} patients for {len(SPLITS)} splits, "
            f"got {len(by_patient)}"
        )

    prevalence = [0] * NUM_DISEASES
    for rec in records:
        for d in range(NUM_DISEASES):
            prevalence[d] += rec.labels[d]

    def bucket_of(patient_records: list[ImageRecord]) -> str:
        present = set()
        for rec in patient_records:
            present.update(d for d in range(NUM_DISEASES) if rec.labels[d])
        if not present:
            return "No Finding"
        rarest = min(present, key=lambda d: (prevalence[d], d))
        return str(rarest)

    buckets: dict[str, list[str]] = {}
    for pid, recs in by_patient.items():
        buckets.setdefault(bucket_of(recs), []).append(pid)

    def bucket_order_key(bucket: str):
        if bucket == "No Finding":
            return (1, 0)
        return (0, prevalence[int(bucket)], int(bucket))

    # Per-bucket quota assignment weighted by image counts. Each bucket gets
    # ratio shares of its own images (so every bucket is apportioned across
    # splits, within one patient of exact), and the leftover fraction is
    # carried into the next bucket to keep the global totals on ratio too.
    residual = [0.0] * len(SPLITS)
    split_of_patient: dict[str, str] = {}
    for bucket in sorted(buckets, key=bucket_order_key):
        patients = sorted(buckets[bucket])
        _bucket_rng(seed, bucket).shuffle(patients)
        # heaviest first (stable over the shuffle): single-image patients
        # then level the remaining deficits, so each split ends within about
        # one image of its share of the bucket
        patients.sort(key=lambda pid: -len(by_patient[pid]))
        bucket_images = sum(len(by_patient[pid]) for pid in patients)
        targets = [ratios[i] * bucket_images + residual[i] for i in range(len(SPLITS))]
        assigned = [0.0] * len(SPLITS)
        for pid in patients:
            weight = len(by_patient[pid])
            choice = max(range(len(SPLITS)), key=lambda i: (targets[i] - assigned[i], -i))
            split_of_patient[pid] = SPLITS[choice]
            assigned[choice] += weight
        residual = [targets[i] - assigned[i] for i in range(len(SPLITS))]

    split_of = {rec.image_id: split_of_patient[rec.patient_id] for rec in records}
    return SplitManifest(split_of=split_of, seed=seed, ratios=ratios)


def split_records(
    records: list[ImageRecord], manifest: SplitManifest
) -> dict[str, list[ImageRecord]]:
    """Partition records by the manifest; records missing from it are an error."""
    out: dict[str, list[ImageRecord]] = {s: [] for s in SPLITS}
    for rec in records:
        split = manifest.split_of.get(rec.image_id)
        if split is None:
            raise ManifestError(f"image {rec.image_id!r} not present in manifest")
        out[split].append(rec)
    return out


def write_manifest(manifest: SplitManifest, path) -> None:
    if not manifest.split_of:
        raise ManifestError("refusing to write an empty manifest")
    ratios_s = ",".join(repr(r) for r in manifest.ratios)
    with open(path, "w") as fh:
        fh.write(f"# seed={manifest.seed} ratios={ratios_s}\n")
        for image_id, split in manifest.split_of.items():
            fh.write(f"{image_id}\t{split}\n")


def read_manifest(path) -> SplitManifest:
    with open(path) as fh:
        header = fh.readline().rstrip("\n")
        if not header.startswith("# seed="):
            raise ManifestError(f"{path}:1: malformed manifest header: {header!r}")
        try:
            seed_part, ratios_part = header[2:].split(" ratios=")
            seed = int(seed_part.removeprefix("seed="))
            ratios = _validate_ratios([float(r) for r in ratios_part.split(",")])
        except (ValueError, DatasetError) as exc:
            raise ManifestError(f"{path}:1: malformed manifest header: {exc}") from None
        split_of: dict[str, str] = {}
        for line_num, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ManifestError(f"{path}:{line_num}: expected '<image_id>\\t<split>'")
            image_id, split = parts
            if split not in SPLITS:
                raise ManifestError(f"{path}:{line_num}: unknown split token {split!r}")
            if image_id in split_of:
                raise ManifestError(f"{path}:{line_num}: duplicate image id {image_id!r}")
            split_of[image_id] = split
    if not split_of:
        raise ManifestError(f"{path}: manifest has no entries")
    return SplitManifest(split_of=split_of, seed=seed, ratios=ratios)


def check_patient_disjoint(records: list[ImageRecord], manifest: SplitManifest) -> None:
    """Raise if any patient's images straddle two splits."""
    patient_splits: dict[str, str] = {}
    for rec in records:
        split = manifest.split_of.get(rec.image_id)
        if split is None:
            continue
        prev = patient_splits.setdefault(rec.patient_id, split)
        if prev != split:
            raise ManifestError(
                f"patient {rec.patient_id!r} appears in both {prev!r} and {split!r}"
            )
