"""Dataset discovery, feature extraction over a corpus, and feature CSV I/O.

Layout: ``<root>/<dataset>/{C,S}/*.{png,jpg,jpeg,tif,tiff}``. Sample ids
are POSIX paths relative to the dataset directory (``"S/img_001.png"``).
"""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import CLASSES, LabeledDataset
from .descriptors import describe
from .imaging import IMAGE_SUFFIXES, apply_chain, load_image

log = logging.getLogger(__name__)

DATASET_NAMES = ("AIA", "TW", "D")

# Published class counts per dataset (sick, control).
PUBLISHED_COUNTS = {"AIA": {"S": 210, "C": 208}, "TW": {"S": 192, "C": 224}, "D": {"S": 290, "C": 224}}


class DatasetError(Exception):
    pass


@dataclass(frozen=True)
class Sample:
    sample_id: str
    label: str
    path: Path


def discover(dataset_dir) -> list[Sample]:
    """All images under C/ and S/, ordered by sample id."""
    dataset_dir = Path(dataset_dir)
    if not dataset_dir.is_dir():
        raise DatasetError(f"dataset directory not found: {dataset_dir}")
    samples = []
    for label in CLASSES:
        folder = dataset_dir / label
        if not folder.is_dir():
            raise DatasetError(f"missing class folder: {folder}")
        files = sorted(p for p in folder.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)
        if not files:
            raise DatasetError(f"empty class folder: {folder}")
        samples.extend(Sample(p.relative_to(dataset_dir).as_posix(), label, p) for p in files)
    samples.sort(key=lambda s: s.sample_id)
    return samples


def class_manifest(samples) -> dict[str, int]:
    counts = {c: 0 for c in CLASSES}
    for s in samples:
        counts[s.label] += 1
    return counts


def extract_features(samples, preprocessing, descriptor: str, params=None, threads: int = 1) -> LabeledDataset:
    """Describe every sample; row order follows ``samples``."""

    def one(sample: Sample) -> np.ndarray:
        img = apply_chain(load_image(sample.path), preprocessing)
        return describe(img, descriptor, params).values

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            rows = list(pool.map(one, samples))
    else:
        rows = [one(s) for s in samples]
    if len({len(r) for r in rows}) > 1:
        raise DatasetError("images produced descriptors of different lengths (mixed channel counts?)")
    return LabeledDataset(np.vstack(rows), [s.label for s in samples], [s.sample_id for s in samples])


def write_features_csv(data: LabeledDataset, path, header_comment: str | None = None):
    path = Path(path)
    with path.open("w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample_id", "label"] + [f"f{i}" for i in range(data.feature_dim)])
        order = sorted(range(len(data)), key=lambda i: data.sample_ids[i])
        labels = data.labels
        for i in order:
            w.writerow([data.sample_ids[i], labels[i]] + [repr(float(v)) for v in data.X[i]])


def _data_lines(fh):
    for line in fh:
        if not line.startswith("#"):
            yield line


def read_features_csv(path) -> LabeledDataset:
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"feature file not found: {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(_data_lines(fh))
        header = next(reader, None)
        if not header or header[:2] != ["sample_id", "label"]:
            raise DatasetError(f"{path}: expected header sample_id,label,f0..")
        ids, labels, rows = [], [], []
        for rec in reader:
            if not rec:
                continue
            ids.append(rec[0])
            labels.append(rec[1])
            rows.append([float(v) for v in rec[2:]])
    if not rows:
        raise DatasetError(f"{path}: no samples")
    return LabeledDataset(np.array(rows, dtype=np.float64), labels, ids)
