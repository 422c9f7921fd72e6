"""COCO-format dataset handling: loading, merging, subsampling, class
statistics, resampling weights, and anchor clustering.

The on-disk format is COCO-style JSON with three top-level arrays:

* ``images``: ``{id, file_name, width, height, sid, fid}`` where ``sid``
  (sequence id) and ``fid`` (frame index within the sequence) are optional
  for non-stream datasets; a ``timestamp`` key is honored when present.
* ``annotations``: ``{id, image_id, category_id, bbox: [x, y, w, h], area}``.
* ``categories``: ``{id, name}``.

Class-map files used by :func:`merge` are JSON arrays of
``{source, from_id, to_id}`` records.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, replace
from typing import Any, Mapping, Sequence

import numpy as np

from .errors import InputError, IntegrityError
from .geometry import BBox

# Canonical unified category table used when merging multi-source data:
# the eight driving-scene classes, alphabetical, ids 0-7.
ARGOVERSE_CATEGORIES: dict[int, str] = {
    0: "bicycle",
    1: "bus",
    2: "car",
    3: "motorcycle",
    4: "person",
    5: "stop sign",
    6: "traffic light",
    7: "truck",
}


@dataclass(frozen=True)
class FrameRecord:
    image_id: Any
    width: int
    height: int
    sequence_id: Any = 0
    frame_index: int | None = None
    timestamp: float | None = None
    file_name: str | None = None

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise InputError(f"image {self.image_id!r}: nonpositive dimensions")
        if self.frame_index is not None and self.frame_index < 0:
            raise InputError(f"image {self.image_id!r}: negative frame index")


@dataclass(frozen=True)
class GtAnnotation:
    ann_id: Any
    image_id: Any
    category_id: Any
    bbox: BBox
    area: float


@dataclass(frozen=True)
class Dataset:
    images: tuple[FrameRecord, ...]
    annotations: tuple[GtAnnotation, ...]
    categories: dict[Any, str]

    def __post_init__(self):
        seen = set()
        for img in self.images:
            if img.image_id in seen:
                raise IntegrityError(f"duplicate image id {img.image_id!r}")
            seen.add(img.image_id)
        for ann in self.annotations:
            if ann.image_id not in seen:
                raise IntegrityError(
                    f"annotation {ann.ann_id!r} references unknown image {ann.image_id!r}"
                )
            if ann.category_id not in self.categories:
                raise IntegrityError(
                    f"annotation {ann.ann_id!r} references unknown category {ann.category_id!r}"
                )

    def annotations_by_image(self) -> dict[Any, list[GtAnnotation]]:
        by_img: dict[Any, list[GtAnnotation]] = {img.image_id: [] for img in self.images}
        for ann in self.annotations:
            by_img[ann.image_id].append(ann)
        return by_img


@dataclass(frozen=True)
class ClassHistogram:
    counts: dict[Any, int]

    @property
    def total(self) -> int:
        return sum(self.counts.values())


@dataclass(frozen=True)
class AnchorSet:
    """Prior box sizes, sorted by area ascending."""

    anchors: tuple[tuple[float, float], ...]

    def __post_init__(self):
        for w, h in self.anchors:
            if w <= 0 or h <= 0:
                raise InputError("anchor dimensions must be positive")
        areas = [w * h for w, h in self.anchors]
        if areas != sorted(areas):
            raise InputError("anchors must be sorted by area ascending")


def _clip_bbox(raw, width: int, height: int) -> BBox:
    x, y, w, h = (float(v) for v in raw)
    if w < 0 or h < 0:
        raise InputError(f"negative bbox extent in {raw!r}")
    x1 = min(max(x, 0.0), float(width))
    y1 = min(max(y, 0.0), float(height))
    x2 = min(max(x + w, 0.0), float(width))
    y2 = min(max(y + h, 0.0), float(height))
    return BBox(x1, y1, x2 - x1, y2 - y1)


def dataset_from_coco_dict(doc: Mapping[str, Any]) -> Dataset:
    """Build a validated Dataset from a parsed COCO-style dict."""
    try:
        raw_images = doc["images"]
        raw_annotations = doc.get("annotations", [])
        raw_categories = doc["categories"]
    except (KeyError, TypeError) as exc:
        raise InputError(f"missing COCO section: {exc}") from exc

    categories: dict[Any, str] = {}
    for cat in raw_categories:
        try:
            categories[cat["id"]] = str(cat["name"])
        except (KeyError, TypeError) as exc:
            raise InputError(f"malformed category record {cat!r}") from exc

    images = []
    dims: dict[Any, tuple[int, int]] = {}
    for img in raw_images:
        try:
            rec = FrameRecord(
                image_id=img["id"],
                width=int(img["width"]),
                height=int(img["height"]),
                sequence_id=img.get("sid", 0),
                frame_index=int(img["fid"]) if "fid" in img else None,
                timestamp=float(img["timestamp"]) if "timestamp" in img else None,
                file_name=img.get("file_name"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"malformed image record {img!r}") from exc
        images.append(rec)
        dims[rec.image_id] = (rec.width, rec.height)

    annotations = []
    for ann in raw_annotations:
        try:
            ann_id = ann["id"]
            image_id = ann["image_id"]
            category_id = ann["category_id"]
            raw_bbox = ann["bbox"]
        except (KeyError, TypeError) as exc:
            raise InputError(f"malformed annotation record {ann!r}") from exc
        if image_id not in dims:
            raise IntegrityError(
                f"annotation {ann_id!r} references unknown image {image_id!r}"
            )
        if len(raw_bbox) != 4:
            raise InputError(f"annotation {ann_id!r}: bbox must have 4 entries")
        bbox = _clip_bbox(raw_bbox, *dims[image_id])
        ann_area = float(ann["area"]) if "area" in ann else bbox.w * bbox.h
        annotations.append(
            GtAnnotation(
                ann_id=ann_id,
                image_id=image_id,
                category_id=category_id,
                bbox=bbox,
                area=ann_area,
            )
        )

    return Dataset(tuple(images), tuple(annotations), categories)


def load_coco(path) -> Dataset:
    """Load and validate a COCO-style JSON file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"invalid JSON in {path}: {exc}") from exc
    return dataset_from_coco_dict(doc)


def dataset_to_coco_dict(d: Dataset) -> dict[str, Any]:
    images = []
    for img in d.images:
        rec: dict[str, Any] = {
            "id": img.image_id,
            "width": img.width,
            "height": img.height,
        }
        if img.file_name is not None:
            rec["file_name"] = img.file_name
        if img.sequence_id != 0:
            rec["sid"] = img.sequence_id
        if img.frame_index is not None:
            rec["fid"] = img.frame_index
        if img.timestamp is not None:
            rec["timestamp"] = img.timestamp
        images.append(rec)
    annotations = [
        {
            "id": a.ann_id,
            "image_id": a.image_id,
            "category_id": a.category_id,
            "bbox": list(a.bbox.as_xywh()),
            "area": a.area,
        }
        for a in d.annotations
    ]
    categories = [{"id": cid, "name": name} for cid, name in sorted(d.categories.items(), key=lambda kv: str(kv[0]))]
    return {"images": images, "annotations": annotations, "categories": categories}


def subsample_stride(d: Dataset, stride: int) -> Dataset:
    """Keep frames whose frame_index is a multiple of ``stride``, per sequence."""
    if stride < 1:
        raise InputError(f"stride must be >= 1, got {stride}")
    for img in d.images:
        if img.frame_index is None:
            raise InputError(f"image {img.image_id!r} has no frame index; cannot subsample")
    kept_images = tuple(img for img in d.images if img.frame_index % stride == 0)
    kept_ids = {img.image_id for img in kept_images}
    kept_annotations = tuple(a for a in d.annotations if a.image_id in kept_ids)
    return Dataset(kept_images, kept_annotations, dict(d.categories))


def load_class_map(path) -> dict[tuple[str, Any], Any]:
    """Read a class-map file: JSON array of {source, from_id, to_id}."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            entries = json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"invalid JSON in {path}: {exc}") from exc
    mapping: dict[tuple[str, Any], Any] = {}
    try:
        for entry in entries:
            mapping[(entry["source"], entry["from_id"])] = entry["to_id"]
    except (KeyError, TypeError) as exc:
        raise InputError(f"malformed class-map entry: {exc}") from exc
    return mapping


def merge(
    parts: Sequence[tuple[str, Dataset]],
    class_map: Mapping[tuple[str, Any], Any],
    categories: Mapping[Any, str] = ARGOVERSE_CATEGORIES,
) -> Dataset:
    """Combine datasets under namespaced ids and a unified category table.

    Image, annotation, and sequence ids are prefixed with the source name,
    so merged parts can never collide; every annotated category of every
    part must be covered by ``class_map``.
    """
    seen_sources = set()
    images: list[FrameRecord] = []
    annotations: list[GtAnnotation] = []
    unified = dict(categories)
    for source, part in parts:
        if source in seen_sources:
            raise IntegrityError(f"duplicate source namespace {source!r}")
        seen_sources.add(source)
        for img in part.images:
            images.append(
                replace(
                    img,
                    image_id=f"{source}:{img.image_id}",
                    sequence_id=f"{source}:{img.sequence_id}",
                )
            )
        for ann in part.annotations:
            key = (source, ann.category_id)
            if key not in class_map:
                raise InputError(
                    f"class map does not cover category {ann.category_id!r} of source {source!r}"
                )
            to_id = class_map[key]
            if to_id not in unified:
                raise InputError(f"class map targets unknown unified category {to_id!r}")
            annotations.append(
                replace(
                    ann,
                    ann_id=f"{source}:{ann.ann_id}",
                    image_id=f"{source}:{ann.image_id}",
                    category_id=to_id,
                )
            )
    return Dataset(tuple(images), tuple(annotations), unified)


def class_histogram(d: Dataset) -> ClassHistogram:
    """Annotation counts per category; categories without annotations count 0."""
    counts = Counter(a.category_id for a in d.annotations)
    return ClassHistogram({cid: counts.get(cid, 0) for cid in d.categories})


def inverse_freq_sample_weights(h: ClassHistogram) -> dict[Any, float]:
    """Per-class sampling proportions inversely proportional to class counts."""
    for cid, n in h.counts.items():
        if n <= 0:
            raise InputError(f"category {cid!r} has zero count; inverse weight undefined")
    inv = {cid: 1.0 / n for cid, n in h.counts.items()}
    total = sum(inv.values())
    return {cid: v / total for cid, v in inv.items()}


def class_loss_weights(h: ClassHistogram) -> dict[Any, float]:
    """Loss weights N / (C * n_c), equalizing each class's total contribution."""
    for cid, n in h.counts.items():
        if n <= 0:
            raise InputError(f"category {cid!r} has zero count; loss weight undefined")
    n_total = h.total
    n_classes = len(h.counts)
    return {cid: n_total / (n_classes * n) for cid, n in h.counts.items()}


def image_sample_weights(d: Dataset, class_weights: Mapping[Any, float]) -> dict[Any, float]:
    """Per-image sampling weight: sum of the image's annotation class weights."""
    weights = {img.image_id: 0.0 for img in d.images}
    for ann in d.annotations:
        weights[ann.image_id] += class_weights[ann.category_id]
    return weights


def _wh_iou_matrix(sizes: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # Concentric IoU: boxes share a corner, so overlap = min(w)*min(h).
    inter = np.minimum(sizes[:, None, 0], centroids[None, :, 0]) * np.minimum(
        sizes[:, None, 1], centroids[None, :, 1]
    )
    union = (
        sizes[:, None, 0] * sizes[:, None, 1]
        + centroids[None, :, 0] * centroids[None, :, 1]
        - inter
    )
    return inter / union


def anchor_objective(sizes: np.ndarray, centroids: np.ndarray) -> float:
    """Mean (1 - IoU) of each box to its nearest centroid."""
    d = 1.0 - _wh_iou_matrix(sizes, centroids)
    return float(np.mean(np.min(d, axis=1)))


def _cluster_sizes(sizes: np.ndarray, k: int, seed: int) -> tuple[np.ndarray, list[float]]:
    distinct = np.unique(sizes, axis=0)
    if k > distinct.shape[0]:
        raise InputError(
            f"k={k} exceeds the {distinct.shape[0]} distinct (w, h) pairs available"
        )

    rng = np.random.default_rng(seed)
    chosen = [int(rng.integers(distinct.shape[0]))]
    while len(chosen) < k:
        d = 1.0 - _wh_iou_matrix(distinct, distinct[chosen])
        nearest = np.min(d, axis=1)
        nearest[chosen] = -1.0  # already selected
        chosen.append(int(np.argmax(nearest)))
    centroids = distinct[chosen].copy()

    history = [anchor_objective(sizes, centroids)]
    assign = None
    for _ in range(100):
        d = 1.0 - _wh_iou_matrix(sizes, centroids)
        new_assign = np.argmin(d, axis=1)
        if assign is not None and np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for c in range(k):
            members = sizes[assign == c]
            if members.shape[0] == 0:
                continue
            candidates = np.unique(members, axis=0)
            cost = np.sum(1.0 - _wh_iou_matrix(members, candidates), axis=0)
            centroids[c] = candidates[int(np.argmin(cost))]
        history.append(anchor_objective(sizes, centroids))
    return centroids, history


def cluster_anchors(
    boxes: Sequence[BBox] | np.ndarray, k: int, seed: int, objective_trace: list | None = None
) -> AnchorSet:
    """Cluster box sizes under the 1-IoU distance with concentric boxes.

    Seeding is deterministic: the given seed picks the first centroid among
    the distinct sizes, then farthest-point selection fills the rest.
    Updates are medoid steps (the cluster member minimizing within-cluster
    distance), which keeps the objective non-increasing per iteration; the
    per-iteration objective is appended to ``objective_trace`` when given.
    """
    if k < 1:
        raise InputError(f"k must be >= 1, got {k}")
    if isinstance(boxes, np.ndarray):
        sizes = np.asarray(boxes, dtype=np.float64).reshape(-1, 2)
    else:
        sizes = np.array([[b.w, b.h] for b in boxes], dtype=np.float64)
    if sizes.size == 0:
        raise InputError("no boxes to cluster")
    if np.any(sizes <= 0):
        raise InputError("all boxes must have positive width and height")

    centroids, history = _cluster_sizes(sizes, k, seed)
    if objective_trace is not None:
        objective_trace.extend(history)

    order = np.argsort(centroids[:, 0] * centroids[:, 1], kind="stable")
    anchors = tuple((float(w), float(h)) for w, h in centroids[order])
    return AnchorSet(anchors)
