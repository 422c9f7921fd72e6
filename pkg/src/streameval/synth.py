"""Synthetic stream scenarios: linear-motion objects with perfect and
degraded per-frame detections, written in the same COCO/results formats
the evaluator consumes."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from .datasets import ARGOVERSE_CATEGORIES, Dataset, FrameRecord, GtAnnotation
from .errors import InputError
from .geometry import BBox
from .stream import Detection, detections_to_jsonable


@dataclass(frozen=True)
class ObjectTrack:
    """One object: an initial box moving at constant per-frame velocity."""

    category_id: int
    x0: float
    y0: float
    w: float
    h: float
    vx: float
    vy: float

    def box_at(self, frame_index: int) -> BBox:
        return BBox(self.x0 + self.vx * frame_index, self.y0 + self.vy * frame_index, self.w, self.h)


@dataclass
class Scenario:
    gt: Dataset
    perfect_dets: dict[Any, list[Detection]]
    degraded_dets: dict[Any, list[Detection]]
    tracks: tuple[ObjectTrack, ...]
    fps: float
    seed: int


def _sample_track(
    rng: np.random.Generator,
    width: int,
    height: int,
    frames: int,
    vel_max: float,
) -> tuple[float, float, float, float, float, float]:
    w = float(rng.uniform(12.0, min(400.0, width / 3)))
    h = float(rng.uniform(12.0, min(400.0, height / 3)))
    x0 = float(rng.uniform(0.0, width - w))
    y0 = float(rng.uniform(0.0, height - h))
    span = max(frames - 1, 1)
    # Velocity clamped so the box never leaves the frame over the run.
    vx_lo = max(-vel_max, -x0 / span)
    vx_hi = min(vel_max, (width - w - x0) / span)
    vy_lo = max(-vel_max, -y0 / span)
    vy_hi = min(vel_max, (height - h - y0) / span)
    vx = float(rng.uniform(vx_lo, vx_hi)) if vel_max > 0 else 0.0
    vy = float(rng.uniform(vy_lo, vy_hi)) if vel_max > 0 else 0.0
    return x0, y0, w, h, vx, vy


def generate_scenario(
    objects: int,
    frames: int,
    fps: float = 30.0,
    vel_max: float = 5.0,
    seed: int = 0,
    width: int = 1920,
    height: int = 1200,
    tracks: tuple[ObjectTrack, ...] | None = None,
) -> Scenario:
    """Build a deterministic scenario; pass explicit tracks to pin motion."""
    if frames < 1:
        raise InputError(f"frame count must be >= 1, got {frames}")
    if objects < 0:
        raise InputError(f"object count must be >= 0, got {objects}")
    rng = np.random.default_rng([seed, 0])
    if tracks is None:
        cat_ids = sorted(ARGOVERSE_CATEGORIES)
        built = []
        for _ in range(objects):
            cat = int(cat_ids[rng.integers(len(cat_ids))])
            built.append(ObjectTrack(cat, *_sample_track(rng, width, height, frames, vel_max)))
        tracks = tuple(built)

    images = []
    annotations = []
    perfect: dict[Any, list[Detection]] = {}
    ann_id = 0
    for i in range(frames):
        image_id = i
        images.append(
            FrameRecord(
                image_id=image_id,
                width=width,
                height=height,
                sequence_id=0,
                frame_index=i,
                timestamp=i / fps,
                file_name=f"frame_{i:06d}.jpg",
            )
        )
        dets = []
        for track in tracks:
            box = track.box_at(i)
            annotations.append(
                GtAnnotation(
                    ann_id=ann_id,
                    image_id=image_id,
                    category_id=track.category_id,
                    bbox=box,
                    area=box.w * box.h,
                )
            )
            ann_id += 1
            dets.append(
                Detection(image_id=image_id, category_id=track.category_id, bbox=box, score=1.0)
            )
        perfect[image_id] = dets

    gt = Dataset(tuple(images), tuple(annotations), dict(ARGOVERSE_CATEGORIES))
    degraded = _degrade(perfect, rng=np.random.default_rng([seed, 1]), width=width, height=height)
    return Scenario(
        gt=gt,
        perfect_dets=perfect,
        degraded_dets=degraded,
        tracks=tracks,
        fps=fps,
        seed=seed,
    )


def _degrade(
    perfect: dict[Any, list[Detection]],
    rng: np.random.Generator,
    width: int,
    height: int,
    drop_prob: float = 0.1,
    spurious_prob: float = 0.15,
    jitter_px: float = 3.0,
) -> dict[Any, list[Detection]]:
    """Noisy variant: jittered boxes, shuffled scores, drops, false positives."""
    cat_ids = sorted(ARGOVERSE_CATEGORIES)
    degraded: dict[Any, list[Detection]] = {}
    for image_id, dets in perfect.items():
        out = []
        for det in dets:
            if rng.random() < drop_prob:
                continue
            dx, dy = rng.normal(0.0, jitter_px, size=2)
            dw, dh = rng.normal(0.0, jitter_px / 2, size=2)
            b = det.bbox
            nw = min(max(b.w + dw, 2.0), width)
            nh = min(max(b.h + dh, 2.0), height)
            nx = min(max(b.x + dx, 0.0), width - nw)
            ny = min(max(b.y + dy, 0.0), height - nh)
            score = round(float(rng.uniform(0.3, 1.0)), 2)
            out.append(
                Detection(
                    image_id=image_id,
                    category_id=det.category_id,
                    bbox=BBox(nx, ny, nw, nh),
                    score=score,
                )
            )
        if rng.random() < spurious_prob:
            w = float(rng.uniform(10.0, 120.0))
            h = float(rng.uniform(10.0, 120.0))
            x = float(rng.uniform(0.0, width - w))
            y = float(rng.uniform(0.0, height - h))
            cat = int(cat_ids[rng.integers(len(cat_ids))])
            score = round(float(rng.uniform(0.3, 0.9)), 2)
            out.append(
                Detection(image_id=image_id, category_id=cat, bbox=BBox(x, y, w, h), score=score)
            )
        degraded[image_id] = out
    return degraded


def write_scenario(scenario: Scenario, out_dir) -> dict[str, Path]:
    """Write gt/detections/meta files; returns the written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    from .datasets import dataset_to_coco_dict

    paths = {
        "gt": out / "gt.json",
        "perfect": out / "perfect_dets.json",
        "degraded": out / "degraded_dets.json",
        "meta": out / "meta.json",
    }
    with open(paths["gt"], "w", encoding="utf-8") as fh:
        json.dump(dataset_to_coco_dict(scenario.gt), fh, indent=2, sort_keys=True)
        fh.write("\n")
    for key, dets in (("perfect", scenario.perfect_dets), ("degraded", scenario.degraded_dets)):
        flat = []
        for image_id in sorted(dets):
            flat.extend(detections_to_jsonable(dets[image_id]))
        with open(paths[key], "w", encoding="utf-8") as fh:
            json.dump(flat, fh, indent=2, sort_keys=True)
            fh.write("\n")
    meta = {
        "seed": scenario.seed,
        "fps": scenario.fps,
        "objects": [
            {
                "category_id": t.category_id,
                "x0": t.x0,
                "y0": t.y0,
                "w": t.w,
                "h": t.h,
                "vx": t.vx,
                "vy": t.vy,
            }
            for t in scenario.tracks
        ],
    }
    with open(paths["meta"], "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return paths
