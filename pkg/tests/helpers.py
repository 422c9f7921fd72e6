"""Shared builders for evaluation and fusion tests."""

import numpy as np
import pytest

from streameval.datasets import Dataset, FrameRecord, GtAnnotation
from streameval.fusion import BNSpec, Branch, BranchBlock, ConvSpec
from streameval.geometry import BBox
from streameval.stream import Detection


def build_gt(frame_specs, categories):
    """frame_specs: list of lists of (bbox_xywh, category)."""
    images = []
    annotations = []
    ann_id = 0
    for i, anns in enumerate(frame_specs):
        images.append(
            FrameRecord(
                image_id=i, width=640, height=640, sequence_id=0, frame_index=i, timestamp=i / 30
            )
        )
        for (x, y, w, h), cat in anns:
            box = BBox(x, y, w, h)
            annotations.append(GtAnnotation(ann_id, i, cat, box, box.w * box.h))
            ann_id += 1
    return Dataset(tuple(images), tuple(annotations), categories)


def build_dets(frame_specs):
    """frame_specs: list of lists of (bbox_xywh, category, score)."""
    out = {}
    for i, dets in enumerate(frame_specs):
        out[i] = [
            Detection(i, cat, BBox(x, y, w, h), score) for (x, y, w, h), cat, score in dets
        ]
    return out


def to_oracle_frames(gt: Dataset, dets_by_image):
    frames = []
    for fr in sorted(gt.images, key=lambda f: f.frame_index):
        gts = [
            (a.bbox.as_xywh(), a.category_id, a.area)
            for a in gt.annotations
            if a.image_id == fr.image_id
        ]
        dets = [
            (d.bbox.as_xywh(), d.category_id, d.score)
            for d in dets_by_image.get(fr.image_id, [])
        ]
        frames.append((gts, dets))
    return frames


def random_instance(rng, max_frames=3, max_cats=3, max_gt=5, max_dets=10):
    """Random micro-instance spanning all size strata, with frequent score ties."""
    n_frames = int(rng.integers(1, max_frames + 1))
    n_cats = int(rng.integers(1, max_cats + 1))
    categories = {c: f"class{c}" for c in range(n_cats)}
    total_gt = int(rng.integers(0, max_gt + 1))
    total_det = int(rng.integers(0, max_dets + 1))

    def rand_box():
        side_w = float(rng.uniform(2, 400))
        side_h = float(rng.uniform(2, 400))
        x = float(rng.uniform(0, 640 - side_w))
        y = float(rng.uniform(0, 640 - side_h))
        return (x, y, side_w, side_h)

    gt_specs = [[] for _ in range(n_frames)]
    gt_boxes = []
    for _ in range(total_gt):
        f = int(rng.integers(n_frames))
        box = rand_box()
        gt_specs[f].append((box, int(rng.integers(n_cats))))
        gt_boxes.append((f, box))
    det_specs = [[] for _ in range(n_frames)]
    for _ in range(total_det):
        score = float(rng.integers(1, 100)) / 100.0  # grid scores force ties
        if gt_boxes and rng.random() < 0.7:
            f, (x, y, w, h) = gt_boxes[int(rng.integers(len(gt_boxes)))]
            jitter = rng.uniform(-0.4, 0.4, 4)
            box = (
                x + jitter[0] * w,
                y + jitter[1] * h,
                max(w * (1 + jitter[2]), 1.0),
                max(h * (1 + jitter[3]), 1.0),
            )
        else:
            f = int(rng.integers(n_frames))
            box = rand_box()
        det_specs[f].append((box, int(rng.integers(n_cats)), score))
    return build_gt(gt_specs, categories), build_dets(det_specs)


def rand_conv(rng, cout, cin, k):
    return ConvSpec(rng.standard_normal((cout, cin, k, k)), rng.standard_normal(cout))


def rand_bn(rng, channels):
    return BNSpec(
        gamma=rng.uniform(0.5, 2.0, channels),
        beta=rng.standard_normal(channels),
        mean=rng.standard_normal(channels),
        var=rng.uniform(0.05, 2.0, channels),
    )


def random_block(rng, cin=None, cout=None):
    """Random subset of {3x3, 1x1, identity} branches, BN on a coin flip."""
    cin = cin if cin is not None else int(rng.integers(1, 9))
    cout = cout if cout is not None else int(rng.integers(1, 9))
    kinds = []
    if rng.random() < 0.7:
        kinds.append(3)
    if rng.random() < 0.7:
        kinds.append(1)
    identity = cin == cout and rng.random() < 0.5
    if not kinds and not identity:
        kinds.append(3)
    branches = []
    for k in kinds:
        bn = rand_bn(rng, cout) if rng.random() < 0.5 else None
        branches.append(Branch(rand_conv(rng, cout, cin, k), bn))
    return BranchBlock(
        tuple(branches),
        identity=identity,
        identity_channels=cin if identity and not branches else None,
    )


def assert_matches_oracle(result, oracle, tol=1e-9):
    for key in ("ap", "ap50", "ap75", "ap_small", "ap_medium", "ap_large"):
        assert getattr(result, key) == pytest.approx(oracle[key], abs=tol), key
    for cat, expected in oracle["per_class"].items():
        assert result.per_class[cat] == pytest.approx(expected, abs=tol), f"class {cat}"
    for key, curve in oracle["curves"].items():
        assert np.allclose(result.pr_curves[key], curve, atol=1e-12), f"curve {key}"
