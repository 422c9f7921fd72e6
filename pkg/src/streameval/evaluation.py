"""COCO-style average precision over (ground-truth frame, prediction) pairs.

Two pairing modes share one scorer: offline pairs each frame with its own
detections; streaming pairs each frame with the newest prediction snapshot
emitted at or before the frame's timestamp (closed boundary, which makes
the zero-latency case coincide with offline pairing exactly).

The scorer follows the reference COCO evaluator: score-descending stable
ordering, greedy highest-IoU matching at each of the 10 thresholds,
monotone precision envelope sampled at 101 recall points, size strata with
ignore semantics (a detection matched to an out-of-stratum ground truth
neither counts nor penalizes; an unmatched detection whose own size falls
outside the stratum is likewise ignored). AP values are reported on a
0-100 scale, with -1 as the no-ground-truth sentinel.
"""

from __future__ import annotations

import json
from bisect import bisect_right
from dataclasses import dataclass, replace
from typing import Any, Mapping, Sequence

import numpy as np

from . import kernels
from .datasets import Dataset, FrameRecord, GtAnnotation
from .errors import InputError, IntegrityError
from .geometry import SizeClass, area_class
from .stream import Detection, PredictionTimeline, frame_time

DEFAULT_IOU_THRESHOLDS = (0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95)
STRATA = ("all", "small", "medium", "large")
_STRATUM_CLASS = {
    "small": SizeClass.SMALL,
    "medium": SizeClass.MEDIUM,
    "large": SizeClass.LARGE,
}
NO_GT_SENTINEL = -1.0


@dataclass(frozen=True)
class EvalConfig:
    iou_thresholds: tuple[float, ...] = DEFAULT_IOU_THRESHOLDS
    recall_point_count: int = 101
    max_dets: int = 100

    def __post_init__(self):
        if self.max_dets < 1:
            raise InputError(f"max_dets must be >= 1, got {self.max_dets}")
        if self.recall_point_count < 2:
            raise InputError("need at least two recall points")
        thrs = self.iou_thresholds
        if not thrs or any(not 0.0 < t <= 1.0 for t in thrs):
            raise InputError("iou thresholds must lie in (0, 1]")
        if any(b <= a for a, b in zip(thrs, thrs[1:])):
            raise InputError("iou thresholds must be strictly increasing")

    def recall_points(self) -> np.ndarray:
        n = self.recall_point_count
        return np.arange(n, dtype=np.float64) / (n - 1)


@dataclass(frozen=True)
class FramePair:
    frame: FrameRecord
    gt: tuple[GtAnnotation, ...]
    detections: tuple[Detection, ...]


@dataclass(frozen=True)
class PairSet:
    pairs: tuple[FramePair, ...]
    categories: dict[Any, str]


@dataclass(frozen=True)
class EvalResult:
    ap: float
    ap50: float
    ap75: float
    ap_small: float
    ap_medium: float
    ap_large: float
    per_class: dict[Any, float]
    pr_curves: dict[tuple[Any, float], np.ndarray]

    def to_jsonable(self) -> dict[str, Any]:
        return {
            "ap": self.ap,
            "ap50": self.ap50,
            "ap75": self.ap75,
            "ap_small": self.ap_small,
            "ap_medium": self.ap_medium,
            "ap_large": self.ap_large,
            "per_class": {str(k): v for k, v in sorted(self.per_class.items(), key=lambda kv: str(kv[0]))},
        }


def _frame_order_key(frame: FrameRecord, position: int):
    idx = frame.frame_index if frame.frame_index is not None else position
    return (str(frame.sequence_id), idx, position)


def _ordered_frames(gt: Dataset) -> list[FrameRecord]:
    return [
        fr
        for _, fr in sorted(
            ((_frame_order_key(fr, i), fr) for i, fr in enumerate(gt.images)),
            key=lambda kv: kv[0],
        )
    ]


def pair_offline(gt: Dataset, dets: Mapping[Any, Sequence[Detection]]) -> PairSet:
    """One pair per frame, detections taken from the frame itself."""
    by_img = gt.annotations_by_image()
    pairs = tuple(
        FramePair(
            frame=fr,
            gt=tuple(by_img[fr.image_id]),
            detections=tuple(dets.get(fr.image_id, ())),
        )
        for fr in _ordered_frames(gt)
    )
    return PairSet(pairs, dict(gt.categories))


def _frame_timestamp(frame: FrameRecord, position: int, fps: float) -> float:
    if frame.timestamp is not None:
        return frame.timestamp
    idx = frame.frame_index if frame.frame_index is not None else position
    return frame_time(idx, fps)


def pair_streaming(gt: Dataset, timeline: PredictionTimeline) -> PairSet:
    """Pair each frame with the newest snapshot emitted at or before it.

    Ties on emission time resolve to the newest source frame; a frame that
    precedes every emission gets an empty detection set. Paired detections
    are re-attributed to the query frame before scoring (no motion
    compensation: staleness is scored as-is).
    """
    snaps = sorted(
        enumerate(timeline.snapshots), key=lambda kv: (kv[1].emission_time, kv[0])
    )
    emissions = [s.emission_time for _, s in snaps]
    by_img = gt.annotations_by_image()
    pairs = []
    for pos, fr in enumerate(_ordered_frames(gt)):
        t = _frame_timestamp(fr, pos, timeline.config.fps)
        i = bisect_right(emissions, t) - 1
        if i < 0:
            dets: tuple[Detection, ...] = ()
        else:
            dets = tuple(
                replace(d, image_id=fr.image_id) for d in snaps[i][1].detections
            )
        pairs.append(FramePair(frame=fr, gt=tuple(by_img[fr.image_id]), detections=dets))
    return PairSet(tuple(pairs), dict(gt.categories))


def _sorted_category_ids(categories: Mapping[Any, str]) -> list:
    try:
        return sorted(categories)
    except TypeError:
        return sorted(categories, key=str)


class _Accumulator:
    """Per (category, stratum) detection ledger across all frames."""

    __slots__ = ("scores", "tp", "ignored", "npig")

    def __init__(self, nthr: int):
        self.scores: list[float] = []
        self.tp: list[list[bool]] = [[] for _ in range(nthr)]
        self.ignored: list[list[bool]] = [[] for _ in range(nthr)]
        self.npig = 0


def coco_ap(pairset: PairSet, cfg: EvalConfig | None = None) -> EvalResult:
    """Average precision over the given pairs, per the reference semantics."""
    if cfg is None:
        cfg = EvalConfig()
    thrs = np.asarray(cfg.iou_thresholds, dtype=np.float64)
    nthr = thrs.shape[0]
    cat_ids = _sorted_category_ids(pairset.categories)
    known = set(cat_ids)

    acc: dict[tuple[Any, str], _Accumulator] = {
        (cat, stratum): _Accumulator(nthr) for cat in cat_ids for stratum in STRATA
    }

    for pair in pairset.pairs:
        for det in pair.detections:
            if det.category_id not in known:
                raise IntegrityError(
                    f"detection on image {pair.frame.image_id!r} has unknown "
                    f"category {det.category_id!r}"
                )
        gts_by_cat: dict[Any, list[GtAnnotation]] = {}
        for ann in pair.gt:
            gts_by_cat.setdefault(ann.category_id, []).append(ann)
        dets_by_cat: dict[Any, list[Detection]] = {}
        for det in pair.detections:
            dets_by_cat.setdefault(det.category_id, []).append(det)

        for cat in cat_ids:
            gts = gts_by_cat.get(cat, [])
            dets = dets_by_cat.get(cat, [])
            if not gts and not dets:
                continue
            order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, i))
            order = order[: cfg.max_dets]
            dets = [dets[i] for i in order]
            det_boxes = np.array([d.bbox.as_xywh() for d in dets], dtype=np.float64)
            gt_boxes = np.array([g.bbox.as_xywh() for g in gts], dtype=np.float64)
            if dets and gts:
                ious = kernels.pairwise_iou(det_boxes, gt_boxes)
            else:
                ious = np.zeros((len(dets), len(gts)), dtype=np.float64)

            for stratum in STRATA:
                a = acc[(cat, stratum)]
                if stratum == "all":
                    gt_ig = [False] * len(gts)
                else:
                    want = _STRATUM_CLASS[stratum]
                    gt_ig = [area_class(g.area) is not want for g in gts]
                gt_order = sorted(range(len(gts)), key=lambda g: gt_ig[g])
                ig_sorted = np.array([gt_ig[g] for g in gt_order], dtype=np.int8)
                a.npig += sum(1 for v in gt_ig if not v)
                if not dets:
                    continue
                ious_sorted = ious[:, gt_order] if gts else ious
                det_match, _ = kernels.greedy_match(ious_sorted, thrs, ig_sorted)
                for t in range(nthr):
                    for d, det in enumerate(dets):
                        m = det_match[t, d]
                        if m >= 0:
                            matched_ignored = bool(ig_sorted[m])
                            a.tp[t].append(not matched_ignored)
                            a.ignored[t].append(matched_ignored)
                        else:
                            a.tp[t].append(False)
                            if stratum == "all":
                                a.ignored[t].append(False)
                            else:
                                det_cls = area_class(det.bbox.w * det.bbox.h)
                                a.ignored[t].append(det_cls is not _STRATUM_CLASS[stratum])
                a.scores.extend(d.score for d in dets)

    recall_points = cfg.recall_points()
    nrp = recall_points.shape[0]
    # ap_per[(cat, stratum)] -> (nthr,) AP fractions, or None without gt
    ap_per: dict[tuple[Any, str], np.ndarray | None] = {}
    pr_curves: dict[tuple[Any, float], np.ndarray] = {}

    for (cat, stratum), a in acc.items():
        if a.npig == 0:
            ap_per[(cat, stratum)] = None
            continue
        scores = np.asarray(a.scores, dtype=np.float64)
        order = np.argsort(-scores, kind="mergesort")
        aps = np.zeros(nthr, dtype=np.float64)
        for t in range(nthr):
            tp_flags = np.asarray(a.tp[t], dtype=bool)[order]
            ig_flags = np.asarray(a.ignored[t], dtype=bool)[order]
            keep = ~ig_flags
            tp_cum = np.cumsum(tp_flags[keep].astype(np.float64))
            fp_cum = np.cumsum((~tp_flags[keep]).astype(np.float64))
            nd = tp_cum.shape[0]
            q = np.zeros(nrp, dtype=np.float64)
            if nd:
                rc = tp_cum / a.npig
                pr = tp_cum / (tp_cum + fp_cum)
                for i in range(nd - 1, 0, -1):
                    if pr[i] > pr[i - 1]:
                        pr[i - 1] = pr[i]
                inds = np.searchsorted(rc, recall_points, side="left")
                valid = inds < nd
                q[valid] = pr[inds[valid]]
            aps[t] = float(np.mean(q))
            if stratum == "all":
                pr_curves[(cat, float(thrs[t]))] = q
        ap_per[(cat, stratum)] = aps

    def stratum_mean(stratum: str, t_index: int | None = None) -> float:
        vals = []
        for cat in cat_ids:
            aps = ap_per[(cat, stratum)]
            if aps is None:
                continue
            vals.append(aps if t_index is None else aps[t_index : t_index + 1])
        if not vals:
            return NO_GT_SENTINEL
        return float(np.mean(np.concatenate(vals))) * 100.0

    def threshold_index(value: float) -> int | None:
        for i, t in enumerate(cfg.iou_thresholds):
            if t == value:
                return i
        return None

    i50 = threshold_index(0.50)
    i75 = threshold_index(0.75)
    per_class = {}
    for cat in cat_ids:
        aps = ap_per[(cat, "all")]
        per_class[cat] = NO_GT_SENTINEL if aps is None else float(np.mean(aps)) * 100.0

    return EvalResult(
        ap=stratum_mean("all"),
        ap50=stratum_mean("all", i50) if i50 is not None else NO_GT_SENTINEL,
        ap75=stratum_mean("all", i75) if i75 is not None else NO_GT_SENTINEL,
        ap_small=stratum_mean("small"),
        ap_medium=stratum_mean("medium"),
        ap_large=stratum_mean("large"),
        per_class=per_class,
        pr_curves=pr_curves,
    )


def streaming_ap(
    gt: Dataset, timeline: PredictionTimeline, cfg: EvalConfig | None = None
) -> EvalResult:
    return coco_ap(pair_streaming(gt, timeline), cfg)


def offline_ap(
    gt: Dataset, dets: Mapping[Any, Sequence[Detection]], cfg: EvalConfig | None = None
) -> EvalResult:
    return coco_ap(pair_offline(gt, dets), cfg)


def write_report(
    path,
    mode: str,
    result: EvalResult,
    config_echo: Mapping[str, Any],
    timing: Mapping[str, float],
) -> None:
    """Emit the run report; `timing` is outside the determinism contract."""
    doc = {"mode": mode, **result.to_jsonable()}
    doc["config_echo"] = dict(config_echo)
    doc["timing"] = dict(timing)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_pr_csv(path, result: EvalResult, cfg: EvalConfig | None = None) -> None:
    """Plot-ready PR curves: one row per (category, threshold, recall point)."""
    if cfg is None:
        cfg = EvalConfig()
    recall_points = cfg.recall_points()
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("category_id,iou_threshold,recall,precision\n")
        for (cat, thr), curve in sorted(
            result.pr_curves.items(), key=lambda kv: (str(kv[0][0]), kv[0][1])
        ):
            for r, p in zip(recall_points, curve):
                fh.write(f"{cat},{thr},{r},{p}\n")
