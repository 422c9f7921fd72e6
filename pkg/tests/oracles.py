"""Independent brute-force re-implementations used as test oracles.

Everything here is deliberately plain Python (lists, dicts, bisect) and
shares no code with the package: exhaustive greedy matching, running-sum
PR curves, linear-scan streaming pairing, and exhaustive medoid search for
anchor clustering.
"""

from bisect import bisect_left
from itertools import combinations

IOU_THRS = [x / 100 for x in range(50, 100, 5)]
RECALL_POINTS = [i / 100 for i in range(101)]
STRATA = ["all", "small", "medium", "large"]


def iou_xywh(a, b):
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    iw = max(min(ax + aw, bx + bw) - max(ax, bx), 0.0)
    ih = max(min(ay + ah, by + bh) - max(ay, by), 0.0)
    inter = iw * ih
    union = aw * ah + bw * bh - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def size_name(area):
    if area < 1024.0:
        return "small"
    if area < 9216.0:
        return "medium"
    return "large"


def brute_force_ap(frames, cat_ids, max_dets=100):
    """Exhaustive AP for a list of frames.

    ``frames`` is a list of ``(gts, dets)`` where each gt is
    ``(bbox_xywh, category, area)`` and each detection is
    ``(bbox_xywh, category, score)``. Returns a dict with the same summary
    fields the evaluator reports (0-100 scale, -1 sentinel) plus the
    per-(category, threshold) precision curves for the unrestricted
    stratum.
    """
    ap_table = {}  # (cat, stratum) -> list of per-threshold APs, or None
    curves = {}

    for cat in cat_ids:
        for stratum in STRATA:
            npig = 0
            scores = []
            tp_flags = [[] for _ in IOU_THRS]
            ig_flags = [[] for _ in IOU_THRS]

            for gts, dets in frames:
                g = [(box, area) for box, c, area in gts if c == cat]
                d = sorted(
                    [(box, score) for box, c, score in dets if c == cat],
                    key=lambda r: -r[1],
                )[:max_dets]
                gig = [
                    stratum != "all" and size_name(area) != stratum for _, area in g
                ]
                gorder = sorted(range(len(g)), key=lambda i: gig[i])
                npig += sum(1 for v in gig if not v)

                for ti, thr in enumerate(IOU_THRS):
                    matched = set()
                    for box, score in d:
                        best = -1
                        best_iou = thr
                        for gi in gorder:
                            if gi in matched:
                                continue
                            if best >= 0 and not gig[best] and gig[gi]:
                                break
                            v = iou_xywh(box, g[gi][0])
                            if v < best_iou:
                                continue
                            best_iou = v
                            best = gi
                        if best >= 0:
                            matched.add(best)
                            tp_flags[ti].append(not gig[best])
                            ig_flags[ti].append(gig[best])
                        else:
                            tp_flags[ti].append(False)
                            det_area = box[2] * box[3]
                            ig_flags[ti].append(
                                stratum != "all" and size_name(det_area) != stratum
                            )
                scores.extend(score for _, score in d)

            if npig == 0:
                ap_table[(cat, stratum)] = None
                continue

            order = sorted(range(len(scores)), key=lambda i: -scores[i])
            aps = []
            for ti, thr in enumerate(IOU_THRS):
                rc = []
                pr = []
                tp = 0
                fp = 0
                for i in order:
                    if ig_flags[ti][i]:
                        continue
                    if tp_flags[ti][i]:
                        tp += 1
                    else:
                        fp += 1
                    rc.append(tp / npig)
                    pr.append(tp / (tp + fp))
                for i in range(len(pr) - 1, 0, -1):
                    if pr[i] > pr[i - 1]:
                        pr[i - 1] = pr[i]
                q = []
                for r in RECALL_POINTS:
                    idx = bisect_left(rc, r)
                    q.append(pr[idx] if idx < len(pr) else 0.0)
                aps.append(sum(q) / len(q))
                if stratum == "all":
                    curves[(cat, thr)] = q
            ap_table[(cat, stratum)] = aps

    def mean_over(stratum, t_index=None):
        vals = []
        for cat in cat_ids:
            aps = ap_table[(cat, stratum)]
            if aps is None:
                continue
            vals.extend(aps if t_index is None else [aps[t_index]])
        if not vals:
            return -1.0
        return 100.0 * sum(vals) / len(vals)

    per_class = {}
    for cat in cat_ids:
        aps = ap_table[(cat, "all")]
        per_class[cat] = -1.0 if aps is None else 100.0 * sum(aps) / len(aps)

    return {
        "ap": mean_over("all"),
        "ap50": mean_over("all", IOU_THRS.index(0.5)),
        "ap75": mean_over("all", IOU_THRS.index(0.75)),
        "ap_small": mean_over("small"),
        "ap_medium": mean_over("medium"),
        "ap_large": mean_over("large"),
        "per_class": per_class,
        "curves": curves,
    }


def pair_streaming_scan(frame_times, snapshots):
    """Linear max-scan pairing: for each frame time, the snapshot with the
    largest emission time <= t, latest-listed winning ties. ``snapshots``
    is a list of (emission_time, payload); returns one payload (or None)
    per frame."""
    out = []
    for t in frame_times:
        best = None
        best_emission = None
        for emission, payload in snapshots:
            if emission <= t and (best_emission is None or emission >= best_emission):
                best = payload
                best_emission = emission
        out.append(best)
    return out


def best_medoids(sizes, k):
    """Exhaustive search over k-subsets of the distinct sizes, minimizing
    the mean concentric 1-IoU distance to the nearest medoid."""

    def wh_iou(a, b):
        inter = min(a[0], b[0]) * min(a[1], b[1])
        return inter / (a[0] * a[1] + b[0] * b[1] - inter)

    distinct = sorted(set(sizes))
    best_cost = None
    best_set = None
    for combo in combinations(distinct, k):
        cost = sum(min(1.0 - wh_iou(s, m) for m in combo) for s in sizes) / len(sizes)
        if best_cost is None or cost < best_cost:
            best_cost = cost
            best_set = combo
    return best_set, best_cost
