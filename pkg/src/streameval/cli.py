"""Command-line entry points.

Subcommands: ``synth`` (scenario generation), ``evaluate`` (offline or
streaming AP), ``fuse`` (branch-block fusion with an equivalence check),
and ``tools`` (anchors / class weights / histogram tables). All outputs
are deterministic for fixed flags and seeds; wall-clock timing lives in a
dedicated report field outside the determinism contract.

Exit codes: 0 success, 2 malformed input, 3 integrity violation,
4 internal invariant failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from . import kernels
from .datasets import class_histogram, class_loss_weights, cluster_anchors, inverse_freq_sample_weights, load_coco
from .errors import InputError, IntegrityError, InvariantError
from .evaluation import (
    EvalConfig,
    coco_ap,
    pair_offline,
    pair_streaming,
    write_pr_csv,
    write_report,
)
from .fusion import (
    conv_to_jsonable,
    count_flops,
    count_params,
    equivalence_error,
    fuse_block,
    load_block,
)
from .stream import (
    ConstantLatency,
    LognormalLatency,
    SchedulePolicy,
    StreamConfig,
    dump_timeline,
    load_detections,
    load_latency_trace,
    load_timeline,
    simulate,
)
from .synth import generate_scenario, write_scenario

FUSION_ERROR_LIMIT = 1e-5

_POLICIES = {
    "latest-blocking": SchedulePolicy.LATEST_BLOCKING,
    "queue": SchedulePolicy.EVERY_FRAME_QUEUE,
}


def _add_eval_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--fps", type=float, default=30.0)
    p.add_argument("--iou-thrs", type=str, default=None, help="comma list of IoU thresholds")
    p.add_argument("--max-dets", type=int, default=100)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="streameval")
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="generate a synthetic stream scenario")
    p_synth.add_argument("--objects", type=int, default=3)
    p_synth.add_argument("--frames", type=int, default=60)
    p_synth.add_argument("--fps", type=float, default=30.0)
    p_synth.add_argument("--vel-max", type=float, default=5.0, help="max per-frame speed, px")
    p_synth.add_argument("--width", type=int, default=1920)
    p_synth.add_argument("--height", type=int, default=1200)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--out", type=str, required=True, help="output directory")
    p_synth.set_defaults(func=cmd_synth)

    p_eval = sub.add_parser("evaluate", help="compute offline or streaming AP")
    p_eval.add_argument("--mode", choices=["offline", "streaming"], required=True)
    p_eval.add_argument("--gt", type=str, required=True)
    p_eval.add_argument("--dets", type=str, default=None, help="COCO results JSON")
    p_eval.add_argument("--timeline", type=str, default=None, help="prediction timeline JSON")
    p_eval.add_argument("--latency-const", type=float, default=None)
    p_eval.add_argument("--latency-trace", type=str, default=None)
    p_eval.add_argument("--latency-lognormal", type=str, default=None, metavar="MU,SIGMA,SEED")
    p_eval.add_argument("--policy", choices=sorted(_POLICIES), default="latest-blocking")
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.add_argument("--dump-timeline", type=str, default=None, help="also write the simulated timeline")
    p_eval.add_argument("--pr-csv", type=str, default=None, help="also write PR curves CSV")
    p_eval.add_argument("--out", type=str, required=True, help="report JSON path")
    _add_eval_flags(p_eval)
    p_eval.set_defaults(func=cmd_evaluate)

    p_fuse = sub.add_parser("fuse", help="fuse a branch block into one 3x3 conv")
    p_fuse.add_argument("--block", type=str, required=True, help="block description JSON")
    p_fuse.add_argument("--out", type=str, required=True, help="fused weights JSON")
    p_fuse.add_argument("--report", type=str, default=None, help="equivalence report JSON")
    p_fuse.add_argument("--trials", type=int, default=20)
    p_fuse.add_argument("--seed", type=int, default=0)
    p_fuse.add_argument("--spatial", type=str, default="32x32", help="HxW for the FLOP table")
    p_fuse.set_defaults(func=cmd_fuse)

    p_tools = sub.add_parser("tools", help="dataset tables: anchors, weights, histogram")
    tools_sub = p_tools.add_subparsers(dest="tool", required=True)
    for name in ("anchors", "weights", "histogram"):
        tp = tools_sub.add_parser(name)
        tp.add_argument("--dataset", type=str, required=True)
        tp.add_argument("--out", type=str, required=True)
        if name == "anchors":
            tp.add_argument("--clusters", type=int, default=9)
            tp.add_argument("--seed", type=int, default=0)
        tp.set_defaults(func=cmd_tools, tool=name)

    return parser


def cmd_synth(args) -> int:
    scenario = generate_scenario(
        objects=args.objects,
        frames=args.frames,
        fps=args.fps,
        vel_max=args.vel_max,
        seed=args.seed,
        width=args.width,
        height=args.height,
    )
    paths = write_scenario(scenario, args.out)
    for key, path in sorted(paths.items()):
        print(f"{key}: {path}")
    return 0


def _parse_latency(args):
    chosen = [
        flag
        for flag, value in (
            ("--latency-const", args.latency_const),
            ("--latency-trace", args.latency_trace),
            ("--latency-lognormal", args.latency_lognormal),
        )
        if value is not None
    ]
    if len(chosen) > 1:
        raise InputError(f"latency flags are mutually exclusive, got {chosen}")
    if args.latency_const is not None:
        return ConstantLatency(args.latency_const), {"latency": {"constant": args.latency_const}}
    if args.latency_trace is not None:
        return load_latency_trace(args.latency_trace), {"latency": {"trace": args.latency_trace}}
    if args.latency_lognormal is not None:
        parts = args.latency_lognormal.split(",")
        if len(parts) != 3:
            raise InputError("--latency-lognormal expects MU,SIGMA,SEED")
        mu, sigma = float(parts[0]), float(parts[1])
        seed = int(parts[2])
        return (
            LognormalLatency(mu, sigma, seed),
            {"latency": {"lognormal": {"mu": mu, "sigma": sigma, "seed": seed}}},
        )
    return None, {"latency": None}


def _eval_config(args) -> EvalConfig:
    if args.iou_thrs is not None:
        thrs = tuple(float(v) for v in args.iou_thrs.split(",") if v)
        return EvalConfig(iou_thresholds=thrs, max_dets=args.max_dets)
    return EvalConfig(max_dets=args.max_dets)


def cmd_evaluate(args) -> int:
    started = time.perf_counter()
    gt = load_coco(args.gt)
    cfg = _eval_config(args)
    echo: dict = {
        "mode": args.mode,
        "gt": args.gt,
        "fps": args.fps,
        "iou_thresholds": list(cfg.iou_thresholds),
        "max_dets": cfg.max_dets,
    }

    if args.mode == "offline":
        if args.dets is None:
            raise InputError("offline mode requires --dets")
        dets = load_detections(args.dets)
        echo["dets"] = args.dets
        pairs = pair_offline(gt, dets)
    else:
        stream_cfg = StreamConfig(fps=args.fps, policy=_POLICIES[args.policy])
        if args.timeline is not None:
            timeline = load_timeline(args.timeline, stream_cfg)
            echo["timeline"] = args.timeline
        elif args.dets is not None:
            model, latency_echo = _parse_latency(args)
            if model is None:
                raise InputError("streaming mode with --dets requires a latency flag")
            echo.update(latency_echo)
            echo["policy"] = args.policy
            dets = load_detections(args.dets)
            echo["dets"] = args.dets
            frames = _stream_frames(gt)
            timeline = simulate(frames, dets, model, stream_cfg)
            if args.dump_timeline:
                dump_timeline(timeline, args.dump_timeline)
        else:
            raise InputError("streaming mode requires --timeline or --dets")
        pairs = pair_streaming(gt, timeline)

    result = coco_ap(pairs, cfg)
    timing = {"wall_seconds": time.perf_counter() - started}
    write_report(args.out, args.mode, result, echo, timing)
    if args.pr_csv:
        write_pr_csv(args.pr_csv, result, cfg)
    print(
        f"{args.mode}: ap={result.ap:.4f} ap50={result.ap50:.4f} ap75={result.ap75:.4f} "
        f"small={result.ap_small:.4f} medium={result.ap_medium:.4f} large={result.ap_large:.4f}"
    )
    return 0


def _stream_frames(gt):
    frames = sorted(
        gt.images,
        key=lambda fr: (fr.frame_index if fr.frame_index is not None else 0, str(fr.image_id)),
    )
    sequences = {fr.sequence_id for fr in frames}
    if len(sequences) > 1:
        raise InputError(
            f"streaming simulation expects a single sequence, found {len(sequences)}"
        )
    return frames


def cmd_fuse(args) -> int:
    block = load_block(args.block)
    fused = fuse_block(block)
    try:
        h, w = (int(v) for v in args.spatial.lower().split("x"))
    except ValueError as exc:
        raise InputError(f"--spatial expects HxW, got {args.spatial!r}") from exc

    max_err = equivalence_error(block, fused, trials=args.trials, seed=args.seed)
    report = {
        "backend": kernels.active_backend(),
        "params_before": count_params(block),
        "params_after": count_params(fused),
        "flops_before": count_flops(block, (h, w)),
        "flops_after": count_flops(fused, (h, w)),
        "spatial": [h, w],
        "trials": args.trials,
        "max_abs_error": max_err,
        "error_limit": FUSION_ERROR_LIMIT,
    }
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(conv_to_jsonable(fused), fh, indent=2, sort_keys=True)
        fh.write("\n")
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
            fh.write("\n")
    print(
        f"params {report['params_before']} -> {report['params_after']}, "
        f"flops {report['flops_before']} -> {report['flops_after']}, "
        f"max_abs_error {max_err:.3e}"
    )
    if max_err > FUSION_ERROR_LIMIT:
        print(f"equivalence error {max_err} exceeds {FUSION_ERROR_LIMIT}", file=sys.stderr)
        return 4
    return 0


def cmd_tools(args) -> int:
    dataset = load_coco(args.dataset)
    out = Path(args.out)
    if args.tool == "anchors":
        hist = [a.bbox for a in dataset.annotations]
        anchors = cluster_anchors(hist, k=args.clusters, seed=args.seed)
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write("width,height\n")
            for w, h in anchors.anchors:
                fh.write(f"{w},{h}\n")
    elif args.tool == "histogram":
        hist = class_histogram(dataset)
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write("category_id,name,count\n")
            for cid in sorted(hist.counts, key=str):
                fh.write(f"{cid},{dataset.categories[cid]},{hist.counts[cid]}\n")
    else:
        hist = class_histogram(dataset)
        sample = inverse_freq_sample_weights(hist)
        loss = class_loss_weights(hist)
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write("category_id,name,count,sample_weight,loss_weight\n")
            for cid in sorted(hist.counts, key=str):
                fh.write(
                    f"{cid},{dataset.categories[cid]},{hist.counts[cid]},{sample[cid]},{loss[cid]}\n"
                )
    print(f"{args.tool}: {out}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except IntegrityError as exc:
        print(f"integrity error: {exc}", file=sys.stderr)
        return 3
    except InvariantError as exc:
        print(f"invariant failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
