"""Discrete-event simulation of a detector consuming a fixed-FPS stream.

Frame arrival instants are kept as exact rationals (frame index over fps)
so availability decisions at arrival boundaries are unambiguous; latencies
are added as exact binary fractions of their float values. Arrival
comparisons additionally allow an absolute slack of 1e-9 seconds.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Any, Mapping, Sequence

import json

import numpy as np

from .datasets import FrameRecord
from .errors import InputError
from .geometry import BBox

ARRIVAL_SLACK = Fraction(1, 10**9)


class SchedulePolicy(Enum):
    LATEST_BLOCKING = "latest_blocking"
    EVERY_FRAME_QUEUE = "every_frame_queue"


@dataclass(frozen=True)
class StreamConfig:
    fps: float = 30.0
    frame_count: int | None = None
    policy: SchedulePolicy = SchedulePolicy.LATEST_BLOCKING

    def __post_init__(self):
        if self.fps <= 0:
            raise InputError(f"fps must be positive, got {self.fps}")
        if self.frame_count is not None and self.frame_count < 1:
            raise InputError(f"frame_count must be >= 1, got {self.frame_count}")


@dataclass(frozen=True)
class ConstantLatency:
    seconds: float

    def __post_init__(self):
        # Zero is allowed as the idealized instant-detector mode.
        if self.seconds < 0:
            raise InputError(f"constant latency must be >= 0, got {self.seconds}")


@dataclass(frozen=True)
class TraceLatency:
    table: Mapping[Any, float]

    def __post_init__(self):
        for image_id, value in self.table.items():
            if value <= 0:
                raise InputError(f"trace latency for {image_id!r} must be positive")


@dataclass(frozen=True)
class LognormalLatency:
    mu: float
    sigma: float
    seed: int

    def __post_init__(self):
        if self.sigma < 0:
            raise InputError(f"sigma must be >= 0, got {self.sigma}")


LatencyModel = ConstantLatency | TraceLatency | LognormalLatency


@dataclass(frozen=True)
class Detection:
    image_id: Any
    category_id: Any
    bbox: BBox
    score: float

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise InputError(f"detection score {self.score} outside [0, 1]")


@dataclass(frozen=True)
class PredictionSnapshot:
    source_image_id: Any
    start_time: float
    emission_time: float
    detections: tuple[Detection, ...]


@dataclass(frozen=True)
class PredictionTimeline:
    snapshots: tuple[PredictionSnapshot, ...]
    config: StreamConfig


def frame_time(i: int, fps: float) -> float:
    """Arrival instant of frame ``i`` in seconds."""
    if i < 0:
        raise InputError(f"frame index must be >= 0, got {i}")
    return i / fps


def sample_latency(m: LatencyModel, image_id: Any, draw_index: int) -> float:
    """Latency in seconds for one inference run.

    The lognormal variant derives an independent deterministic draw from
    (seed, draw_index), so draws are addressable and reproducible.
    """
    if isinstance(m, ConstantLatency):
        return m.seconds
    if isinstance(m, TraceLatency):
        try:
            return float(m.table[image_id])
        except KeyError as exc:
            raise InputError(f"latency trace has no entry for image {image_id!r}") from exc
    if isinstance(m, LognormalLatency):
        z = np.random.default_rng([m.seed, draw_index]).standard_normal()
        return float(np.exp(m.mu + m.sigma * z))
    raise InputError(f"unknown latency model {m!r}")


def load_latency_trace(path) -> TraceLatency:
    """Read a `image_id,latency_seconds` CSV into a trace model."""
    table: dict[Any, float] = {}
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != ["image_id", "latency_seconds"]:
                raise InputError(
                    f"{path}: expected header 'image_id,latency_seconds', got {reader.fieldnames}"
                )
            for row in reader:
                key: Any = row["image_id"]
                try:
                    key = int(key)
                except ValueError:
                    pass
                table[key] = float(row["latency_seconds"])
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    return TraceLatency(table)


def _arrival_times(frames: Sequence[FrameRecord], fps: float) -> list[Fraction]:
    fps_exact = Fraction(fps)
    times = []
    for pos, fr in enumerate(frames):
        idx = fr.frame_index if fr.frame_index is not None else pos
        times.append(Fraction(idx) / fps_exact)
    if any(b <= a for a, b in zip(times, times[1:])):
        raise InputError("frames must be ordered by strictly increasing frame index")
    return times


def simulate(
    frames: Sequence[FrameRecord],
    per_frame_detections: Mapping[Any, Sequence[Detection]],
    m: LatencyModel,
    cfg: StreamConfig,
) -> PredictionTimeline:
    """Run the detector over the stream and emit timestamped snapshots.

    latest_blocking: processing starts on frame 0 at t=0; at each
    completion the newest frame already arrived (and newer than the last
    processed) is started immediately, skipping intermediates; with nothing
    new arrived the detector idles until the next arrival. A frame whose
    entry is missing from ``per_frame_detections`` contributes an empty
    detection list (the COCO results convention for blank frames).

    every_frame_queue: FIFO over all frames with no drops, as a contrast
    baseline.
    """
    if not frames:
        raise InputError("cannot simulate an empty frame list")
    if cfg.frame_count is not None and cfg.frame_count != len(frames):
        raise InputError(
            f"config frame_count={cfg.frame_count} does not match {len(frames)} frames"
        )
    arrivals = _arrival_times(frames, cfg.fps)
    n = len(frames)

    def snapshot(j: int, start: Fraction, draw: int) -> tuple[PredictionSnapshot, Fraction]:
        latency = sample_latency(m, frames[j].image_id, draw)
        if latency < 0 or (latency == 0 and not isinstance(m, ConstantLatency)):
            raise InputError(f"nonpositive latency {latency} for frame {frames[j].image_id!r}")
        emission = start + Fraction(latency)
        dets = tuple(per_frame_detections.get(frames[j].image_id, ()))
        snap = PredictionSnapshot(
            source_image_id=frames[j].image_id,
            start_time=float(start),
            emission_time=float(emission),
            detections=dets,
        )
        return snap, emission

    snaps: list[PredictionSnapshot] = []
    if cfg.policy is SchedulePolicy.LATEST_BLOCKING:
        last = -1
        now = arrivals[0]
        arrived = 0  # frames with arrival <= now + slack
        draw = 0
        while True:
            while arrived < n and arrivals[arrived] <= now + ARRIVAL_SLACK:
                arrived += 1
            if arrived - 1 > last:
                j = arrived - 1  # newest arrived, skipping intermediates
            elif last + 1 < n:
                j = last + 1
                now = arrivals[j]  # idle until the next arrival
            else:
                break
            start = now if now >= arrivals[j] else arrivals[j]
            snap, emission = snapshot(j, start, draw)
            draw += 1
            snaps.append(snap)
            last = j
            now = emission
    elif cfg.policy is SchedulePolicy.EVERY_FRAME_QUEUE:
        now = Fraction(0)
        for i in range(n):
            start = arrivals[i] if arrivals[i] > now else now
            snap, now = snapshot(i, start, i)
            snaps.append(snap)
    else:
        raise InputError(f"unknown policy {cfg.policy!r}")

    resolved = StreamConfig(fps=cfg.fps, frame_count=n, policy=cfg.policy)
    return PredictionTimeline(tuple(snaps), resolved)


def detections_to_jsonable(dets: Sequence[Detection]) -> list[dict]:
    return [
        {
            "image_id": d.image_id,
            "category_id": d.category_id,
            "bbox": list(d.bbox.as_xywh()),
            "score": d.score,
        }
        for d in dets
    ]


def detections_from_jsonable(entries) -> list[Detection]:
    dets = []
    try:
        for e in entries:
            x, y, w, h = (float(v) for v in e["bbox"])
            dets.append(
                Detection(
                    image_id=e["image_id"],
                    category_id=e["category_id"],
                    bbox=BBox(x, y, w, h),
                    score=float(e["score"]),
                )
            )
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"malformed detection record: {exc}") from exc
    return dets


def load_detections(path) -> dict[Any, list[Detection]]:
    """Read a COCO-results JSON array, grouped by image id."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            entries = json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"invalid JSON in {path}: {exc}") from exc
    grouped: dict[Any, list[Detection]] = {}
    for det in detections_from_jsonable(entries):
        grouped.setdefault(det.image_id, []).append(det)
    return grouped


def dump_timeline(tl: PredictionTimeline, path) -> None:
    doc = [
        {
            "source_image_id": s.source_image_id,
            "start_time": s.start_time,
            "emission_time": s.emission_time,
            "detections": detections_to_jsonable(s.detections),
        }
        for s in tl.snapshots
    ]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_timeline(path, cfg: StreamConfig) -> PredictionTimeline:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"invalid JSON in {path}: {exc}") from exc
    snaps = []
    try:
        for s in doc:
            snaps.append(
                PredictionSnapshot(
                    source_image_id=s["source_image_id"],
                    start_time=float(s["start_time"]),
                    emission_time=float(s["emission_time"]),
                    detections=tuple(detections_from_jsonable(s["detections"])),
                )
            )
    except (KeyError, TypeError) as exc:
        raise InputError(f"malformed timeline entry: {exc}") from exc
    return PredictionTimeline(tuple(snaps), cfg)
