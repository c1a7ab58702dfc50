"""Traffic sign recognition post-processing: dedup, size filter, priority selection."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .assembly import AssembledFrame
from .types import BoundingBox, Detection, SignClass, sign_priority_rank


@dataclass(frozen=True)
class PrioritizedSign:
    sign: SignClass
    source_box: BoundingBox | None = None

    def __post_init__(self) -> None:
        if self.sign is SignClass.OFF and self.source_box is not None:
            raise ValueError("an absent sign carries no box")

    @property
    def rank(self) -> int:
        return sign_priority_rank(self.sign)


NO_SIGN = PrioritizedSign(SignClass.OFF)


def iou(a: BoundingBox, b: BoundingBox) -> float:
    ix = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    iy = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


def deduplicate(dets: Iterable[Detection], iou_thresh: float = 0.5) -> list[Detection]:
    """Class-scoped greedy suppression, highest confidence first.

    A detection is dropped when a kept detection of the same class overlaps
    it with IoU >= ``iou_thresh``. Output is in descending confidence order
    (stable for equal confidences).
    """
    ordered = sorted(dets, key=lambda d: -d.confidence)
    if len(ordered) < 2:
        return ordered
    kept: list[Detection] = []
    for d in ordered:
        if not any(k.label is d.label and iou(k.box, d.box) >= iou_thresh for k in kept):
            kept.append(d)
    return kept


def filter_small(dets: Iterable[Detection], min_height: float) -> list[Detection]:
    return [d for d in dets if d.box.y_max - d.box.y_min >= min_height]


def _key(d: Detection) -> tuple:
    b = d.box
    return (sign_priority_rank(d.label), -b.area, -d.confidence, b.x_min, b.y_min, b.x_max, b.y_max)


def prioritize(dets: Sequence[Detection]) -> PrioritizedSign:
    """Most relevant sign; same-class candidates prefer the larger box, then confidence."""
    if not dets:
        return NO_SIGN
    best = min(dets, key=_key)
    if best.label is SignClass.OFF:
        return NO_SIGN
    return PrioritizedSign(best.label, best.box)


@dataclass(frozen=True)
class TSRConfig:
    iou_threshold: float = 0.5
    min_height: float = 12.0
    enable_dedup: bool = True
    enable_size_filter: bool = True

    def __post_init__(self) -> None:
        if not 0.0 < self.iou_threshold <= 1.0:
            raise ValueError("iou_threshold must lie in (0, 1]")
        if self.min_height < 0:
            raise ValueError("min_height must be >= 0")


def process_frame(frame: AssembledFrame, config: TSRConfig | None = None) -> PrioritizedSign:
    cfg = config or TSRConfig()
    dets: Sequence[Detection] = frame.sign_detections
    if not dets:
        return NO_SIGN
    if cfg.enable_dedup:
        dets = deduplicate(dets, cfg.iou_threshold)
    if cfg.enable_size_filter:
        dets = filter_small(dets, cfg.min_height)
    return prioritize(dets)
