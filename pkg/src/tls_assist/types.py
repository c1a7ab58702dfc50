"""Shared vocabulary: class enums, priority orders, boxes, detections, frames."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Union


class LightClass(str, Enum):
    RED = "red"
    YELLOW = "yellow"
    GREEN = "green"
    OFF = "off"


class SignClass(str, Enum):
    STOP = "stop"
    YIELD = "yield"
    SPEED_LIMIT_30 = "speed_limit_30"
    SPEED_LIMIT_60 = "speed_limit_60"
    SPEED_LIMIT_90 = "speed_limit_90"
    OFF = "off"


class LightState(str, Enum):
    """Candidate states of temporal validation (note: no ``off``)."""

    RED = "red"
    YELLOW = "yellow"
    GREEN = "green"
    NO_DETECTION = "no_detection"


class ViewId(str, Enum):
    FRONT_LEFT = "front_left"
    FRONT_CENTER = "front_center"
    FRONT_RIGHT = "front_right"


Label = Union[LightClass, SignClass]

# lower rank = higher priority
_LIGHT_RANK = {LightClass.RED: 0, LightClass.YELLOW: 1, LightClass.GREEN: 2, LightClass.OFF: 3}
_SIGN_RANK = {
    SignClass.STOP: 0,
    SignClass.YIELD: 1,
    SignClass.SPEED_LIMIT_30: 2,
    SignClass.SPEED_LIMIT_60: 3,
    SignClass.SPEED_LIMIT_90: 4,
    SignClass.OFF: 5,
}
_CRITICALITY = {
    LightState.RED: 3,
    LightState.GREEN: 2,
    LightState.YELLOW: 1,
    LightState.NO_DETECTION: 0,
}

SPEED_LIMIT_KMH = {
    SignClass.SPEED_LIMIT_30: 30,
    SignClass.SPEED_LIMIT_60: 60,
    SignClass.SPEED_LIMIT_90: 90,
}


def light_priority_rank(c: LightClass) -> int:
    return _LIGHT_RANK[c]


def sign_priority_rank(s: SignClass) -> int:
    return _SIGN_RANK[s]


def criticality(c: LightState) -> int:
    """State criticality used by the temporal weight: red 3, green 2, yellow 1, none 0."""
    return _CRITICALITY[c]


PANORAMA = "panorama"
CROP = "crop"


@dataclass(frozen=True, slots=True)
class BoundingBox:
    """Axis-aligned box in continuous pixel coordinates.

    ``frame_tag`` names the coordinate frame (a view name, ``"panorama"`` or
    ``"crop"``). It is informational and excluded from equality so that a box
    compares equal to itself after a zero translation between frames.
    """

    x_min: float
    y_min: float
    x_max: float
    y_max: float
    frame_tag: str = field(default=ViewId.FRONT_CENTER.value, compare=False)

    def __post_init__(self) -> None:
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(f"degenerate box {self.as_tuple()}")
        if self.x_min < 0 or self.y_min < 0:
            raise ValueError(f"negative box coordinate {self.as_tuple()}")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)

    def translated(self, dx: float, dy: float, frame_tag: str) -> BoundingBox:
        return BoundingBox(self.x_min + dx, self.y_min + dy, self.x_max + dx, self.y_max + dy, frame_tag)


@dataclass(frozen=True, slots=True)
class Detection:
    box: BoundingBox
    label: Label
    confidence: float
    view: ViewId = ViewId.FRONT_CENTER

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")
        if not isinstance(self.label, (LightClass, SignClass)):
            raise TypeError(f"label must be LightClass or SignClass, got {self.label!r}")

    @property
    def kind(self) -> str:
        return "light" if isinstance(self.label, LightClass) else "sign"


@dataclass(frozen=True)
class FrameBundle:
    """All detections of one timestamp, keyed by camera view.

    ``view_sizes`` records (width, height) of each view as delivered by the
    camera; views without an entry are assumed to match the configured layout.
    """

    frame_index: int
    timestamp: float
    views: Mapping[ViewId, tuple[Detection, ...]]
    stitch_ok: bool = True
    view_sizes: Mapping[ViewId, tuple[int, int]] = field(default_factory=dict)

    def detections(self) -> list[Detection]:
        out: list[Detection] = []
        for dets in self.views.values():
            out.extend(dets)
        return out
