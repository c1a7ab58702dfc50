"""Desk-scale scenario simulator: routes, ground-truth projection, detector noise.

Randomness comes from :class:`random.Random` (Mersenne Twister), which yields
identical sequences on every platform for a given integer seed. Sub-seeds are
derived with SHA-256 over the parent seed and a label, so streams for
different routes, repetitions and ticks never share state.
"""
from __future__ import annotations

import bisect
import hashlib
import math
import random
from dataclasses import dataclass, field
from typing import Iterator, Mapping

from .types import BoundingBox, Detection, FrameBundle, Label, LightClass, SignClass, ViewId

TRACKS = ("tiny", "short", "long")
# route length bounds in decimetres (inclusive), so sampling stays integral
_TRACK_DM = {"tiny": (600, 1499), "short": (1500, 5000), "long": (5001, 10000)}

_VIEW_ORDER = (ViewId.FRONT_LEFT, ViewId.FRONT_CENTER, ViewId.FRONT_RIGHT)


def derive_seed(*parts: object) -> int:
    digest = hashlib.sha256(":".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "big")


def tick_rng(seed: int, tick: int, rng: random.Random | None = None) -> random.Random:
    """Per-tick generator, so configurations that diverge still share noise draws.

    Passing ``rng`` reseeds that instance in place instead of allocating one.
    """
    key = (seed << 24) | (tick & 0xFFFFFF)
    if rng is None:
        return random.Random(key)
    rng.seed(key)
    return rng


@dataclass(frozen=True)
class PhaseSchedule:
    """Periodic red -> green -> yellow cycle; ``offset`` shifts the cycle start."""

    red: float
    green: float
    yellow: float
    offset: float = 0.0

    def __post_init__(self) -> None:
        if min(self.red, self.green, self.yellow) <= 0:
            raise ValueError("phase durations must be positive")

    @property
    def cycle(self) -> float:
        return self.red + self.green + self.yellow

    def state_at(self, t: float) -> LightClass:
        u = (t + self.offset) % self.cycle
        if u < self.red:
            return LightClass.RED
        if u < self.red + self.green:
            return LightClass.GREEN
        return LightClass.YELLOW


@dataclass(frozen=True)
class Event:
    position: float
    kind: str  # "intersection" | "sign"
    schedule: PhaseSchedule | None = None
    sign: SignClass | None = None
    heads: int = 1

    def __post_init__(self) -> None:
        if self.kind == "intersection":
            if self.schedule is None or self.heads < 1:
                raise ValueError("intersection needs a phase schedule and >= 1 light head")
        elif self.kind == "sign":
            if self.sign is None or self.sign is SignClass.OFF:
                raise ValueError("sign event needs a concrete sign class")
        else:
            raise ValueError(f"unknown event kind {self.kind!r}")

    def to_dict(self) -> dict:
        d: dict = {"position": self.position, "kind": self.kind}
        if self.schedule is not None:
            s = self.schedule
            d["schedule"] = {"red": s.red, "green": s.green, "yellow": s.yellow, "offset": s.offset}
            d["heads"] = self.heads
        if self.sign is not None:
            d["sign"] = self.sign.value
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> Event:
        sched = d.get("schedule")
        return cls(
            position=float(d["position"]),
            kind=d["kind"],
            schedule=PhaseSchedule(**sched) if sched else None,
            sign=SignClass(d["sign"]) if d.get("sign") else None,
            heads=int(d.get("heads", 1)),
        )


@dataclass(frozen=True)
class Scenario:
    route_length: float
    events: tuple[Event, ...]
    visibility_range: float = 60.0
    seed: int = 0
    track: str = ""
    lateral_fault_at: float | None = None

    def __post_init__(self) -> None:
        if self.route_length <= 0:
            raise ValueError("route_length must be positive")
        last = -math.inf
        for e in self.events:
            if not 0 <= e.position <= self.route_length:
                raise ValueError(f"event at {e.position} outside route")
            if e.position <= last:
                raise ValueError("event positions must be strictly increasing")
            last = e.position
        object.__setattr__(self, "_positions", [e.position for e in self.events])

    @property
    def intersections(self) -> list[Event]:
        return [e for e in self.events if e.kind == "intersection"]

    @property
    def signs(self) -> list[Event]:
        return [e for e in self.events if e.kind == "sign"]

    def events_between(self, lo: float, hi: float) -> list[Event]:
        """Events with lo < position <= hi."""
        pos = self._positions  # type: ignore[attr-defined]
        return list(self.events[bisect.bisect_right(pos, lo) : bisect.bisect_right(pos, hi)])

    def to_dict(self) -> dict:
        return {
            "track": self.track,
            "seed": self.seed,
            "route_length": self.route_length,
            "visibility_range": self.visibility_range,
            "lateral_fault_at": self.lateral_fault_at,
            "events": [e.to_dict() for e in self.events],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> Scenario:
        return cls(
            route_length=float(d["route_length"]),
            events=tuple(Event.from_dict(e) for e in d["events"]),
            visibility_range=float(d.get("visibility_range", 60.0)),
            seed=int(d.get("seed", 0)),
            track=d.get("track", ""),
            lateral_fault_at=d.get("lateral_fault_at"),
        )


@dataclass(frozen=True)
class ScenarioParams:
    intersection_spacing: float = 80.0
    sign_spacing: float = 60.0
    min_sign_gap: float = 45.0  # > size-filter horizon, so signs never compete
    # light heads stand 15 m past the crossing; from a stop line 2 m short of one
    # crossing the next group must stay beyond the 60 m visibility range
    min_intersection_gap: float = 50.0
    intersection_clearance: float = 20.0
    start_clearance: float = 25.0
    end_clearance: float = 5.0
    visibility_range: float = 60.0
    red_range: tuple[float, float] = (8.0, 14.0)
    green_range: tuple[float, float] = (8.0, 14.0)
    yellow: float = 3.0
    max_heads: int = 3
    lateral_fault_prob: float = 0.0

    def __post_init__(self) -> None:
        if self.intersection_spacing <= 0 or self.sign_spacing <= 0:
            raise ValueError("event spacings must be positive")
        if not 0.0 <= self.lateral_fault_prob <= 1.0:
            raise ValueError("lateral_fault_prob must lie in [0, 1]")
        if self.max_heads < 1:
            raise ValueError("max_heads must be >= 1")


_SIGN_CHOICES = (
    SignClass.STOP,
    SignClass.YIELD,
    SignClass.SPEED_LIMIT_30,
    SignClass.SPEED_LIMIT_60,
    SignClass.SPEED_LIMIT_90,
)


def _r1(x: float) -> float:
    return round(x, 1)


def _positions(rng: random.Random, spacing: float, start: float, end: float, min_gap: float = 0.0) -> list[float]:
    out = []
    pos = start + rng.uniform(0.0, spacing)
    while pos <= end:
        out.append(_r1(pos))
        pos += max(rng.uniform(0.5, 1.5) * spacing, min_gap)
    return out


def generate_scenario(track: str, seed: int, params: ScenarioParams | None = None) -> Scenario:
    p = params or ScenarioParams()
    if track not in _TRACK_DM:
        raise ValueError(f"unknown track {track!r}; expected one of {TRACKS}")
    rng = random.Random(derive_seed("scenario", track, seed))
    lo, hi = _TRACK_DM[track]
    length = rng.randint(lo, hi) / 10
    end = length - p.end_clearance

    events: list[Event] = []
    for pos in _positions(rng, p.intersection_spacing, p.start_clearance, end, p.min_intersection_gap):
        sched = PhaseSchedule(
            red=_r1(rng.uniform(*p.red_range)),
            green=_r1(rng.uniform(*p.green_range)),
            yellow=p.yellow,
        )
        sched = PhaseSchedule(sched.red, sched.green, sched.yellow, _r1(rng.uniform(0.0, sched.cycle)))
        events.append(Event(pos, "intersection", schedule=sched, heads=rng.randint(1, p.max_heads)))
    crossings = [e.position for e in events]

    last_sign = -math.inf
    for pos in _positions(rng, p.sign_spacing, p.start_clearance, end):
        sign = rng.choice(_SIGN_CHOICES)
        if pos - last_sign < p.min_sign_gap:
            continue
        if any(abs(pos - c) < p.intersection_clearance for c in crossings):
            continue
        events.append(Event(pos, "sign", sign=sign))
        last_sign = pos
    events.sort(key=lambda e: e.position)

    fault = None
    if rng.random() < p.lateral_fault_prob:
        fault = _r1(rng.uniform(0.2, 0.9) * length)
    return Scenario(length, tuple(events), p.visibility_range, seed, track, fault)


@dataclass(frozen=True)
class Camera:
    """1-D longitudinal pinhole rig: box height = size_factor / distance."""

    size_factor: float = 480.0  # px * m
    focal: float = 600.0  # px, lateral/vertical placement
    view_width: int = 1280
    view_height: int = 720
    multi_view: bool = True
    light_far_side: float = 15.0  # light heads stand beyond the stop line
    light_elevation: float = 2.5
    light_head_spacing: float = 2.0
    light_aspect: float = 0.4
    sign_lateral: float = 4.0
    sign_elevation: float = 1.0
    min_distance: float = 1.0

    def box_height(self, distance: float) -> float:
        return self.size_factor / distance


@dataclass(frozen=True)
class GroundTruthFrame:
    frame_index: int
    timestamp: float
    detections: tuple[Detection, ...]


def _place(cam: Camera, lateral: float, elevation: float, d: float, aspect: float) -> tuple[ViewId, BoundingBox] | None:
    h = cam.box_height(d)
    w = h * aspect
    cx = cam.view_width / 2 + cam.focal * lateral / d
    cy = cam.view_height / 2 - cam.focal * elevation / d
    views = _VIEW_ORDER if cam.multi_view else (ViewId.FRONT_CENTER,)
    # panorama x of the centre, front_center occupying [W, 2W) in multi-view
    base = 1 if cam.multi_view else 0
    pano_cx = cx + base * cam.view_width
    idx = int(pano_cx // cam.view_width)
    if idx < 0 or idx >= len(views):
        return None
    x0 = pano_cx - idx * cam.view_width - w / 2
    x1 = x0 + w
    y0 = cy - h / 2
    y1 = cy + h / 2
    cx0, cy0 = max(x0, 0.0), max(y0, 0.0)
    cx1, cy1 = min(x1, float(cam.view_width)), min(y1, float(cam.view_height))
    if cx1 - cx0 <= 0 or cy1 - cy0 <= 0 or (cx1 - cx0) * (cy1 - cy0) < 0.3 * w * h:
        return None
    box = (round(cx0, 2), round(cy0, 2), round(cx1, 2), round(cy1, 2))
    if box[0] >= box[2] or box[1] >= box[3]:
        return None
    view = views[idx]
    return view, BoundingBox(*box, view.value)


def ground_truth_frame(
    s: Scenario, ego: float, t: float, camera: Camera | None = None, frame_index: int = 0
) -> GroundTruthFrame:
    """Objects ahead of ``ego`` within the visibility range, projected into views."""
    cam = camera or Camera()
    out: list[Detection] = []
    lo = ego - cam.light_far_side
    for e in s.events_between(lo, ego + s.visibility_range):
        if e.kind == "intersection":
            d = e.position + cam.light_far_side - ego
            if not cam.min_distance <= d <= s.visibility_range:
                continue
            state = e.schedule.state_at(t)  # type: ignore[union-attr]
            for i in range(e.heads):
                lateral = (i - (e.heads - 1) / 2) * cam.light_head_spacing
                placed = _place(cam, lateral, cam.light_elevation, d, cam.light_aspect)
                if placed:
                    out.append(Detection(placed[1], state, 1.0, placed[0]))
        else:
            d = e.position - ego
            if not cam.min_distance <= d <= s.visibility_range:
                continue
            placed = _place(cam, cam.sign_lateral, cam.sign_elevation, d, 1.0)
            if placed:
                out.append(Detection(placed[1], e.sign, 1.0, placed[0]))  # type: ignore[arg-type]
    return GroundTruthFrame(frame_index, round(t, 6), tuple(out))


def _default_light_confusion() -> dict[LightClass, dict[LightClass, float]]:
    # red<->yellow takes 60% of the misclassification mass, the rest is uniform
    r, y, g, o = LightClass.RED, LightClass.YELLOW, LightClass.GREEN, LightClass.OFF
    third = 1.0 / 3.0
    return {
        r: {y: 0.6, g: 0.2, o: 0.2},
        y: {r: 0.6, g: 0.2, o: 0.2},
        g: {r: third, y: third, o: third},
        o: {r: third, y: third, g: third},
    }


def _default_sign_confusion() -> dict[SignClass, dict[SignClass, float]]:
    return {s: {o: 0.25 for o in _SIGN_CHOICES if o is not s} for s in _SIGN_CHOICES}


@dataclass(frozen=True)
class NoiseModel:
    dropout_prob: float = 0.3
    misclass_prob: float = 0.1
    confidence_jitter_sd: float = 0.05
    duplicate_prob: float = 0.0
    base_confidence: float = 0.85
    seed: int = 0
    light_confusion: Mapping[LightClass, Mapping[LightClass, float]] = field(default_factory=_default_light_confusion)
    sign_confusion: Mapping[SignClass, Mapping[SignClass, float]] = field(default_factory=_default_sign_confusion)

    def __post_init__(self) -> None:
        for name in ("dropout_prob", "misclass_prob", "duplicate_prob", "base_confidence"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")
        if self.confidence_jitter_sd < 0:
            raise ValueError("confidence_jitter_sd must be >= 0")
        for table in (self.light_confusion, self.sign_confusion):
            for src, row in table.items():
                if any(not 0.0 <= p <= 1.0 for p in row.values()):
                    raise ValueError(f"confusion row {src.value}: probability outside [0, 1]")
                if abs(sum(row.values()) - 1.0) > 1e-9:
                    raise ValueError(f"confusion row {src.value} sums to {sum(row.values())}, not 1")
        cum: dict = {}
        for table in (self.light_confusion, self.sign_confusion):
            for src, row in table.items():
                acc, entries = 0.0, []
                for dst, p in row.items():
                    acc += p
                    entries.append((acc, dst))
                cum[src] = entries
        object.__setattr__(self, "_cum", cum)

    @property
    def is_identity(self) -> bool:
        """True when corruption consumes no randomness."""
        return not (self.dropout_prob or self.misclass_prob or self.confidence_jitter_sd or self.duplicate_prob)

    @classmethod
    def noiseless(cls, **kw) -> NoiseModel:
        return cls(dropout_prob=0.0, misclass_prob=0.0, confidence_jitter_sd=0.0, duplicate_prob=0.0, **kw)

    def confuse(self, label: Label, u: float) -> Label:
        entries = self._cum.get(label)  # type: ignore[attr-defined]
        if not entries:
            return label
        for acc, dst in entries:
            if u < acc:
                return dst
        return entries[-1][1]

    def to_dict(self) -> dict:
        return {
            "dropout_prob": self.dropout_prob,
            "misclass_prob": self.misclass_prob,
            "confidence_jitter_sd": self.confidence_jitter_sd,
            "duplicate_prob": self.duplicate_prob,
            "base_confidence": self.base_confidence,
            "seed": self.seed,
            "light_confusion": {k.value: {d.value: p for d, p in row.items()} for k, row in self.light_confusion.items()},
            "sign_confusion": {k.value: {d.value: p for d, p in row.items()} for k, row in self.sign_confusion.items()},
        }


def _clamp01(x: float) -> float:
    return 0.0 if x < 0.0 else 1.0 if x > 1.0 else x


def corrupt(gt: GroundTruthFrame, nm: NoiseModel, rng: random.Random, camera: Camera | None = None) -> FrameBundle:
    cam = camera or Camera()
    views: dict[ViewId, list[Detection]] = {v: [] for v in (_VIEW_ORDER if cam.multi_view else (ViewId.FRONT_CENTER,))}
    for det in gt.detections:
        if rng.random() < nm.dropout_prob:
            continue
        label = det.label
        if rng.random() < nm.misclass_prob:
            label = nm.confuse(label, rng.random())
        jitter = rng.gauss(0.0, nm.confidence_jitter_sd) if nm.confidence_jitter_sd > 0 else 0.0
        conf = round(_clamp01(nm.base_confidence - jitter), 4)
        views[det.view].append(Detection(det.box, label, conf, det.view))
        if rng.random() < nm.duplicate_prob:
            b = det.box
            dx = (rng.random() * 2 - 1) * 0.1 * b.width
            dy = (rng.random() * 2 - 1) * 0.1 * b.height
            x0 = round(min(max(b.x_min + dx, 0.0), cam.view_width - b.width), 2)
            y0 = round(min(max(b.y_min + dy, 0.0), cam.view_height - b.height), 2)
            x1 = round(x0 + b.width, 2)
            y1 = round(y0 + b.height, 2)
            dup_conf = round(_clamp01(conf - 0.1 * rng.random()), 4)
            views[det.view].append(Detection(BoundingBox(x0, y0, x1, y1, b.frame_tag), label, dup_conf, det.view))
    return FrameBundle(gt.frame_index, gt.timestamp, {v: tuple(ds) for v, ds in views.items()})


@dataclass
class EgoTrace:
    dt: float
    positions: list[float] = field(default_factory=list)
    speeds: list[float] = field(default_factory=list)

    def append(self, position: float, speed: float) -> None:
        if speed < 0:
            raise ValueError("speed must be >= 0")
        if self.positions and position < self.positions[-1]:
            raise ValueError("position must be non-decreasing")
        self.positions.append(position)
        self.speeds.append(speed)


def open_loop_stream(
    s: Scenario,
    nm: NoiseModel,
    seed: int,
    speed: float = 10.0,
    dt: float = 0.1,
    camera: Camera | None = None,
) -> Iterator[FrameBundle]:
    """Frames seen by an ego driving the route at constant speed (no agent feedback)."""
    cam = camera or Camera()
    tick = 0
    while True:
        pos = min(tick * speed * dt, s.route_length)
        t = tick * dt
        gt = ground_truth_frame(s, pos, t, cam, tick)
        yield corrupt(gt, nm, tick_rng(seed, tick), cam)
        if pos >= s.route_length:
            return
        tick += 1
