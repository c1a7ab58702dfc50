"""Multi-view frame assembly.

Views are composed by non-overlapping horizontal concatenation of their
coordinate frames (front_left | front_center | front_right). Detections are
remapped into the panorama, then clipped to a fixed 1280x720 processing crop.
When composition is impossible the front-center view is used on its own.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .types import CROP, PANORAMA, BoundingBox, Detection, FrameBundle, LightClass, ViewId

CROP_WIDTH = 1280
CROP_HEIGHT = 720

_ORDER = (ViewId.FRONT_LEFT, ViewId.FRONT_CENTER, ViewId.FRONT_RIGHT)


class MissingViewError(ValueError):
    """Raised when the front-center view is absent and no fallback exists."""


class BoxOutOfViewError(ValueError):
    pass


class ViewStatus(str, Enum):
    OK = "ok"
    STITCH_FAILURE = "stitch_failure"


@dataclass(frozen=True)
class ViewLayout:
    views: tuple[ViewId, ...]
    sizes: dict[ViewId, tuple[int, int]]  # (width, height)

    def __post_init__(self) -> None:
        if ViewId.FRONT_CENTER not in self.views:
            raise ValueError("layout must include front_center")
        if tuple(v for v in _ORDER if v in self.views) != self.views:
            raise ValueError(f"views must follow left-to-right order, got {self.views}")
        for v in self.views:
            w, h = self.sizes[v]
            if w <= 0 or h <= 0:
                raise ValueError(f"non-positive size for {v.value}")
        offsets: dict[ViewId, int] = {}
        x = 0
        for v in self.views:
            offsets[v] = x
            x += self.sizes[v][0]
        object.__setattr__(self, "_offsets", offsets)
        object.__setattr__(self, "_width", x)

    @classmethod
    def three_view(cls, width: int = CROP_WIDTH, height: int = CROP_HEIGHT) -> ViewLayout:
        return cls(_ORDER, {v: (width, height) for v in _ORDER})

    @classmethod
    def single_view(cls, width: int = CROP_WIDTH, height: int = CROP_HEIGHT) -> ViewLayout:
        return cls((ViewId.FRONT_CENTER,), {ViewId.FRONT_CENTER: (width, height)})

    def offset(self, view: ViewId) -> int:
        return self._offsets[view]  # type: ignore[attr-defined]

    @property
    def panorama_width(self) -> int:
        return self._width  # type: ignore[attr-defined]

    @property
    def panorama_height(self) -> int:
        return max(self.sizes[v][1] for v in self.views)


@dataclass(frozen=True)
class FovCrop:
    x: float = 0.0
    y: float = 0.0
    width: int = CROP_WIDTH
    height: int = CROP_HEIGHT

    def __post_init__(self) -> None:
        if (self.width, self.height) != (CROP_WIDTH, CROP_HEIGHT):
            raise ValueError(f"crop is fixed to {CROP_WIDTH}x{CROP_HEIGHT}")
        if self.x < 0 or self.y < 0:
            raise ValueError("crop anchor must be non-negative")

    @classmethod
    def centered(cls, layout: ViewLayout) -> FovCrop:
        """Crop centred on the front-center view, clamped into the panorama."""
        w, h = layout.sizes[ViewId.FRONT_CENTER]
        cx = layout.offset(ViewId.FRONT_CENTER) + w / 2
        x = min(max(cx - CROP_WIDTH / 2, 0.0), max(layout.panorama_width - CROP_WIDTH, 0))
        y = min(max(h / 2 - CROP_HEIGHT / 2, 0.0), max(layout.panorama_height - CROP_HEIGHT, 0))
        return cls(float(x), float(y))

    def check_inside(self, layout: ViewLayout) -> None:
        if self.x + self.width > layout.panorama_width or self.y + self.height > layout.panorama_height:
            raise ValueError(
                f"crop at ({self.x}, {self.y}) exceeds panorama "
                f"{layout.panorama_width}x{layout.panorama_height}"
            )


@dataclass(frozen=True)
class AssembledFrame:
    frame_index: int
    light_detections: tuple[Detection, ...]
    sign_detections: tuple[Detection, ...]
    degraded: bool = False
    timestamp: float = 0.0


def validate_views(bundle: FrameBundle, layout: ViewLayout) -> ViewStatus:
    if ViewId.FRONT_CENTER not in bundle.views:
        raise MissingViewError(f"frame {bundle.frame_index}: front_center view missing")
    if not bundle.stitch_ok:
        return ViewStatus.STITCH_FAILURE
    for view in bundle.views:
        if view not in layout.sizes:
            return ViewStatus.STITCH_FAILURE
    for view, size in bundle.view_sizes.items():
        if layout.sizes.get(view) != tuple(size):
            return ViewStatus.STITCH_FAILURE
    return ViewStatus.OK


def remap_to_panorama(d: Detection, layout: ViewLayout) -> Detection:
    if d.view not in layout.sizes:
        raise BoxOutOfViewError(f"view {d.view.value} not in layout")
    w, h = layout.sizes[d.view]
    b = d.box
    if b.x_max > w or b.y_max > h:
        raise BoxOutOfViewError(f"box {b.as_tuple()} exceeds {d.view.value} bounds {w}x{h}")
    box = b.translated(layout.offset(d.view), 0.0, PANORAMA)
    return Detection(box, d.label, d.confidence, d.view)


def _clip(d: Detection, dx: float, dy: float, crop: FovCrop, retention: float) -> Detection | None:
    """Translate by (dx, dy) into crop coordinates, clip, apply the retention rule."""
    b = d.box
    x0 = b.x_min + dx
    y0 = b.y_min + dy
    x1 = b.x_max + dx
    y1 = b.y_max + dy
    cx0 = x0 if x0 > 0.0 else 0.0
    cy0 = y0 if y0 > 0.0 else 0.0
    cx1 = x1 if x1 < crop.width else float(crop.width)
    cy1 = y1 if y1 < crop.height else float(crop.height)
    if cx0 >= cx1 or cy0 >= cy1:
        return None
    if (cx1 - cx0) * (cy1 - cy0) < retention * (x1 - x0) * (y1 - y0):
        return None
    if dx == 0.0 and dy == 0.0 and cx0 == x0 and cy0 == y0 and cx1 == x1 and cy1 == y1:
        return d
    return Detection(BoundingBox(cx0, cy0, cx1, cy1, CROP), d.label, d.confidence, d.view)


def assemble(
    bundle: FrameBundle,
    layout: ViewLayout,
    crop: FovCrop,
    retention: float = 0.5,
    status: ViewStatus | None = None,
) -> AssembledFrame:
    """Compose one frame's views into crop coordinates.

    Remap and crop are fused into a single translation per view; the result
    equals ``remap_to_panorama`` followed by subtracting the crop anchor.
    """
    if status is None:
        status = validate_views(bundle, layout)
    lights: list[Detection] = []
    signs: list[Detection] = []
    if status is ViewStatus.OK:
        offsets = layout._offsets  # type: ignore[attr-defined]
        for view, dets in bundle.views.items():
            if not dets:
                continue
            w, h = layout.sizes[view]
            dx = offsets[view] - crop.x
            dy = -crop.y
            for d in dets:
                if d.box.x_max > w or d.box.y_max > h:
                    raise BoxOutOfViewError(
                        f"frame {bundle.frame_index}: box {d.box.as_tuple()} exceeds {view.value} bounds {w}x{h}"
                    )
                out = _clip(d, dx, dy, crop, retention)
                if out is not None:
                    (lights if type(d.label) is LightClass else signs).append(out)
        degraded = False
    else:
        # front-center only, unremapped; clipping keeps the crop-bounds invariant
        for d in bundle.views[ViewId.FRONT_CENTER]:
            out = _clip(d, 0.0, 0.0, crop, retention)
            if out is not None:
                (lights if type(d.label) is LightClass else signs).append(out)
        degraded = True
    return AssembledFrame(bundle.frame_index, tuple(lights), tuple(signs), degraded, bundle.timestamp)
