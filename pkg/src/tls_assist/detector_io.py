"""Line-delimited JSON ingestion of detection frames and emission of notices.

Frame record (one JSON object per line)::

    {"schema_version": 1, "frame_index": 12, "timestamp": 1.2, "stitch_ok": true,
     "views": {"front_center": [{"kind": "light", "class": "red",
                                 "confidence": 0.9, "box": [100, 50, 120, 90]}]},
     "view_sizes": {"front_center": [1280, 720]}}

``view_sizes`` is optional. Notice records are written in a fixed key order
so the output is byte-stable.
"""
from __future__ import annotations

import json
import logging
import subprocess
from dataclasses import dataclass, field
from typing import BinaryIO, Iterable, Iterator

from .assembly import BoxOutOfViewError, MissingViewError
from .pipeline import NoticeRecord, PipelineConfig, TLSAssist
from .types import BoundingBox, Detection, FrameBundle, LightClass, LightState, SignClass, ViewId

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
_VIEW_ORDER = (ViewId.FRONT_LEFT, ViewId.FRONT_CENTER, ViewId.FRONT_RIGHT)
_VIEWS = {v.value: v for v in ViewId}
_LIGHTS = {c.value: c for c in LightClass}
_SIGNS = {c.value: c for c in SignClass}
_STATES = {c.value: c for c in LightState}
_STATE_ORDER = (LightState.RED, LightState.YELLOW, LightState.GREEN, LightState.NO_DETECTION)
_FRAME_KEYS = {"schema_version", "frame_index", "timestamp", "stitch_ok", "views", "view_sizes"}
_DET_KEYS = {"kind", "class", "confidence", "box"}


class FrameParseError(ValueError):
    def __init__(self, message: str, path: str = "", line_no: int | None = None) -> None:
        self.message = message
        self.path = path
        self.line_no = line_no
        where = f"line {line_no}: " if line_no is not None else ""
        at = f" at {path}" if path else ""
        super().__init__(f"{where}{message}{at}")


def _num(v: object, path: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise FrameParseError("expected a number", path)
    return float(v)


def _int(v: object, path: str) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise FrameParseError("expected an integer", path)
    return v


def _detection(obj: object, view: ViewId, path: str) -> Detection:
    if not isinstance(obj, dict):
        raise FrameParseError("expected an object", path)
    extra = obj.keys() - _DET_KEYS
    if extra:
        raise FrameParseError(f"unknown field {sorted(extra)[0]!r}", path)
    kind = obj.get("kind")
    cls = obj.get("class")
    if kind == "light":
        label = _LIGHTS.get(cls)  # type: ignore[arg-type]
    elif kind == "sign":
        label = _SIGNS.get(cls)  # type: ignore[arg-type]
    else:
        raise FrameParseError(f"unknown kind {kind!r}", path + ".kind")
    if label is None:
        raise FrameParseError(f"unknown {kind} class {cls!r}", path + ".class")
    conf = _num(obj.get("confidence"), path + ".confidence")
    if not 0.0 <= conf <= 1.0:
        raise FrameParseError(f"confidence {conf} outside [0, 1]", path + ".confidence")
    box = obj.get("box")
    if not isinstance(box, list) or len(box) != 4:
        raise FrameParseError("box must be [x_min, y_min, x_max, y_max]", path + ".box")
    coords = [_num(c, f"{path}.box[{i}]") for i, c in enumerate(box)]
    try:
        bb = BoundingBox(coords[0], coords[1], coords[2], coords[3], view.value)
    except ValueError as exc:
        raise FrameParseError(str(exc), path + ".box") from None
    return Detection(bb, label, conf, view)


def parse_frame(line: bytes | str, line_no: int | None = None) -> FrameBundle:
    try:
        try:
            obj = json.loads(line)
        except ValueError as exc:
            raise FrameParseError(f"malformed JSON: {exc}") from None
        if not isinstance(obj, dict):
            raise FrameParseError("record must be an object")
        extra = obj.keys() - _FRAME_KEYS
        if extra:
            raise FrameParseError(f"unknown field {sorted(extra)[0]!r}", sorted(extra)[0])
        if obj.get("schema_version") != SCHEMA_VERSION:
            raise FrameParseError(f"unsupported schema_version {obj.get('schema_version')!r}", "schema_version")
        index = _int(obj.get("frame_index"), "frame_index")
        ts = _num(obj.get("timestamp"), "timestamp")
        stitch_ok = obj.get("stitch_ok", True)
        if not isinstance(stitch_ok, bool):
            raise FrameParseError("expected a boolean", "stitch_ok")
        raw_views = obj.get("views")
        if not isinstance(raw_views, dict):
            raise FrameParseError("expected an object", "views")
        views: dict[ViewId, tuple[Detection, ...]] = {}
        for name, dets in raw_views.items():
            view = _VIEWS.get(name)
            if view is None:
                raise FrameParseError(f"unknown view {name!r}", f"views.{name}")
            if not isinstance(dets, list):
                raise FrameParseError("expected an array", f"views.{name}")
            views[view] = tuple(_detection(d, view, f"views.{name}[{i}]") for i, d in enumerate(dets))
        if ViewId.FRONT_CENTER not in views:
            raise FrameParseError("front_center view missing", "views.front_center")
        sizes: dict[ViewId, tuple[int, int]] = {}
        raw_sizes = obj.get("view_sizes", {})
        if not isinstance(raw_sizes, dict):
            raise FrameParseError("expected an object", "view_sizes")
        for name, wh in raw_sizes.items():
            view = _VIEWS.get(name)
            path = f"view_sizes.{name}"
            if view is None:
                raise FrameParseError(f"unknown view {name!r}", path)
            if not isinstance(wh, list) or len(wh) != 2:
                raise FrameParseError("expected [width, height]", path)
            sizes[view] = (_int(wh[0], path + "[0]"), _int(wh[1], path + "[1]"))
        return FrameBundle(index, ts, views, stitch_ok, sizes)
    except FrameParseError as exc:
        if line_no is None:
            raise
        raise FrameParseError(exc.message, exc.path, line_no) from None


def _box(b: BoundingBox) -> list[float]:
    return [round(b.x_min, 2), round(b.y_min, 2), round(b.x_max, 2), round(b.y_max, 2)]


def frame_to_dict(bundle: FrameBundle) -> dict:
    views = {}
    for v in _VIEW_ORDER:
        if v in bundle.views:
            views[v.value] = [
                {"kind": d.kind, "class": d.label.value, "confidence": d.confidence, "box": _box(d.box)}
                for d in bundle.views[v]
            ]
    out = {
        "schema_version": SCHEMA_VERSION,
        "frame_index": bundle.frame_index,
        "timestamp": bundle.timestamp,
        "stitch_ok": bundle.stitch_ok,
        "views": views,
    }
    if bundle.view_sizes:
        out["view_sizes"] = {v.value: list(bundle.view_sizes[v]) for v in _VIEW_ORDER if v in bundle.view_sizes}
    return out


def serialize_frame(bundle: FrameBundle) -> bytes:
    """One canonical line (boxes rounded to 2 decimals), newline-terminated."""
    return json.dumps(frame_to_dict(bundle), separators=(",", ":")).encode() + b"\n"


def emit_notice(rec: NoticeRecord) -> bytes:
    obj = {
        "frame_index": rec.frame_index,
        "light_state": rec.light_state.value,
        "sign": rec.sign.value,
        "message": rec.message,
        "suppressed": rec.suppressed,
        "diagnostics": {
            "weights": {c.value: rec.weights[c] for c in _STATE_ORDER if c in rec.weights},
            "tie_broken": rec.tie_broken,
            "degraded": rec.degraded,
            "parse_error": rec.parse_error,
        },
    }
    return json.dumps(obj, separators=(",", ":")).encode() + b"\n"


def parse_notice(line: bytes | str) -> NoticeRecord:
    obj = json.loads(line)
    diag = obj["diagnostics"]
    return NoticeRecord(
        frame_index=obj["frame_index"],
        light_state=_STATES[obj["light_state"]],
        sign=_SIGNS[obj["sign"]],
        message=obj["message"],
        weights={_STATES[k]: v for k, v in diag["weights"].items()},
        tie_broken=diag["tie_broken"],
        degraded=diag["degraded"],
        parse_error=diag["parse_error"],
    )


@dataclass
class SessionSummary:
    frames: int = 0
    errors: int = 0
    aborted: bool = False
    error_log: list[str] = field(default_factory=list)

    @property
    def error_rate(self) -> float:
        return self.errors / self.frames if self.frames else 0.0

    def as_dict(self) -> dict:
        return {
            "frames": self.frames,
            "errors": self.errors,
            "aborted": self.aborted,
            "error_rate": round(self.error_rate, 6),
            "error_log": list(self.error_log),
        }


def stream_session(
    source: Iterable[bytes],
    sink: BinaryIO,
    config: PipelineConfig | None = None,
    max_error_rate: float = 0.1,
    window: int = 100,
) -> SessionSummary:
    """Drive the pipeline over a frame stream, one notice line per input frame.

    A malformed frame is replaced by an empty frame and counted. The session
    aborts once errors exceed ``max_error_rate`` of the frames seen, with the
    denominator floored at ``window`` while the stream is still running and
    checked against the true total at end of stream.
    """
    assist = TLSAssist(config)
    summary = SessionSummary()
    last_index = -1
    for line_no, line in enumerate(source, start=1):
        if not line.strip():
            continue
        summary.frames += 1
        rec: NoticeRecord | None = None
        try:
            bundle = parse_frame(line, line_no)
            if bundle.frame_index <= last_index:
                raise FrameParseError(
                    f"frame_index {bundle.frame_index} not after {last_index}", "frame_index", line_no
                )
            rec = assist.process(bundle)
            last_index = bundle.frame_index
        except (FrameParseError, BoxOutOfViewError, MissingViewError) as exc:
            summary.errors += 1
            summary.error_log.append(str(exc))
            log.debug("frame error: %s", exc)
            last_index += 1
            empty = FrameBundle(last_index, 0.0, {ViewId.FRONT_CENTER: ()})
            r = assist.process(empty)
            rec = NoticeRecord(
                r.frame_index, r.light_state, r.sign, r.message, r.weights, r.tie_broken, r.degraded, True
            )
        sink.write(emit_notice(rec))
        if summary.errors > max_error_rate * max(summary.frames, window):
            summary.aborted = True
            break
    if summary.frames and summary.errors > max_error_rate * summary.frames:
        summary.aborted = True
    return summary


def adapter_frames(cmd: list[str], refs: Iterable[str]) -> Iterator[bytes]:
    """Run an external detector in lockstep: one sensor reference in, one frame line out."""
    proc = subprocess.Popen(cmd, stdin=subprocess.PIPE, stdout=subprocess.PIPE)
    assert proc.stdin is not None and proc.stdout is not None
    try:
        for ref in refs:
            proc.stdin.write(ref.rstrip("\n").encode() + b"\n")
            proc.stdin.flush()
            line = proc.stdout.readline()
            if not line:
                raise OSError(f"detector adapter exited early (status {proc.poll()})")
            yield line
    finally:
        proc.stdin.close()
        proc.stdout.close()
        proc.wait()
