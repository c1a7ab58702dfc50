"""Traffic light recognition: confidence filter, relevance prediction, state validation."""
from __future__ import annotations

from collections import Counter, deque
from dataclasses import dataclass, field
from functools import lru_cache
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

from .assembly import AssembledFrame
from .types import Detection, LightClass, LightState, criticality, light_priority_rank

# argmax scan order: highest criticality first, no_detection last
_SCAN = (LightState.RED, LightState.GREEN, LightState.YELLOW, LightState.NO_DETECTION)
_S = {c: criticality(c) for c in LightState}
_TO_STATE = {
    LightClass.RED: LightState.RED,
    LightClass.YELLOW: LightState.YELLOW,
    LightClass.GREEN: LightState.GREEN,
    LightClass.OFF: LightState.NO_DETECTION,
    None: LightState.NO_DETECTION,
}


class FrameOrderError(ValueError):
    pass


def filter_confidence(dets: Iterable[Detection], threshold: float) -> list[Detection]:
    return [d for d in dets if d.confidence >= threshold]


def predict_relevance(dets: Sequence[Detection]) -> LightClass | None:
    """Majority class of the detections; ties at the top count go to the safest class."""
    if len(dets) < 3:
        # one or two detections: a majority means agreement, otherwise a tie
        if not dets:
            return None
        return dets[0].label if len(dets) == 1 else highest_priority(dets)
    counts = Counter(d.label for d in dets)
    top = max(counts.values())
    if top * 2 > len(dets):
        for label, n in counts.items():
            if n == top:
                return label
    return min((c for c, n in counts.items() if n == top), key=light_priority_rank)


def highest_priority(dets: Sequence[Detection]) -> LightClass | None:
    """Per-frame state with relevance prediction bypassed."""
    if not dets:
        return None
    return min((d.label for d in dets), key=light_priority_rank)


def to_validation_state(c: LightClass | None) -> LightState:
    return _TO_STATE[c]


class StateBuffer:
    """Sliding window of the last ``capacity`` per-frame light states, oldest first."""

    __slots__ = ("capacity", "_entries")

    def __init__(self, capacity: int = 3, entries: Iterable[LightState] = ()) -> None:
        if capacity < 1:
            raise ValueError("buffer capacity must be >= 1")
        self.capacity = capacity
        self._entries: deque[LightState] = deque(entries, maxlen=capacity)

    def push(self, state: LightState) -> StateBuffer:
        self._entries.append(state)
        return self

    @property
    def entries(self) -> tuple[LightState, ...]:
        return tuple(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def __repr__(self) -> str:
        return f"StateBuffer({self.capacity}, {[e.value for e in self._entries]})"


def weight(buf: StateBuffer, c: LightState) -> int:
    """Recency- and criticality-weighted vote for ``c``.

    The newest entry has recency N, the one before N-1, and so on. Slots not
    yet filled during warm-up contribute nothing.
    """
    n = buf.capacity
    s = _S[c]
    total = 0
    for k, f in enumerate(reversed(buf._entries)):
        if f is c:
            total += (n - k) * s
    return total


def _weights(n: int, entries: tuple[LightState, ...]) -> dict[LightState, int]:
    w = {LightState.RED: 0, LightState.YELLOW: 0, LightState.GREEN: 0, LightState.NO_DETECTION: 0}
    k = 0
    for f in reversed(entries):
        w[f] += n - k
        k += 1
    for c in w:
        w[c] *= _S[c]
    return w


@dataclass(frozen=True)
class ValidatedLightState:
    state: LightState
    weights: Mapping[LightState, int] = field(default_factory=dict)
    tie_broken: bool = False


def validate(buf: StateBuffer) -> ValidatedLightState:
    """Pick the state with the largest weight.

    Ties between positive weights go to the more critical state. When every
    weight is zero the result is no_detection.
    """
    return _validate(buf.capacity, tuple(buf._entries))


# the result depends only on the buffer contents, of which there are few
@lru_cache(maxsize=1 << 16)
def _validate(n: int, entries: tuple[LightState, ...]) -> ValidatedLightState:
    w = _weights(n, entries)
    best = max(w.values())
    frozen = MappingProxyType(w)
    if best == 0:
        return ValidatedLightState(LightState.NO_DETECTION, frozen, False)
    winners = [c for c in _SCAN if w[c] == best]
    return ValidatedLightState(winners[0], frozen, len(winners) > 1)


@dataclass(frozen=True)
class TLRConfig:
    confidence_threshold: float = 0.5
    buffer_size: int = 3
    enable_rp: bool = True
    enable_sv: bool = True

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence_threshold <= 1.0:
            raise ValueError("confidence_threshold must lie in [0, 1]")
        if self.buffer_size < 1:
            raise ValueError("buffer_size must be >= 1")


class TrafficLightPipeline:
    """Per-stream light pipeline; holds the state buffer between frames."""

    def __init__(self, config: TLRConfig | None = None) -> None:
        self.config = config or TLRConfig()
        self.buffer = StateBuffer(self.config.buffer_size)
        self.last_frame_index: int | None = None

    def reset(self) -> None:
        self.buffer = StateBuffer(self.config.buffer_size)
        self.last_frame_index = None

    def per_frame_state(self, dets: Sequence[Detection]) -> LightState:
        cfg = self.config
        kept = filter_confidence(dets, cfg.confidence_threshold)
        label = predict_relevance(kept) if cfg.enable_rp else highest_priority(kept)
        return _TO_STATE[label]

    def process_frame(self, frame: AssembledFrame) -> ValidatedLightState:
        if self.last_frame_index is not None and frame.frame_index <= self.last_frame_index:
            raise FrameOrderError(
                f"frame index {frame.frame_index} after {self.last_frame_index}"
            )
        self.last_frame_index = frame.frame_index
        state = self.per_frame_state(frame.light_detections)
        if not self.config.enable_sv:
            return ValidatedLightState(state)
        return validate(self.buffer.push(state))


def process_frame(
    pipeline_state: TrafficLightPipeline, frame: AssembledFrame
) -> ValidatedLightState:
    return pipeline_state.process_frame(frame)
