"""Per-stream TLS-Assist chain: assembly -> lights -> signs -> notice."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

from .assembly import FovCrop, ViewLayout, ViewStatus, assemble, validate_views
from .messages import DEFAULT_TEMPLATES, MessageTemplates, NoticeMessage, compose
from .tlr import TLRConfig, TrafficLightPipeline, ValidatedLightState
from .tsr import NO_SIGN, TSRConfig
from .tsr import process_frame as tsr_process
from .types import FrameBundle, LightState, SignClass

_NO_LIGHT = ValidatedLightState(LightState.NO_DETECTION)


@dataclass(frozen=True)
class PipelineConfig:
    layout: ViewLayout = field(default_factory=ViewLayout.three_view)
    crop: FovCrop | None = None  # None: centred on front_center
    crop_retention: float = 0.5
    tlr: TLRConfig = field(default_factory=TLRConfig)
    tsr: TSRConfig = field(default_factory=TSRConfig)
    enable_tlr: bool = True
    enable_tsr: bool = True
    templates: MessageTemplates = DEFAULT_TEMPLATES

    def __post_init__(self) -> None:
        if self.crop is None:
            object.__setattr__(self, "crop", FovCrop.centered(self.layout))
        self.crop.check_inside(self.layout)
        if not 0.0 < self.crop_retention <= 1.0:
            raise ValueError("crop_retention must lie in (0, 1]")


@dataclass(frozen=True)
class NoticeRecord:
    frame_index: int
    light_state: LightState
    sign: SignClass
    message: str
    weights: Mapping[LightState, int] = field(default_factory=dict)
    tie_broken: bool = False
    degraded: bool = False
    parse_error: bool = False

    @property
    def suppressed(self) -> bool:
        return not self.message


class TLSAssist:
    """Stateful per-stream processor. One instance per ordered frame stream."""

    def __init__(self, config: PipelineConfig | None = None) -> None:
        self.config = config or PipelineConfig()
        self.lights = TrafficLightPipeline(self.config.tlr)

    def process(self, bundle: FrameBundle) -> NoticeRecord:
        return self.step(bundle)[0]

    def step(self, bundle: FrameBundle) -> tuple[NoticeRecord, NoticeMessage]:
        cfg = self.config
        status = validate_views(bundle, cfg.layout)
        frame = assemble(bundle, cfg.layout, cfg.crop, cfg.crop_retention, status)
        light = self.lights.process_frame(frame) if cfg.enable_tlr else _NO_LIGHT
        sign = tsr_process(frame, cfg.tsr) if cfg.enable_tsr else NO_SIGN
        msg = compose(light, sign, cfg.templates, frame.frame_index)
        rec = NoticeRecord(
            frame.frame_index,
            light.state,
            sign.sign,
            msg.text,
            light.weights,
            light.tie_broken,
            status is not ViewStatus.OK,
        )
        return rec, msg
