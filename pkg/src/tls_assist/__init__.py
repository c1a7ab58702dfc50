"""Redundancy layer for language-driven driving agents.

Traffic-light and traffic-sign detections are assembled across camera
views, filtered and validated over time, and turned into short notices an
agent can act on. A seeded simulator and closed-loop harness score the
effect of each component.
"""
__version__ = "0.1.0"

from .messages import DEFAULT_TEMPLATES, MessageTemplates, NoticeMessage, compose
from .pipeline import NoticeRecord, PipelineConfig, TLSAssist
from .tlr import TLRConfig, TrafficLightPipeline, ValidatedLightState
from .tsr import PrioritizedSign, TSRConfig
from .types import BoundingBox, Detection, FrameBundle, LightClass, LightState, SignClass, ViewId

__all__ = [
    "BoundingBox",
    "DEFAULT_TEMPLATES",
    "Detection",
    "FrameBundle",
    "LightClass",
    "LightState",
    "MessageTemplates",
    "NoticeMessage",
    "NoticeRecord",
    "PipelineConfig",
    "PrioritizedSign",
    "SignClass",
    "TLRConfig",
    "TLSAssist",
    "TSRConfig",
    "TrafficLightPipeline",
    "ValidatedLightState",
    "ViewId",
    "compose",
]
