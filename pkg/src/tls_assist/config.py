"""Run configuration: a YAML document mapped onto the pipeline, noise and harness objects.

Every section is optional; omitted keys take the library defaults. Unknown
keys are rejected with their dotted path so typos never pass silently.
``RunConfig.resolved()`` returns the fully expanded document that output
manifests embed.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping

import yaml

from .assembly import FovCrop, ViewLayout
from .harness import DEFAULT_PENALTIES, BenchSettings, HarnessConfig
from .messages import DEFAULT_LIGHT_TEMPLATES, DEFAULT_SIGN_TEMPLATES, MessageTemplates, TemplateError
from .pipeline import PipelineConfig
from .sim import TRACKS, NoiseModel
from .tlr import TLRConfig
from .tsr import TSRConfig
from .types import LightClass, LightState, SignClass

CONFIG_ENV = "TLS_ASSIST_CONFIG"


class ConfigError(ValueError):
    pass


_PIPELINE_KEYS = {
    "layout", "crop", "crop_retention", "confidence_threshold", "buffer_size",
    "enable_rp", "enable_sv", "enable_tlr", "enable_tsr", "iou_threshold",
    "min_height", "templates",
}
_NOISE_KEYS = {
    "dropout_prob", "misclass_prob", "confidence_jitter_sd", "duplicate_prob",
    "base_confidence", "light_confusion", "sign_confusion",
}
_HARNESS_KEYS = {"speed_tolerance", "speed_grace", "stop_zone", "timeout_speed", "timeout_slack", "count_speeding"}
_TOP_KEYS = {"pipeline", "noise", "penalties", "harness", "seed", "tracks", "routes_per_track", "repetitions", "session"}
_SESSION_KEYS = {"max_error_rate", "window"}


def _check_keys(obj: Any, allowed: set[str], where: str) -> dict:
    if obj is None:
        return {}
    if not isinstance(obj, Mapping):
        raise ConfigError(f"{where or 'config'}: expected a mapping")
    for k in obj:
        if k not in allowed:
            path = f"{where}.{k}" if where else str(k)
            raise ConfigError(f"unknown config key {path!r}")
    return dict(obj)


def _typed(value: Any, kind: type, path: str) -> Any:
    if kind is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false")
        return value
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer")
        return value
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}: expected a number")
    return float(value)


def _templates(raw: Any) -> MessageTemplates:
    t = _check_keys(raw, {"lights", "signs"}, "pipeline.templates")
    lights = dict(DEFAULT_LIGHT_TEMPLATES)
    signs = dict(DEFAULT_SIGN_TEMPLATES)
    states = {c.value: c for c in LightState}
    sign_classes = {s.value: s for s in SignClass}
    for key, value in _check_keys(t.get("lights"), set(states), "pipeline.templates.lights").items():
        if not isinstance(value, str):
            raise ConfigError(f"pipeline.templates.lights.{key}: expected a string")
        lights[states[key]] = value
    for key, value in _check_keys(t.get("signs"), set(sign_classes), "pipeline.templates.signs").items():
        if not isinstance(value, str):
            raise ConfigError(f"pipeline.templates.signs.{key}: expected a string")
        signs[sign_classes[key]] = value
    try:
        return MessageTemplates(lights, signs)
    except TemplateError as exc:
        raise ConfigError(f"pipeline.templates: {exc}") from None


def _confusion(raw: Any, labels: Mapping[str, Any], where: str) -> dict | None:
    if raw is None:
        return None
    table = _check_keys(raw, set(labels), where)
    out = {}
    for src, row in table.items():
        r = _check_keys(row, set(labels), f"{where}.{src}")
        out[labels[src]] = {labels[k]: _typed(v, float, f"{where}.{src}.{k}") for k, v in r.items()}
    return out


def _pipeline(raw: Any) -> PipelineConfig:
    p = _check_keys(raw, _PIPELINE_KEYS, "pipeline")
    layout_name = p.get("layout", "three_view")
    if layout_name == "three_view":
        layout = ViewLayout.three_view()
    elif layout_name == "single_view":
        layout = ViewLayout.single_view()
    else:
        raise ConfigError(f"pipeline.layout: expected three_view or single_view, got {layout_name!r}")
    try:
        crop = None
        if p.get("crop") is not None:
            c = _check_keys(p["crop"], {"x", "y"}, "pipeline.crop")
            crop = FovCrop(_typed(c.get("x", 0), float, "pipeline.crop.x"), _typed(c.get("y", 0), float, "pipeline.crop.y"))
        tlr = TLRConfig(
            confidence_threshold=_typed(p.get("confidence_threshold", 0.5), float, "pipeline.confidence_threshold"),
            buffer_size=_typed(p.get("buffer_size", 3), int, "pipeline.buffer_size"),
            enable_rp=_typed(p.get("enable_rp", True), bool, "pipeline.enable_rp"),
            enable_sv=_typed(p.get("enable_sv", True), bool, "pipeline.enable_sv"),
        )
        tsr = TSRConfig(
            iou_threshold=_typed(p.get("iou_threshold", 0.5), float, "pipeline.iou_threshold"),
            min_height=_typed(p.get("min_height", 12.0), float, "pipeline.min_height"),
        )
        return PipelineConfig(
            layout=layout,
            crop=crop,
            crop_retention=_typed(p.get("crop_retention", 0.5), float, "pipeline.crop_retention"),
            tlr=tlr,
            tsr=tsr,
            enable_tlr=_typed(p.get("enable_tlr", True), bool, "pipeline.enable_tlr"),
            enable_tsr=_typed(p.get("enable_tsr", True), bool, "pipeline.enable_tsr"),
            templates=_templates(p.get("templates")),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"pipeline: {exc}") from None


def _noise(raw: Any) -> NoiseModel:
    n = _check_keys(raw, _NOISE_KEYS, "noise")
    kw: dict[str, Any] = {}
    for k in ("dropout_prob", "misclass_prob", "confidence_jitter_sd", "duplicate_prob", "base_confidence"):
        if k in n:
            kw[k] = _typed(n[k], float, f"noise.{k}")
    lc = _confusion(n.get("light_confusion"), {c.value: c for c in LightClass}, "noise.light_confusion")
    sc = _confusion(
        n.get("sign_confusion"), {s.value: s for s in SignClass if s is not SignClass.OFF}, "noise.sign_confusion"
    )
    if lc is not None:
        kw["light_confusion"] = lc
    if sc is not None:
        kw["sign_confusion"] = sc
    try:
        return NoiseModel(**kw)
    except ValueError as exc:
        raise ConfigError(f"noise: {exc}") from None


@dataclass(frozen=True)
class RunConfig:
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    noise: NoiseModel = field(default_factory=NoiseModel)
    harness: HarnessConfig = field(default_factory=HarnessConfig)
    seed: int = 0
    tracks: tuple[str, ...] = TRACKS
    routes_per_track: int = 10
    repetitions: int = 3
    max_error_rate: float = 0.1
    error_window: int = 100

    @property
    def bench_settings(self) -> BenchSettings:
        return BenchSettings(noise=self.noise, harness=self.harness)

    def resolved(self) -> dict:
        p = self.pipeline
        assert p.crop is not None
        return {
            "pipeline": {
                "layout": "three_view" if len(p.layout.views) == 3 else "single_view",
                "crop": {"x": p.crop.x, "y": p.crop.y},
                "crop_retention": p.crop_retention,
                "confidence_threshold": p.tlr.confidence_threshold,
                "buffer_size": p.tlr.buffer_size,
                "enable_rp": p.tlr.enable_rp,
                "enable_sv": p.tlr.enable_sv,
                "enable_tlr": p.enable_tlr,
                "enable_tsr": p.enable_tsr,
                "iou_threshold": p.tsr.iou_threshold,
                "min_height": p.tsr.min_height,
                "templates": p.templates.as_dict(),
            },
            "noise": {k: v for k, v in self.noise.to_dict().items() if k != "seed"},
            "penalties": dict(self.harness.penalties),
            "harness": {f.name: getattr(self.harness, f.name) for f in fields(HarnessConfig) if f.name in _HARNESS_KEYS},
            "seed": self.seed,
            "tracks": list(self.tracks),
            "routes_per_track": self.routes_per_track,
            "repetitions": self.repetitions,
            "session": {"max_error_rate": self.max_error_rate, "window": self.error_window},
        }


def from_mapping(doc: Any) -> RunConfig:
    top = _check_keys(doc, _TOP_KEYS, "")
    harness_raw = _check_keys(top.get("harness"), _HARNESS_KEYS, "harness")
    penalties_raw = _check_keys(top.get("penalties"), set(DEFAULT_PENALTIES), "penalties")
    hkw: dict[str, Any] = {}
    for k, v in harness_raw.items():
        hkw[k] = _typed(v, bool if k == "count_speeding" else float, f"harness.{k}")
    penalties = dict(DEFAULT_PENALTIES)
    penalties.update({k: _typed(v, float, f"penalties.{k}") for k, v in penalties_raw.items()})
    try:
        harness = HarnessConfig(penalties=penalties, **hkw)
    except ValueError as exc:
        raise ConfigError(f"harness: {exc}") from None

    tracks = top.get("tracks", list(TRACKS))
    if isinstance(tracks, str):
        tracks = [tracks]
    if not isinstance(tracks, list) or not tracks or any(t not in TRACKS for t in tracks):
        raise ConfigError(f"tracks: expected a non-empty list drawn from {list(TRACKS)}")
    session = _check_keys(top.get("session"), _SESSION_KEYS, "session")
    cfg = RunConfig(
        pipeline=_pipeline(top.get("pipeline")),
        noise=_noise(top.get("noise")),
        harness=harness,
        seed=_typed(top.get("seed", 0), int, "seed"),
        tracks=tuple(tracks),
        routes_per_track=_typed(top.get("routes_per_track", 10), int, "routes_per_track"),
        repetitions=_typed(top.get("repetitions", 3), int, "repetitions"),
        max_error_rate=_typed(session.get("max_error_rate", 0.1), float, "session.max_error_rate"),
        error_window=_typed(session.get("window", 100), int, "session.window"),
    )
    if cfg.routes_per_track < 0 or cfg.repetitions < 1:
        raise ConfigError("routes_per_track must be >= 0 and repetitions >= 1")
    if not 0.0 <= cfg.max_error_rate <= 1.0 or cfg.error_window < 1:
        raise ConfigError("session.max_error_rate must lie in [0, 1] and session.window be >= 1")
    return cfg


def load_config(path: str | os.PathLike | None = None) -> RunConfig:
    """Load from ``path``, else from ``$TLS_ASSIST_CONFIG``, else defaults."""
    if path is None:
        path = os.environ.get(CONFIG_ENV) or None
    if path is None:
        return RunConfig()
    text = Path(path).read_text()  # OSError propagates: an I/O failure, not a bad config
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from None
    return from_mapping(doc)


def with_overrides(cfg: RunConfig, **kw: Any) -> RunConfig:
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None})
