"""Notice message generation from template dictionaries."""
from __future__ import annotations

import string
from dataclasses import dataclass, field
from typing import Mapping

from .tlr import ValidatedLightState
from .tsr import PrioritizedSign
from .types import SPEED_LIMIT_KMH, LightState, SignClass

DEFAULT_LIGHT_TEMPLATES: dict[LightState, str] = {
    LightState.RED: "Red light ahead, stop the vehicle!",
    LightState.YELLOW: "Yellow light ahead, prepare to stop.",
    LightState.GREEN: "Green light ahead, proceed carefully.",
    LightState.NO_DETECTION: "",
}

DEFAULT_SIGN_TEMPLATES: dict[SignClass, str] = {
    SignClass.STOP: "Stop sign ahead, come to a complete stop.",
    SignClass.YIELD: "Yield sign ahead, give way to other traffic.",
    SignClass.SPEED_LIMIT_30: "Limit speed to {speed} km/h.",
    SignClass.SPEED_LIMIT_60: "Limit speed to {speed} km/h.",
    SignClass.SPEED_LIMIT_90: "Limit speed to {speed} km/h.",
    SignClass.OFF: "",
}

_EMPTY_LIGHT = (LightState.NO_DETECTION,)
_EMPTY_SIGN = (SignClass.OFF,)


class TemplateError(ValueError):
    pass


def _render(key: str, template: str, speed: int | None) -> str:
    for _, name, spec, conv in string.Formatter().parse(template):
        if name is None:
            continue
        if name != "speed" or speed is None or spec or conv:
            raise TemplateError(f"template {key!r}: unfillable placeholder {{{name}}}")
    return template.format(speed=speed) if speed is not None else template.format()


@dataclass(frozen=True)
class MessageTemplates:
    """Light and sign dictionaries, validated and pre-rendered at construction.

    Speed-limit templates may use ``{speed}``; it is filled with 30, 60 or 90.
    """

    light_templates: Mapping[LightState, str] = field(default_factory=lambda: dict(DEFAULT_LIGHT_TEMPLATES))
    sign_templates: Mapping[SignClass, str] = field(default_factory=lambda: dict(DEFAULT_SIGN_TEMPLATES))

    def __post_init__(self) -> None:
        lights: dict[LightState, str] = {}
        signs: dict[SignClass, str] = {}
        for c in LightState:
            if c not in self.light_templates:
                raise TemplateError(f"missing light template {c.value!r}")
            lights[c] = _render(c.value, self.light_templates[c], None)
        for s in SignClass:
            if s not in self.sign_templates:
                raise TemplateError(f"missing sign template {s.value!r}")
            signs[s] = _render(s.value, self.sign_templates[s], SPEED_LIMIT_KMH.get(s))
        for key, text in [*lights.items(), *signs.items()]:
            empty_ok = key in _EMPTY_LIGHT or key in _EMPTY_SIGN
            if empty_ok and text:
                raise TemplateError(f"template {key.value!r} must be empty")
            if not empty_ok and not text.strip():
                raise TemplateError(f"template {key.value!r} must be non-empty")
            if text != text.strip():
                raise TemplateError(f"template {key.value!r} has surrounding whitespace")
        object.__setattr__(self, "_lights", lights)
        object.__setattr__(self, "_signs", signs)
        object.__setattr__(self, "_inv_lights", {v: k for k, v in lights.items()})
        object.__setattr__(self, "_inv_signs", {v: k for k, v in reversed(signs.items())})
        parts = {}
        for c, lp in lights.items():
            for sc, sp in signs.items():
                parts[c, sc] = (lp + " " + sp if lp and sp else lp or sp, lp, sp)
        object.__setattr__(self, "_parts", parts)

    def light(self, state: LightState) -> str:
        return self._lights[state]  # type: ignore[attr-defined]

    def sign(self, sign: SignClass) -> str:
        return self._signs[sign]  # type: ignore[attr-defined]

    def parts(self, state: LightState, sign: SignClass) -> tuple[str, str, str]:
        """(full text, light part, sign part) for one state/sign pair."""
        return self._parts[state, sign]  # type: ignore[attr-defined]

    def interpret(self, light_part: str, sign_part: str) -> tuple[LightState, SignClass]:
        """Inverse lookup used by message consumers."""
        return (
            self._inv_lights.get(light_part, LightState.NO_DETECTION),  # type: ignore[attr-defined]
            self._inv_signs.get(sign_part, SignClass.OFF),  # type: ignore[attr-defined]
        )

    def as_dict(self) -> dict[str, dict[str, str]]:
        return {
            "lights": {c.value: self.light_templates[c] for c in LightState},
            "signs": {s.value: self.sign_templates[s] for s in SignClass},
        }


DEFAULT_TEMPLATES = MessageTemplates()


@dataclass(frozen=True)
class NoticeMessage:
    text: str
    light_part: str
    sign_part: str
    frame_index: int

    @property
    def suppressed(self) -> bool:
        return not self.text


def light_message(state: LightState, t: MessageTemplates = DEFAULT_TEMPLATES) -> str:
    return t.light(state)


def sign_message(sign: PrioritizedSign | SignClass, t: MessageTemplates = DEFAULT_TEMPLATES) -> str:
    return t.sign(sign.sign if isinstance(sign, PrioritizedSign) else sign)


def compose(
    light: ValidatedLightState | LightState,
    sign: PrioritizedSign | SignClass,
    t: MessageTemplates = DEFAULT_TEMPLATES,
    frame_index: int = 0,
) -> NoticeMessage:
    state = light.state if isinstance(light, ValidatedLightState) else light
    s = sign.sign if isinstance(sign, PrioritizedSign) else sign
    return NoticeMessage(*t.parts(state, s), frame_index)
