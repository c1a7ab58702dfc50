import itertools

import pytest

from tls_assist.messages import (
    DEFAULT_LIGHT_TEMPLATES,
    DEFAULT_SIGN_TEMPLATES,
    DEFAULT_TEMPLATES,
    MessageTemplates,
    TemplateError,
    compose,
    light_message,
    sign_message,
)
from tls_assist.tlr import ValidatedLightState
from tls_assist.tsr import PrioritizedSign
from tls_assist.types import LightState, SignClass


def test_light_messages():
    assert light_message(LightState.RED) == "Red light ahead, stop the vehicle!"
    assert light_message(LightState.NO_DETECTION) == ""
    assert light_message(LightState.GREEN)


def test_sign_messages():
    assert sign_message(SignClass.SPEED_LIMIT_60) == "Limit speed to 60 km/h."
    assert sign_message(SignClass.SPEED_LIMIT_30) == "Limit speed to 30 km/h."
    assert sign_message(SignClass.OFF) == ""
    assert sign_message(PrioritizedSign(SignClass.STOP))


def test_compose_examples():
    assert (
        compose(LightState.RED, SignClass.SPEED_LIMIT_30).text
        == "Red light ahead, stop the vehicle! Limit speed to 30 km/h."
    )
    m = compose(LightState.NO_DETECTION, SignClass.OFF)
    assert m.text == "" and m.suppressed
    stop = compose(LightState.NO_DETECTION, SignClass.STOP)
    assert stop.text == sign_message(SignClass.STOP) and not stop.text.startswith(" ")
    assert compose(ValidatedLightState(LightState.RED), PrioritizedSign(SignClass.OFF)).text == light_message(LightState.RED)


def test_compose_laws_all_pairs():
    for state, s in itertools.product(LightState, SignClass):
        m = compose(state, s, DEFAULT_TEMPLATES, 7)
        lp, sp = light_message(state), sign_message(s)
        assert m.text == " ".join(p for p in (lp, sp) if p)
        if lp:
            assert m.text.startswith(lp)
        assert m.suppressed == (not lp and not sp)
        assert (m.light_part, m.sign_part, m.frame_index) == (lp, sp, 7)


def test_interpret_inverts_templates():
    for state, s in itertools.product(LightState, SignClass):
        m = compose(state, s)
        got = DEFAULT_TEMPLATES.interpret(m.light_part, m.sign_part)
        assert got[0] is state
        # speed-limit templates render distinct strings, so the sign is recoverable too
        assert got[1] is s


def test_missing_template_rejected():
    lights = dict(DEFAULT_LIGHT_TEMPLATES)
    del lights[LightState.YELLOW]
    with pytest.raises(TemplateError, match="yellow"):
        MessageTemplates(lights, DEFAULT_SIGN_TEMPLATES)


@pytest.mark.parametrize(
    "key, text",
    [
        (SignClass.STOP, "Stop for {name}"),
        (SignClass.STOP, ""),
        (SignClass.OFF, "nothing"),
        (SignClass.YIELD, " Yield "),
        (SignClass.STOP, "Stop at {speed}"),
    ],
)
def test_bad_sign_templates(key, text):
    signs = dict(DEFAULT_SIGN_TEMPLATES)
    signs[key] = text
    with pytest.raises(TemplateError):
        MessageTemplates(DEFAULT_LIGHT_TEMPLATES, signs)


def test_custom_template_used():
    lights = dict(DEFAULT_LIGHT_TEMPLATES)
    lights[LightState.GREEN] = "Go."
    t = MessageTemplates(lights, DEFAULT_SIGN_TEMPLATES)
    assert compose(LightState.GREEN, SignClass.SPEED_LIMIT_90, t).text == "Go. Limit speed to 90 km/h."
