import itertools
import random
from collections import Counter

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import light
from tls_assist.assembly import AssembledFrame
from tls_assist.tlr import (
    FrameOrderError,
    StateBuffer,
    TLRConfig,
    TrafficLightPipeline,
    filter_confidence,
    highest_priority,
    predict_relevance,
    to_validation_state,
    validate,
    weight,
)
from tls_assist.types import LightClass, LightState

R, Y, G, ND = LightState.RED, LightState.YELLOW, LightState.GREEN, LightState.NO_DETECTION
S = {R: 3, G: 2, Y: 1, ND: 0}


def oracle(entries, n):
    """Literal summation over k = 0 (newest) .. n-1, then scan for the maximum."""
    newest_first = list(reversed(entries))
    w = {}
    for c in (R, G, Y, ND):
        total = 0
        for k in range(n):
            f = newest_first[k] if k < len(newest_first) else ND
            total += (n - k) * S[c] * (1 if f == c else 0)
        w[c] = total
    best = max(w.values())
    if best == 0:
        return ND, w, False
    tied = sorted((c for c in w if w[c] == best), key=lambda c: -S[c])
    return tied[0], w, len(tied) > 1


def frame(i, *dets):
    return AssembledFrame(i, tuple(dets), ())


def test_filter_confidence_examples():
    dets = [light("red", 0.9), light("red", 0.4), light("green", 0.5)]
    assert filter_confidence(dets, 0.5) == [dets[0], dets[2]]
    assert filter_confidence(dets, 0.0) == dets
    assert filter_confidence([], 0.5) == []


@pytest.mark.parametrize(
    "labels, expected",
    [
        (["red", "red", "green"], LightClass.RED),
        (["red", "green"], LightClass.RED),
        (["green", "green", "off"], LightClass.GREEN),
        (["green", "yellow"], LightClass.YELLOW),
        (["green", "green", "red", "red", "off"], LightClass.RED),
        (["green", "green", "red", "yellow", "off"], LightClass.GREEN),
        ([], None),
    ],
)
def test_predict_relevance_examples(labels, expected):
    assert predict_relevance([light(c) for c in labels]) == expected


@given(st.lists(st.sampled_from(list(LightClass)), max_size=7), st.randoms())
def test_predict_relevance_permutation_invariant(labels, rnd):
    dets = [light(c) for c in labels]
    shuffled = dets[:]
    rnd.shuffle(shuffled)
    assert predict_relevance(dets) == predict_relevance(shuffled)


def test_highest_priority():
    assert highest_priority([light("green"), light("yellow"), light("green")]) == LightClass.YELLOW
    assert highest_priority([]) is None


@pytest.mark.parametrize(
    "c, s", [(LightClass.OFF, ND), (None, ND), (LightClass.RED, R), (LightClass.YELLOW, Y), (LightClass.GREEN, G)]
)
def test_to_validation_state(c, s):
    assert to_validation_state(c) is s


def test_push_and_eviction():
    buf = StateBuffer(3, [R, G])
    assert buf.push(Y).entries == (R, G, Y)
    assert buf.push(R).entries == (G, Y, R)
    assert StateBuffer(3).push(R).entries == (R,)
    with pytest.raises(ValueError):
        StateBuffer(0)


def test_weight_examples():
    assert weight(StateBuffer(3, [R, R, G]), R) == 9
    assert weight(StateBuffer(3, [R, R, G]), G) == 6
    assert weight(StateBuffer(3, [R, R, R]), R) == 18
    for combo in itertools.product((R, Y, G, ND), repeat=3):
        assert weight(StateBuffer(3, combo), ND) == 0


def test_validate_examples():
    v = validate(StateBuffer(3, [R, R, G]))
    assert (v.state, v.tie_broken) == (R, False)
    v = validate(StateBuffer(3, [ND, R, G]))
    assert (v.state, v.tie_broken, v.weights[R], v.weights[G]) == (R, True, 6, 6)
    v = validate(StateBuffer(3, [ND, ND, ND]))
    assert (v.state, v.tie_broken) == (ND, False)


def test_validate_matches_oracle_with_warmup():
    for n in range(1, 5):
        for size in range(n + 1):
            for combo in itertools.product((R, Y, G, ND), repeat=size):
                v = validate(StateBuffer(n, combo))
                assert (v.state, dict(v.weights), v.tie_broken) == oracle(combo, n)


def test_unanimity_and_no_detection_iff_zero():
    for c in (R, Y, G):
        assert validate(StateBuffer(3, [c, c, c])).state is c
    for combo in itertools.product((R, Y, G, ND), repeat=3):
        v = validate(StateBuffer(3, combo))
        zero = all(v.weights[c] == 0 for c in (R, G, Y))
        assert (v.state is ND) == zero


def test_pipeline_three_reds():
    p = TrafficLightPipeline()
    out = [p.process_frame(frame(i, light("red", 0.9))) for i in range(3)]
    assert out[-1].state is R


def test_pipeline_without_validation_follows_frame():
    p = TrafficLightPipeline(TLRConfig(enable_sv=False))
    for i in range(3):
        p.process_frame(frame(i, light("red", 0.9)))
    assert p.process_frame(frame(3, light("green", 0.8))).state is G
    assert len(p.buffer) == 0


def test_low_confidence_frame_is_no_detection():
    p = TrafficLightPipeline(TLRConfig(confidence_threshold=0.5))
    assert p.per_frame_state([light("red", 0.2), light("green", 0.2)]) is ND


def test_relevance_bypass_uses_priority():
    dets = [light("green"), light("green"), light("red")]
    assert TrafficLightPipeline(TLRConfig(enable_rp=False)).per_frame_state(dets) is R
    assert TrafficLightPipeline(TLRConfig(enable_rp=True)).per_frame_state(dets) is G


def test_out_of_order_frames_rejected():
    p = TrafficLightPipeline()
    p.process_frame(frame(5))
    with pytest.raises(FrameOrderError):
        p.process_frame(frame(5))
    p.reset()
    p.process_frame(frame(0))


def test_stateless_when_both_bypassed():
    rng = random.Random(3)
    frames = []
    for i in range(200):
        frames.append(frame(i, *(light(rng.choice(list(LightClass)), rng.random()) for _ in range(rng.randint(0, 4)))))
    p = TrafficLightPipeline(TLRConfig(enable_rp=False, enable_sv=False))
    seq = [p.process_frame(f).state for f in frames]
    fresh = [TrafficLightPipeline(TLRConfig(enable_rp=False, enable_sv=False)).process_frame(f).state for f in frames]
    assert seq == fresh


def test_memoised_results_are_read_only():
    p = TrafficLightPipeline()
    v = p.process_frame(frame(0, light("red")))
    with pytest.raises(TypeError):
        v.weights[R] = 0  # type: ignore[index]
    assert p.process_frame(frame(1, light("red"))).weights[R] == 15


@given(st.lists(st.lists(st.sampled_from(list(LightClass)), max_size=4), min_size=1, max_size=30))
def test_pipeline_matches_oracle_chain(frames):
    p = TrafficLightPipeline()
    history = []
    for i, labels in enumerate(frames):
        dets = [light(c) for c in labels]
        counts = Counter(labels)
        if not labels:
            label = None
        else:
            top = max(counts.values())
            label = min((c for c in counts if counts[c] == top), key=[LightClass.RED, LightClass.YELLOW, LightClass.GREEN, LightClass.OFF].index)
        history.append({LightClass.RED: R, LightClass.YELLOW: Y, LightClass.GREEN: G}.get(label, ND))
        got = p.process_frame(frame(i, *dets))
        assert got.state is oracle(history[-3:], 3)[0]
