import io
import json
from collections import Counter

import pytest

from tls_assist.detector_io import parse_frame, serialize_frame, stream_session
from tls_assist.sim import (
    TRACKS,
    Camera,
    Event,
    GroundTruthFrame,
    NoiseModel,
    PhaseSchedule,
    Scenario,
    corrupt,
    derive_seed,
    generate_scenario,
    ground_truth_frame,
    open_loop_stream,
    tick_rng,
)
from tls_assist.types import BoundingBox, Detection, LightClass, SignClass, ViewId


def _sign_scenario(pos=50.0, sign=SignClass.STOP):
    return Scenario(200.0, (Event(pos, "sign", sign=sign),))


def test_generation_is_deterministic():
    assert generate_scenario("tiny", 1) == generate_scenario("tiny", 1)
    assert generate_scenario("tiny", 1) != generate_scenario("tiny", 2)


@pytest.mark.parametrize("track, lo, hi", [("tiny", 0, 150), ("short", 150, 500), ("long", 500, 1e9)])
def test_track_lengths(track, lo, hi):
    for seed in range(200):
        length = generate_scenario(track, seed).route_length
        assert lo <= length <= hi
        if track == "tiny":
            assert length < 150
        if track == "long":
            assert length > 500


def test_events_ordered_and_spaced():
    for track in TRACKS:
        for seed in range(50):
            s = generate_scenario(track, seed)
            pos = [e.position for e in s.events]
            assert pos == sorted(pos) and len(set(pos)) == len(pos)
            assert all(0 <= p <= s.route_length for p in pos)
            crossings = [e.position for e in s.intersections]
            assert all(b - a >= 50 - 1e-6 for a, b in zip(crossings, crossings[1:]))


def test_scenario_round_trip():
    s = generate_scenario("short", 9)
    assert Scenario.from_dict(json.loads(json.dumps(s.to_dict()))) == s


def test_scenario_rejects_unordered_events():
    with pytest.raises(ValueError):
        Scenario(100.0, (Event(50, "sign", sign=SignClass.STOP), Event(40, "sign", sign=SignClass.YIELD)))
    with pytest.raises(ValueError):
        Scenario(100.0, (Event(150, "sign", sign=SignClass.STOP),))


def test_schedule_lookup():
    s = PhaseSchedule(red=10, green=10, yellow=3)
    assert s.state_at(5) is LightClass.RED
    assert s.state_at(15) is LightClass.GREEN
    assert s.state_at(21) is LightClass.YELLOW
    assert s.state_at(23 + 5) is LightClass.RED
    assert PhaseSchedule(10, 10, 3, offset=12).state_at(0) is LightClass.GREEN


def test_box_height_pinhole():
    cam = Camera()
    assert cam.box_height(40) == 12.0
    assert cam.box_height(10) == 48.0


def test_gt_sign_height_at_40m():
    gt = ground_truth_frame(_sign_scenario(50.0), ego=10.0, t=0.0)
    (d,) = gt.detections
    assert d.label is SignClass.STOP
    assert d.box.height == pytest.approx(12.0, abs=0.01)


def test_event_behind_ego_not_visible():
    assert ground_truth_frame(_sign_scenario(50.0), ego=60.0, t=0.0).detections == ()


def test_event_beyond_range_not_visible():
    assert ground_truth_frame(_sign_scenario(150.0), ego=0.0, t=0.0).detections == ()


def test_gt_height_strictly_decreasing_in_distance():
    heights = []
    for ego in range(0, 48):
        (d,) = ground_truth_frame(_sign_scenario(50.0), ego=float(ego), t=0.0).detections
        heights.append(d.box.height)
    assert all(a < b for a, b in zip(heights, heights[1:]))


def test_light_class_follows_schedule():
    s = Scenario(200.0, (Event(60.0, "intersection", schedule=PhaseSchedule(10, 10, 3), heads=3),))
    red = ground_truth_frame(s, 20.0, 5.0).detections
    green = ground_truth_frame(s, 20.0, 12.0).detections
    assert len(red) == 3 and {d.label for d in red} == {LightClass.RED}
    assert {d.label for d in green} == {LightClass.GREEN}


def _gt():
    dets = tuple(
        Detection(BoundingBox(100 + 20 * i, 100, 110 + 20 * i, 125, "front_center"), LightClass.RED, 1.0, ViewId.FRONT_CENTER)
        for i in range(3)
    )
    return GroundTruthFrame(4, 0.4, dets)


def test_noiseless_corruption_is_identity():
    nm = NoiseModel.noiseless(base_confidence=0.8)
    out = corrupt(_gt(), nm, tick_rng(1, 4))
    got = out.views[ViewId.FRONT_CENTER]
    assert [(d.box, d.label) for d in got] == [(d.box, d.label) for d in _gt().detections]
    assert {d.confidence for d in got} == {0.8}


def test_total_dropout_empties_frame():
    out = corrupt(_gt(), NoiseModel(dropout_prob=1.0), tick_rng(1, 4))
    assert all(v == () for v in out.views.values())


def test_corruption_deterministic():
    a = serialize_frame(corrupt(_gt(), NoiseModel(duplicate_prob=0.5), tick_rng(7, 4)))
    b = serialize_frame(corrupt(_gt(), NoiseModel(duplicate_prob=0.5), tick_rng(7, 4)))
    assert a == b


def test_noise_rates():
    nm = NoiseModel(dropout_prob=0.3, misclass_prob=0.1, confidence_jitter_sd=0.0)
    kept = flipped = 0
    to = Counter()
    for tick in range(4000):
        for d in corrupt(_gt(), nm, tick_rng(11, tick)).views[ViewId.FRONT_CENTER]:
            kept += 1
            if d.label is not LightClass.RED:
                flipped += 1
                to[d.label] += 1
    assert kept / 12000 == pytest.approx(0.7, abs=0.02)
    assert flipped / kept == pytest.approx(0.1, abs=0.015)
    assert to[LightClass.YELLOW] / flipped == pytest.approx(0.6, abs=0.06)


def test_confusion_rows_validated():
    with pytest.raises(ValueError):
        NoiseModel(light_confusion={LightClass.RED: {LightClass.GREEN: 0.5}})
    with pytest.raises(ValueError):
        NoiseModel(dropout_prob=1.5)


def test_derive_seed_stable():
    assert derive_seed(0, "route", "tiny", 0) == derive_seed(0, "route", "tiny", 0)
    assert derive_seed(0, "route", "tiny", 0) != derive_seed(0, "route", "tiny", 1)
    # pinned so a change of derivation is noticed: seeds feed every stored artefact
    assert derive_seed("x") == 0x2D711642B726B044


def test_open_loop_stream_parses_cleanly():
    for track in TRACKS:
        s = generate_scenario(track, 3)
        lines = [serialize_frame(b) for b in open_loop_stream(s, NoiseModel(duplicate_prob=0.1), 5)]
        for line in lines[:50]:
            parse_frame(line)
        summary = stream_session(lines, io.BytesIO())
        assert summary.errors == 0 and summary.frames == len(lines)
