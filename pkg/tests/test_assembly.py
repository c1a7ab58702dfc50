import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import bundle, light, sign
from tls_assist.assembly import (
    BoxOutOfViewError,
    FovCrop,
    MissingViewError,
    ViewLayout,
    ViewStatus,
    assemble,
    remap_to_panorama,
    validate_views,
)
from tls_assist.types import BoundingBox, Detection, FrameBundle, LightClass, SignClass, ViewId

FL, FC, FR = ViewId.FRONT_LEFT, ViewId.FRONT_CENTER, ViewId.FRONT_RIGHT
THREE = ViewLayout.three_view()
ALL = (FL, FC, FR)


def test_conforming_views_ok():
    b = bundle(0, views=ALL, sizes={v: (1280, 720) for v in ALL})
    assert validate_views(b, THREE) is ViewStatus.OK


def test_size_mismatch_is_stitch_failure():
    sizes = {FL: (1280, 600), FC: (1280, 720), FR: (1280, 720)}
    assert validate_views(bundle(0, views=ALL, sizes=sizes), THREE) is ViewStatus.STITCH_FAILURE


def test_flagged_stitch_failure():
    assert validate_views(bundle(0, views=ALL, stitch_ok=False), THREE) is ViewStatus.STITCH_FAILURE


def test_view_outside_layout_is_stitch_failure():
    b = bundle(0, views=ALL)
    assert validate_views(b, ViewLayout.single_view()) is ViewStatus.STITCH_FAILURE


def test_missing_front_center_is_hard_error():
    b = FrameBundle(0, 0.0, {FL: ()})
    with pytest.raises(MissingViewError):
        validate_views(b, THREE)
    with pytest.raises(MissingViewError):
        assemble(b, THREE, FovCrop.centered(THREE))


@pytest.mark.parametrize(
    "view, expected",
    [(FL, (10, 10, 50, 50)), (FR, (2570, 10, 2610, 50))],
)
def test_remap_offsets(view, expected):
    d = light("red", box=(10, 10, 50, 50), view=view)
    assert remap_to_panorama(d, THREE).box.as_tuple() == expected


def test_remap_full_center_view():
    d = light("red", box=(0, 0, 1280, 720))
    assert remap_to_panorama(d, THREE).box.as_tuple() == (1280, 0, 2560, 720)


def test_remap_rejects_box_beyond_view():
    with pytest.raises(BoxOutOfViewError):
        remap_to_panorama(light("red", box=(1200, 10, 1300, 50)), THREE)


def test_centered_crop_matches_front_center():
    assert (FovCrop.centered(THREE).x, FovCrop.centered(THREE).y) == (1280.0, 0.0)
    single = ViewLayout.single_view()
    assert (FovCrop.centered(single).x, FovCrop.centered(single).y) == (0.0, 0.0)


def test_crop_size_is_fixed():
    with pytest.raises(ValueError):
        FovCrop(0, 0, 640, 480)


def test_crop_must_fit_panorama():
    with pytest.raises(ValueError):
        FovCrop(2600, 0).check_inside(THREE)


def test_crop_translation():
    b = bundle(0, light("red", box=(20, 100, 120, 200)), views=ALL)
    out = assemble(b, THREE, FovCrop(1280, 0))
    assert [d.box.as_tuple() for d in out.light_detections] == [(20, 100, 120, 200)]
    assert not out.degraded


def test_single_view_identity_crop_passes_through():
    dets = [light("red", box=(0, 0, 30, 60)), sign("stop", box=(1250, 690, 1280, 720))]
    b = bundle(3, *dets)
    out = assemble(b, ViewLayout.single_view(), FovCrop(0, 0))
    assert list(out.light_detections) == dets[:1]
    assert list(out.sign_detections) == dets[1:]


def test_stitch_failure_keeps_front_center_only():
    b = bundle(
        1,
        light("red", box=(100, 100, 110, 125)),
        light("green", box=(100, 100, 110, 125), view=FL),
        sign("stop", box=(40, 300, 70, 330), view=FR),
        views=ALL,
        stitch_ok=False,
    )
    out = assemble(b, THREE, FovCrop.centered(THREE))
    assert out.degraded
    assert [d.label for d in out.light_detections] == [LightClass.RED]
    assert out.sign_detections == ()


def test_side_views_fall_outside_default_crop():
    b = bundle(0, sign("stop", box=(40, 300, 70, 330), view=FR), light("red", box=(1200, 0, 1210, 20), view=FL), views=ALL)
    out = assemble(b, THREE, FovCrop.centered(THREE))
    assert out.light_detections == () and out.sign_detections == ()


def test_partial_crop_retention():
    # panorama crop starting at x=1000 sees 60% of the first box and 40% of the second
    crop = FovCrop(1000, 0)
    b = bundle(0, light("red", box=(960, 0, 1060, 10), view=FL), light("green", box=(940, 0, 1040, 10), view=FL), views=ALL)
    out = assemble(b, THREE, crop, retention=0.5)
    assert [d.label for d in out.light_detections] == [LightClass.RED]
    assert out.light_detections[0].box.as_tuple() == (0, 0, 60, 10)


def _oracle(bundle: FrameBundle, layout: ViewLayout, crop: FovCrop, retention: float):
    """Remap every box, shift by the crop anchor, clip, then keep by area fraction."""
    kept = []
    for view in layout.views:
        for d in bundle.views.get(view, ()):
            p = remap_to_panorama(d, layout).box
            x0, y0, x1, y1 = p.x_min - crop.x, p.y_min - crop.y, p.x_max - crop.x, p.y_max - crop.y
            cx0, cy0, cx1, cy1 = max(x0, 0), max(y0, 0), min(x1, 1280), min(y1, 720)
            if cx0 < cx1 and cy0 < cy1 and (cx1 - cx0) * (cy1 - cy0) >= retention * (x1 - x0) * (y1 - y0):
                kept.append((d.label, d.confidence, (cx0, cy0, cx1, cy1)))
    return kept


coords = st.integers(0, 1279)


@st.composite
def view_detections(draw):
    views = {}
    for v in ALL:
        dets = []
        for _ in range(draw(st.integers(0, 4))):
            x0 = draw(st.integers(0, 1270))
            y0 = draw(st.integers(0, 710))
            x1 = draw(st.integers(x0 + 1, 1280))
            y1 = draw(st.integers(y0 + 1, 720))
            label = draw(st.sampled_from([*LightClass, *SignClass]))
            conf = draw(st.floats(0, 1))
            dets.append(Detection(BoundingBox(x0, y0, x1, y1, v.value), label, conf, v))
        views[v] = tuple(dets)
    return FrameBundle(0, 0.0, views)


@settings(max_examples=300, deadline=None)
@given(view_detections(), st.integers(0, 2560), st.sampled_from([0.25, 0.5, 1.0]))
def test_assemble_matches_remap_then_crop(b, anchor, retention):
    crop = FovCrop(anchor, 0)
    out = assemble(b, THREE, crop, retention)
    got = [(d.label, d.confidence, d.box.as_tuple()) for d in (*out.light_detections, *out.sign_detections)]
    want = _oracle(b, THREE, crop, retention)
    assert sorted(got, key=repr) == sorted(want, key=repr)
    assert len(got) <= len(b.detections())
    for _, _, (x0, y0, x1, y1) in got:
        assert 0 <= x0 < x1 <= 1280 and 0 <= y0 < y1 <= 720


@settings(max_examples=200, deadline=None)
@given(view_detections())
def test_remap_preserves_size_label_confidence(b):
    for d in b.detections():
        r = remap_to_panorama(d, THREE)
        assert (r.box.width, r.box.height, r.label, r.confidence) == (d.box.width, d.box.height, d.label, d.confidence)


@settings(max_examples=100, deadline=None)
@given(view_detections())
def test_single_view_assembly_is_idempotent(b):
    single = ViewLayout.single_view()
    crop = FovCrop(0, 0)
    fc_only = FrameBundle(0, 0.0, {FC: b.views[FC]})
    once = assemble(fc_only, single, crop)
    again = assemble(FrameBundle(0, 0.0, {FC: once.light_detections + once.sign_detections}), single, crop)
    assert set(again.light_detections) == set(once.light_detections)
    assert set(again.sign_detections) == set(once.sign_detections)
