from __future__ import annotations

import pytest
from hypothesis import settings

from tls_assist.types import BoundingBox, Detection, FrameBundle, LightClass, SignClass, ViewId

# timing on a shared machine is noisy; correctness, not latency, is under test here
settings.register_profile("repo", deadline=None)
settings.load_profile("repo")

FC = ViewId.FRONT_CENTER


def light(cls: LightClass | str, conf: float = 0.9, box=(600, 300, 610, 325), view: ViewId = FC) -> Detection:
    return Detection(BoundingBox(*box, view.value), LightClass(cls), conf, view)


def sign(cls: SignClass | str, conf: float = 0.9, box=(1000, 300, 1030, 330), view: ViewId = FC) -> Detection:
    return Detection(BoundingBox(*box, view.value), SignClass(cls), conf, view)


def bundle(index: int, *dets: Detection, stitch_ok: bool = True, views=None, sizes=None) -> FrameBundle:
    grouped: dict[ViewId, list[Detection]] = {v: [] for v in (views or (FC,))}
    for d in dets:
        grouped.setdefault(d.view, []).append(d)
    return FrameBundle(index, index / 10, {v: tuple(ds) for v, ds in grouped.items()}, stitch_ok, sizes or {})


@pytest.fixture
def make_light():
    return light


@pytest.fixture
def make_sign():
    return sign


@pytest.fixture
def make_bundle():
    return bundle


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
