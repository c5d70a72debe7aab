import numpy as np
import pytest

from oscpipe.masks import PixelMask
from oscpipe.model import (
    ClipRecord,
    FramePhase,
    GroundTruthFrame,
    LabelSequence,
    MaskRegion,
    Masklet,
    OscDescriptor,
    SimilarityPair,
    StateLabel,
)

A = StateLabel.ACTIONABLE
T = StateLabel.TRANSFORMED
AMB = StateLabel.AMBIGUOUS
BG = StateLabel.BACKGROUND

OSC = OscDescriptor("chop", "avocado", "whole avocado", "chopped avocado pieces")


def box(h, w, top, left, bottom, right):
    return PixelMask.from_box(h, w, top, left, bottom, right)


def seq(*labels, track="k"):
    return LabelSequence.from_list(track, labels)


def region(frame, mask, s_act=None, s_trf=None, **kw):
    scores = SimilarityPair(s_act, s_trf) if s_act is not None else None
    return MaskRegion(frame, mask, scores=scores, **kw)


def make_clip(masklets=(), frames=1, h=4, w=4, gt=None, phases=(), clip_id="c0", osc=OSC, **kw):
    return ClipRecord(
        clip_id=clip_id,
        osc=osc,
        frame_count=frames,
        height=h,
        width=w,
        frame_phases=phases,
        masklets=masklets,
        ground_truth=gt,
        **kw,
    )


def grid_of(rows):
    return np.array(rows, dtype=bool)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n, name, ok, detail in sorted(results):
        terminalreporter.write_line(f"criterion {n:>2} {'PASS' if ok else 'FAIL'}  {name}  {detail}")
