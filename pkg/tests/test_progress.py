import math
from itertools import combinations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oscpipe.masks import PixelMask
from oscpipe.model import FramePhase, GroundTruthFrame
from oscpipe.progress import (
    ProgressCurve,
    annotation_prediction,
    end_state_metrics,
    kendall_tau,
    progress_curve,
    progress_report,
)

from conftest import box, make_clip

E = FramePhase.END
I = FramePhase.INITIAL


def tau_oracle(values):
    vals = [v for v in values if v is not None]
    pairs = list(combinations(vals, 2))
    inc = sum(1 for a, b in pairs if b > a)
    return (inc - (len(pairs) - inc)) / len(pairs)


def test_progress_value_fixtures():
    clip = make_clip(frames=3, h=10, w=10)
    act = box(10, 10, 0, 0, 3, 10)  # 30 px
    trf = box(10, 10, 3, 0, 10, 10)  # 70 px
    empty = PixelMask.empty(10, 10)
    curve = progress_curve(clip, {0: (act, empty), 1: (empty, trf), 2: (act, trf)})
    assert curve.values == (1.0, 0.0, pytest.approx(0.3, abs=1e-15))


def test_progress_absent_frames():
    clip = make_clip(frames=3)
    e = PixelMask.empty(4, 4)
    curve = progress_curve(clip, {0: (e, e)})
    assert curve.values == (None, None, None)
    assert kendall_tau(curve) is None


def test_progress_overlap_not_double_counted():
    clip = make_clip(frames=1)
    a = box(4, 4, 0, 0, 2, 2)
    assert progress_curve(clip, {0: (a, a)}).values == (1.0,)


@pytest.mark.parametrize(
    "values, expected",
    [
        ([0.0, 0.5, 1.0], 1.0),
        ([1.0, 0.5, 0.0], -1.0),
        ([0.5, 0.5, 0.5], -1.0),
        ([0.0, 1.0, 0.5], 1 / 3),
        ([0.2, None, 0.4], 1.0),
    ],
)
def test_kendall_tau_fixtures(values, expected):
    assert kendall_tau(values) == pytest.approx(expected, abs=1e-15)


def test_kendall_tau_short():
    assert kendall_tau([]) is None
    assert kendall_tau([0.3]) is None
    assert kendall_tau([0.3, None]) is None


@given(st.lists(st.sampled_from([0.0, 0.1, 0.25, 0.5, 0.9, 1.0]) | st.floats(0, 1), min_size=2, max_size=40))
def test_kendall_tau_matches_enumeration(values):
    assert kendall_tau(values) == pytest.approx(tau_oracle(values), abs=1e-12)


@given(st.lists(st.floats(0, 1), min_size=2, max_size=30, unique=True))
def test_kendall_tau_reversal_negates_without_ties(values):
    assert kendall_tau(values[::-1]) == pytest.approx(-kendall_tau(values), abs=1e-12)


@given(st.lists(st.floats(0, 1), min_size=2, max_size=30))
def test_kendall_tau_bounds(values):
    assert -1.0 <= kendall_tau(values) <= 1.0


def test_end_metrics_fixtures():
    assert end_state_metrics([0.2, 0.2, 0.2]) == (pytest.approx(0, abs=1e-15), pytest.approx(0.2, abs=1e-15))
    sigma, l2 = end_state_metrics([0.0, 0.4])
    assert sigma == pytest.approx(0.04, abs=1e-15)
    assert l2 == pytest.approx(math.sqrt(0.08), abs=1e-15)
    assert end_state_metrics([]) == (None, None)


def test_end_metrics_use_end_phase_only():
    curve = ProgressCurve([0.9, 0.8, 0.0, 0.4, None], [I, I, E, E, E])
    sigma, l2 = end_state_metrics(curve)
    assert sigma == pytest.approx(0.04, abs=1e-15)
    assert l2 == pytest.approx(math.sqrt(0.08), abs=1e-15)
    assert end_state_metrics(ProgressCurve([0.5], [I])) == (None, None)


@given(st.lists(st.floats(0, 1), min_size=1, max_size=50))
def test_end_metrics_variance_decomposition(values):
    sigma, l2 = end_state_metrics(values)
    mean = sum(values) / len(values)
    assert l2 ** 2 == pytest.approx(sigma + mean ** 2, abs=1e-12)
    assert sigma >= 0


@given(st.lists(st.floats(0, 1), min_size=1, max_size=50), st.floats(0.01, 1))
def test_end_metrics_scale(values, c):
    sigma, l2 = end_state_metrics(values)
    s2, l22 = end_state_metrics([c * v for v in values])
    assert s2 == pytest.approx(c * c * sigma, abs=1e-12)
    assert l22 == pytest.approx(c * l2, abs=1e-12)


def test_progress_report_aggregates_defined_only():
    e = PixelMask.empty(4, 4)
    a, t = box(4, 4, 0, 0, 2, 2), box(4, 4, 2, 2, 4, 4)
    phases = (I, FramePhase.TRANSITION, E)
    clean = make_clip(frames=3, phases=phases, clip_id="a")
    flat = make_clip(frames=3, phases=phases, clip_id="b")
    preds = {
        "a": {0: (a, e), 1: (a, t), 2: (e, t)},
        "b": {0: (a, e)},
    }
    rep = progress_report([flat, clean], preds)
    assert list(rep.per_clip) == ["a", "b"]
    assert rep.per_clip["a"].tau == -1.0
    assert rep.per_clip["a"].end_sigma == 0.0 and rep.per_clip["a"].end_l2 == 0.0
    assert rep.undefined == {"b": ["tau", "end_sigma", "end_l2"]}
    assert rep.aggregate.tau == -1.0 and rep.aggregate.end_l2 == 0.0


def test_annotation_prediction_skips_ignored():
    a, t = box(4, 4, 0, 0, 2, 2), box(4, 4, 2, 2, 4, 4)
    gt = [GroundTruthFrame(0, a, PixelMask.empty(4, 4)), GroundTruthFrame(1, a, t, ignored=True)]
    clip = make_clip(frames=2, gt=gt)
    assert progress_curve(clip, annotation_prediction(clip)).values == (1.0, None)
