import itertools
import random

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oscpipe.labeling import (
    ThresholdConfig,
    ThresholdTable,
    compute_similarity,
    grid_search_thresholds,
    pseudo_label_clip,
    threshold_label,
)
from oscpipe.masks import PixelMask
from oscpipe.metrics import labels_miou
from oscpipe.model import GroundTruthFrame, Masklet, ModelError, SimilarityPair, TextEmbeddings

from conftest import AMB, BG, A, T, box, make_clip, region

DEFAULTS = ThresholdConfig(0.5, 0.01)


def test_similarity_basis():
    s = compute_similarity([1.0, 0.0], TextEmbeddings([1, 0], [0, 1]))
    assert (s.s_act, s.s_trf) == (1.0, 0.0)


def test_similarity_self():
    z = np.array([0.6, 0.8])
    assert compute_similarity(z, TextEmbeddings(z, [0, 1])).s_act == pytest.approx(1.0, abs=1e-15)


def test_similarity_matches_multiply_accumulate(rng):
    for _ in range(50):
        zv, za, zt = rng.normal(size=(3, 4))
        s = compute_similarity(zv, TextEmbeddings(za, zt))
        acc_a = acc_t = 0.0
        for i in range(4):
            acc_a += zv[i] * za[i]
            acc_t += zv[i] * zt[i]
        assert s.s_act == pytest.approx(acc_a, abs=1e-12)
        assert s.s_trf == pytest.approx(acc_t, abs=1e-12)


def test_similarity_dim_mismatch():
    with pytest.raises(ValueError):
        compute_similarity([1, 0, 0], TextEmbeddings([1, 0], [0, 1]))


@pytest.mark.parametrize(
    "scores, expected",
    [
        ((0.30, 0.10), BG),
        ((0.26, 0.255), AMB),
        ((0.35, 0.20), A),
        ((0.20, 0.35), T),
    ],
)
def test_threshold_fixtures(scores, expected):
    assert threshold_label(SimilarityPair(*scores), DEFAULTS) == expected


def test_background_wins_over_ambiguous():
    # low sum and near-tied: the background test comes first
    assert threshold_label(SimilarityPair(0.2, 0.2), DEFAULTS) == BG


def test_exact_tie_with_zero_delta_is_ambiguous():
    assert threshold_label(SimilarityPair(0.4, 0.4), ThresholdConfig(0.5, 0.0)) == AMB


def test_config_validation():
    with pytest.raises(ValueError):
        ThresholdConfig(0.5, -0.1)
    with pytest.raises(ValueError):
        ThresholdConfig(float("inf"), 0.1)


finite = st.floats(-1, 1, allow_nan=False)


@given(finite, finite, st.floats(-2, 2, allow_nan=False), st.floats(0, 1, allow_nan=False))
def test_threshold_total(a, t, tau, delta):
    assert threshold_label(SimilarityPair(a, t), ThresholdConfig(tau, delta)) in (A, T, AMB, BG)


@given(finite, finite, st.floats(0, 1, allow_nan=False), st.floats(-2, 2, allow_nan=False))
def test_monotone_in_s_act(a, t, bump, tau):
    cfg = ThresholdConfig(tau, 0.0)
    before = threshold_label(SimilarityPair(a, t), cfg)
    after = threshold_label(SimilarityPair(a + bump, t), cfg)
    if before == A and a + t >= tau:
        assert after == A


def test_pseudo_label_single_region():
    clip = make_clip([Masklet("k", [region(0, box(4, 4, 0, 0, 2, 2), 0.35, 0.20)])])
    out = pseudo_label_clip(clip, DEFAULTS)
    assert dict(out["k"].labels) == {0: A}


def test_pseudo_label_empty_clip():
    assert pseudo_label_clip(make_clip(), DEFAULTS) == {}


def test_pseudo_label_missing_evidence_names_location():
    clip = make_clip([Masklet("trk7", [region(0, box(4, 4, 0, 0, 1, 1))])], clip_id="clipX")
    with pytest.raises(ModelError, match="clip=clipX track=trk7 frame=0"):
        pseudo_label_clip(clip, DEFAULTS)


def test_precomputed_scores_win_over_embedding():
    m = box(4, 4, 0, 0, 1, 1)
    r = region(0, m, 0.35, 0.20, embedding=(0.0, 1.0))
    clip = make_clip([Masklet("k", [r])], text_embeddings=TextEmbeddings([1, 0], [0, 1]))
    assert pseudo_label_clip(clip, DEFAULTS)["k"].labels[0] == A
    r2 = region(0, m, embedding=(0.0, 1.0))
    clip2 = make_clip([Masklet("k", [r2])], text_embeddings=TextEmbeddings([1, 0], [0, 1]))
    assert pseudo_label_clip(clip2, DEFAULTS)["k"].labels[0] == T


def test_per_verb_table_falls_back():
    table = ThresholdTable(DEFAULTS, {"peel": ThresholdConfig(0.9, 0.01)})
    clip = make_clip([Masklet("k", [region(0, box(4, 4, 0, 0, 1, 1), 0.35, 0.20)])])
    assert pseudo_label_clip(clip, table)["k"].labels[0] == A
    assert table.for_verb("peel").tau == 0.9


def test_pseudo_label_has_no_coupling(rng):
    m = box(4, 4, 0, 0, 1, 1)
    masklets = []
    for k in range(5):
        regs = [region(t, m, *rng.uniform(-0.2, 0.6, size=2)) for t in range(6)]
        masklets.append(Masklet(f"k{k}", regs))
    clip = make_clip(masklets, frames=6)
    out = pseudo_label_clip(clip, DEFAULTS)
    for mk in masklets:
        for r in mk.regions:
            assert out[mk.track_id].labels[r.frame_index] == threshold_label(r.scores, DEFAULTS)


# -- grid search ------------------------------------------------------------


def planted_clip():
    """One frame where only tau=0.5, delta=0.01 labels every region correctly."""
    true_act = box(6, 6, 0, 0, 2, 2)
    true_trf = box(6, 6, 4, 4, 6, 6)
    masklets = [
        Masklet("act", [region(0, true_act, 0.315, 0.285)]),  # sum 0.6, diff 0.03
        Masklet("trf", [region(0, true_trf, 0.2, 0.4)]),
        Masklet("bg", [region(0, box(6, 6, 0, 4, 2, 6), 0.3, 0.15)]),  # sum 0.45
        Masklet("unclear", [region(0, box(6, 6, 4, 0, 6, 2), 0.304, 0.296)]),  # diff 0.008
    ]
    gt = [GroundTruthFrame(0, true_act, true_trf)]
    return make_clip(masklets, h=6, w=6, gt=gt)


GRID = [ThresholdConfig(t, d) for t, d in itertools.product((0.3, 0.5, 0.7), (0.005, 0.01, 0.05))]


def test_grid_single_candidate():
    only = ThresholdConfig(0.7, 0.05)
    assert grid_search_thresholds([only], [planted_clip()]).best == {"chop": only}


def test_grid_empty_candidates():
    with pytest.raises(ValueError):
        grid_search_thresholds([], [planted_clip()])


def test_grid_recovers_planted_optimum():
    clip = planted_clip()
    # brute-force oracle: exactly one cell scores perfectly
    perfect = [c for c in GRID if labels_miou([clip], {clip.clip_id: pseudo_label_clip(clip, c)}) == 1.0]
    assert perfect == [DEFAULTS]
    result = grid_search_thresholds(GRID, [clip])
    assert result.best["chop"] == DEFAULTS
    assert len(result.grid["chop"]) == len(GRID)


def test_grid_order_invariant():
    clip = planted_clip()
    shuffled = GRID[:]
    random.Random(3).shuffle(shuffled)
    assert grid_search_thresholds(shuffled, [clip]).best == grid_search_thresholds(GRID, [clip]).best


def test_grid_ties_prefer_lower_tau_then_delta():
    clip = planted_clip()
    cands = [ThresholdConfig(0.5, 0.02), ThresholdConfig(0.5, 0.01), ThresholdConfig(0.45, 0.02)]
    # constant metric: every candidate ties
    result = grid_search_thresholds(cands, [clip], metric=lambda clips, labels: 0.5)
    assert result.best["chop"] == ThresholdConfig(0.45, 0.02)
