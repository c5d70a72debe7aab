"""Segmentation evaluation: frame IoU, clip/dataset mIoU and the GT oracle."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Optional, Sequence

import numpy as np

from .labeling import region_scores
from .masks import PixelMask, MaskError, rle_encode
from .model import ClipRecord, FramePhase, LabelSequence, ModelError, SplitTag, StateLabel, check_labels_cover

# conventions echoed into every EvalResult
EVAL_CONVENTIONS = {
    "undefined_iou": "frames with empty GT and empty prediction for a class are excluded from that class mean",
    "pooling": "frame IoUs pooled per verb; dataset class means are unweighted means over verbs",
    "overlap": "pixels claimed by both classes go to the larger score margin; ties to transformed",
}


class FramePrediction(NamedTuple):
    act: PixelMask
    trf: PixelMask


class SplitFilter(str, enum.Enum):
    FULL = "full"
    TRANSITION = "transition"
    SEEN = "seen"
    NOVEL = "novel"


@dataclass(frozen=True)
class EvalConfig:
    split_filter: SplitFilter = SplitFilter.FULL
    fuse_states: bool = False

    def __post_init__(self):
        object.__setattr__(self, "split_filter", SplitFilter(self.split_filter))


@dataclass
class EvalResult:
    miou: Optional[float]
    miou_act: Optional[float]
    miou_trf: Optional[float]
    per_verb: dict[str, Optional[float]]
    frames_evaluated: int
    frames_ignored: int
    per_verb_act: dict[str, Optional[float]] = field(default_factory=dict)
    per_verb_trf: dict[str, Optional[float]] = field(default_factory=dict)
    metadata: dict[str, str] = field(default_factory=lambda: dict(EVAL_CONVENTIONS))


def composite_prediction(clip: ClipRecord, labels: Mapping[str, LabelSequence]) -> dict[int, FramePrediction]:
    """Rasterize labeled regions into per-frame actionable/transformed masks.

    A pixel covered by regions of both classes goes to the class whose best
    covering region has the larger margin (``s_act - s_trf`` for actionable
    claims, ``s_trf - s_act`` for transformed). Equal margins resolve to
    transformed. Regions without usable scores claim with margin 0.
    """
    check_labels_cover(clip, labels)
    shape = (clip.height, clip.width)
    act_margin = {}
    trf_margin = {}
    for m in clip.masklets:
        seq = labels.get(m.track_id)
        if seq is None:
            continue
        for r in m.regions:
            lab = seq.labels[r.frame_index]
            if lab not in (StateLabel.ACTIONABLE, StateLabel.TRANSFORMED):
                continue
            try:
                s = region_scores(r, clip, m.track_id)
                margin = s.s_act - s.s_trf
            except ModelError:
                margin = 0.0
            if lab == StateLabel.TRANSFORMED:
                target, margin = trf_margin, -margin
            else:
                target = act_margin
            grid = target.get(r.frame_index)
            if grid is None:
                grid = target[r.frame_index] = np.full(shape, -np.inf)
            pix = r.mask.to_array()
            grid[pix] = np.maximum(grid[pix], margin)

    empty = PixelMask.empty(*shape)
    out = {}
    neg = np.full(shape, -np.inf)
    for t in range(clip.frame_count):
        a = act_margin.get(t)
        b = trf_margin.get(t)
        if a is None and b is None:
            out[t] = FramePrediction(empty, empty)
            continue
        a = neg if a is None else a
        b = neg if b is None else b
        act = np.isfinite(a) & (a > b)
        trf = np.isfinite(b) & ~act
        out[t] = FramePrediction(rle_encode(act), rle_encode(trf))
    return out


def frame_iou(pred: PixelMask, gt: PixelMask) -> Optional[float]:
    """Jaccard index; ``None`` when both masks are empty."""
    if pred.shape != gt.shape:
        raise MaskError(f"mask dimensions differ: {pred.shape} vs {gt.shape}")
    p, g = pred.to_array(), gt.to_array()
    union = np.count_nonzero(p | g)
    if union == 0:
        return None
    return np.count_nonzero(p & g) / union


def _mean(xs) -> Optional[float]:
    xs = list(xs)
    return sum(xs) / len(xs) if xs else None


def _pair_mean(a: Optional[float], b: Optional[float]) -> Optional[float]:
    vals = [x for x in (a, b) if x is not None]
    return sum(vals) / len(vals) if vals else None


def select_clips(clips: Sequence[ClipRecord], cfg: EvalConfig) -> list[ClipRecord]:
    if cfg.split_filter == SplitFilter.SEEN:
        return [c for c in clips if c.split_tag == SplitTag.SEEN]
    if cfg.split_filter == SplitFilter.NOVEL:
        return [c for c in clips if c.split_tag == SplitTag.NOVEL]
    return list(clips)


def frame_selected(clip: ClipRecord, frame_index: int, cfg: EvalConfig) -> bool:
    if cfg.split_filter != SplitFilter.TRANSITION:
        return True
    if all(p == FramePhase.UNLABELED for p in clip.frame_phases):
        raise ModelError("transition split requires labeled frame phases", f"clip={clip.clip_id}")
    return clip.frame_phases[frame_index] == FramePhase.TRANSITION


def evaluate(
    clips: Sequence[ClipRecord],
    predictions: Mapping[str, Mapping[int, FramePrediction]],
    cfg: EvalConfig = EvalConfig(),
) -> EvalResult:
    clips = [c for c in clips if c.ground_truth is not None]
    clips = select_clips(clips, cfg)
    missing = sorted(c.clip_id for c in clips if c.clip_id not in predictions)
    if missing:
        raise KeyError(f"missing predictions for clips: {', '.join(missing)}")

    act_ious: dict[str, list[float]] = {}
    trf_ious: dict[str, list[float]] = {}
    fused_ious: dict[str, list[float]] = {}
    evaluated = ignored = 0
    for clip in sorted(clips, key=lambda c: c.clip_id):
        pred = predictions[clip.clip_id]
        empty = PixelMask.empty(clip.height, clip.width)
        verb = clip.verb
        act_ious.setdefault(verb, [])
        trf_ious.setdefault(verb, [])
        fused_ious.setdefault(verb, [])
        for g in clip.ground_truth:
            if not frame_selected(clip, g.frame_index, cfg):
                continue
            if g.ignored:
                ignored += 1
                continue
            evaluated += 1
            p = pred.get(g.frame_index) or FramePrediction(empty, empty)
            if cfg.fuse_states:
                fp = p.act.to_array() | p.trf.to_array()
                fg = g.actionable.to_array() | g.transformed.to_array()
                iou = frame_iou(rle_encode(fp), rle_encode(fg))
                if iou is not None:
                    fused_ious[verb].append(iou)
                continue
            ia = frame_iou(p.act, g.actionable)
            it = frame_iou(p.trf, g.transformed)
            if ia is not None:
                act_ious[verb].append(ia)
            if it is not None:
                trf_ious[verb].append(it)

    verbs = sorted(act_ious)
    meta = dict(EVAL_CONVENTIONS)
    meta["split"] = cfg.split_filter.value
    meta["fuse_states"] = str(cfg.fuse_states).lower()
    if cfg.fuse_states:
        per_verb = {v: _mean(fused_ious[v]) for v in verbs}
        miou = _mean(x for x in per_verb.values() if x is not None)
        return EvalResult(miou, None, None, per_verb, evaluated, ignored, metadata=meta)

    per_act = {v: _mean(act_ious[v]) for v in verbs}
    per_trf = {v: _mean(trf_ious[v]) for v in verbs}
    per_verb = {v: _pair_mean(per_act[v], per_trf[v]) for v in verbs}
    miou_act = _mean(x for x in per_act.values() if x is not None)
    miou_trf = _mean(x for x in per_trf.values() if x is not None)
    return EvalResult(
        _pair_mean(miou_act, miou_trf),
        miou_act,
        miou_trf,
        per_verb,
        evaluated,
        ignored,
        per_act,
        per_trf,
        meta,
    )


def predict_corpus(clips: Sequence[ClipRecord], labels_by_clip: Mapping[str, Mapping[str, LabelSequence]]):
    return {c.clip_id: composite_prediction(c, labels_by_clip[c.clip_id]) for c in clips if c.clip_id in labels_by_clip}


def labels_miou(clips: Sequence[ClipRecord], labels_by_clip: Mapping[str, Mapping[str, LabelSequence]]) -> Optional[float]:
    """Dataset mIoU of label maps, the default grid-search objective."""
    return evaluate(clips, predict_corpus(clips, labels_by_clip)).miou


def oracle_labels(clip: ClipRecord, theta: float = 0.5) -> dict[str, LabelSequence]:
    """Label each region from ground-truth overlap: the detector/tracker upper bound.

    A region takes the class covering more than ``theta`` of its pixels (and
    more than the other class). Regions on frames without ground truth, or
    without a dominant class, are Background.
    """
    gt = clip.gt_by_frame()
    out = {}
    for m in clip.masklets:
        labels = {}
        for r in m.regions:
            g = gt.get(r.frame_index)
            lab = StateLabel.BACKGROUND
            if g is not None:
                pix = r.mask.to_array()
                area = r.mask.area
                f_act = np.count_nonzero(pix & g.actionable.to_array()) / area
                f_trf = np.count_nonzero(pix & g.transformed.to_array()) / area
                if f_act > theta and f_act > f_trf:
                    lab = StateLabel.ACTIONABLE
                elif f_trf > theta and f_trf > f_act:
                    lab = StateLabel.TRANSFORMED
            labels[r.frame_index] = lab
        out[m.track_id] = LabelSequence(m.track_id, labels)
    return out
