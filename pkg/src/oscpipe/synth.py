"""Synthetic clips with planted state changes, used as a brute-force oracle.

Each clip lays its masklets out on disjoint cells of the frame grid. A masklet
shows a small actionable box until its change-point and its whole cell
(transformed, so larger) from then on, which makes the ground-truth progress
curve non-increasing and the end-phase curve exactly zero. Similarity scores
are planted a fixed margin clear of the labeling thresholds, then optionally
corrupted in score space.

Randomness comes from numpy's PCG64 seeded per clip with
``SeedSequence([seed, clip_index, stream])`` so clips can be generated in any
order or in parallel and still reproduce.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .labeling import DEFAULT_DELTA, DEFAULT_TAU
from .masks import PixelMask, union_all
from .model import (
    ClipRecord,
    FramePhase,
    GroundTruthFrame,
    LabelSequence,
    MaskRegion,
    Masklet,
    OscDescriptor,
    SimilarityPair,
    SplitTag,
    StateLabel,
)

RNG_NAME = "numpy.PCG64(SeedSequence([seed, clip_index, stream]))"
_GENERATE, _PERTURB = 0, 1

_NOUNS = {
    "chop": ("avocado", "whole avocado", "chopped avocado pieces"),
    "grate": ("cheese", "block of cheese", "grated cheese shreds"),
    "peel": ("potato", "unpeeled potato", "peeled potato"),
    "melt": ("butter", "solid butter", "melted butter"),
    "mash": ("potato", "boiled potato chunks", "mashed potato"),
}


class SynthError(ValueError):
    pass


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    clips: int = 10
    frames_per_clip: int = 20
    masklets_per_clip: int = 3
    grid: tuple[int, int] = (32, 32)
    transition_window: tuple[float, float] = (0.2, 0.8)
    noise_flip_prob: float = 0.0
    ambiguous_prob: float = 0.0
    score_margin: float = 0.1
    distractors_per_clip: int = 0
    verbs: tuple[str, ...] = ("chop", "grate", "peel")
    tau: float = DEFAULT_TAU
    delta: float = DEFAULT_DELTA

    def __post_init__(self):
        object.__setattr__(self, "grid", tuple(int(x) for x in self.grid))
        object.__setattr__(self, "transition_window", tuple(float(x) for x in self.transition_window))
        object.__setattr__(self, "verbs", tuple(self.verbs))
        lo, hi = self.transition_window
        if not 0.0 <= lo <= hi <= 1.0:
            raise SynthError(f"transition_window must be ordered within [0, 1], got {self.transition_window}")
        for name in ("noise_flip_prob", "ambiguous_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise SynthError(f"{name} must be in [0, 1], got {p}")
        if not self.score_margin > 0:
            raise SynthError("score_margin must be positive")
        # planted scores must stay inside [-1, 1]
        if (self.tau + self.delta) / 2 + 2 * self.score_margin > 1 or self.tau / 2 - 2 * self.score_margin < -1:
            raise SynthError(f"score_margin {self.score_margin} pushes planted scores outside [-1, 1]")
        if self.clips < 0 or self.frames_per_clip <= 0 or self.masklets_per_clip < 0 or self.distractors_per_clip < 0:
            raise SynthError("clip, frame and masklet counts must be non-negative (frames positive)")
        if not self.verbs:
            raise SynthError("at least one verb is required")

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "clips": self.clips,
            "frames_per_clip": self.frames_per_clip,
            "masklets_per_clip": self.masklets_per_clip,
            "grid": list(self.grid),
            "transition_window": list(self.transition_window),
            "noise_flip_prob": self.noise_flip_prob,
            "ambiguous_prob": self.ambiguous_prob,
            "score_margin": self.score_margin,
            "distractors_per_clip": self.distractors_per_clip,
            "verbs": list(self.verbs),
            "tau": self.tau,
            "delta": self.delta,
            "rng": RNG_NAME,
        }


@dataclass
class SynthCorpus:
    clips: list[ClipRecord]
    truth: dict[str, dict[str, LabelSequence]]
    config: SynthConfig = field(default_factory=SynthConfig)


def _rng(seed: int, clip_index: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, clip_index, stream])))


def _cells(n: int, height: int, width: int) -> list[tuple[int, int, int, int]]:
    if n == 0:
        return []
    cols = math.ceil(math.sqrt(n))
    rows = math.ceil(n / cols)
    ch, cw = height // rows, width // cols
    if ch < 2 or cw < 2:
        raise SynthError(f"{height}x{width} grid too small for {n} masklets (cells would be {ch}x{cw})")
    return [((i // cols) * ch, (i % cols) * cw, ch, cw) for i in range(n)]


def _change_point_range(frames: int, window: tuple[float, float]) -> tuple[int, int]:
    lo = math.ceil(window[0] * frames)
    hi = math.floor(window[1] * frames)
    return lo, max(lo, hi)


def _planted_scores(rng, label: StateLabel, cfg: SynthConfig) -> SimilarityPair:
    m = cfg.score_margin
    if label == StateLabel.BACKGROUND:
        total = cfg.tau - m - rng.uniform(0, m)
        diff = rng.uniform(-m, m)
    else:
        total = cfg.tau + m + rng.uniform(0, m)
        diff = cfg.delta + m + rng.uniform(0, m)
        if label == StateLabel.TRANSFORMED:
            diff = -diff
    return SimilarityPair(float((total + diff) / 2), float((total - diff) / 2))


def generate_clip(cfg: SynthConfig, clip_index: int) -> tuple[ClipRecord, dict[str, LabelSequence]]:
    rng = _rng(cfg.seed, clip_index, _GENERATE)
    height, width = cfg.grid
    n_frames = cfg.frames_per_clip
    cells = _cells(cfg.masklets_per_clip + cfg.distractors_per_clip, height, width)
    lo, hi = _change_point_range(n_frames, cfg.transition_window)

    verb = cfg.verbs[clip_index % len(cfg.verbs)]
    noun, p_act, p_trf = _NOUNS.get(verb, ("object", f"object before {verb}", f"object after {verb}"))
    clip_id = f"clip{clip_index:05d}"
    split = SplitTag.SEEN if rng.random() < 0.5 else SplitTag.NOVEL

    masklets, truth = [], {}
    per_frame_act = [[] for _ in range(n_frames)]
    per_frame_trf = [[] for _ in range(n_frames)]
    change_points = []
    for k, (top, left, ch, cw) in enumerate(cells):
        is_object = k < cfg.masklets_per_clip
        track_id = f"m{k}" if is_object else f"d{k - cfg.masklets_per_clip}"
        ah, aw = int(rng.integers(1, ch)), int(rng.integers(1, cw))
        at, al = top + int(rng.integers(0, ch - ah + 1)), left + int(rng.integers(0, cw - aw + 1))
        small = PixelMask.from_box(height, width, at, al, at + ah, al + aw)
        full = PixelMask.from_box(height, width, top, left, top + ch, left + cw)
        boxes = {small: (al, at, al + aw, at + ah), full: (left, top, left + cw, top + ch)}
        if is_object:
            c = int(rng.integers(lo, hi + 1))
            change_points.append(c)
        regions, labels = [], {}
        for t in range(n_frames):
            if not is_object:
                lab, mask = StateLabel.BACKGROUND, small
            elif t < c:
                lab, mask = StateLabel.ACTIONABLE, small
                per_frame_act[t].append(mask)
            else:
                lab, mask = StateLabel.TRANSFORMED, full
                per_frame_trf[t].append(mask)
            regions.append(MaskRegion(t, mask, scores=_planted_scores(rng, lab, cfg), bbox=boxes[mask]))
            labels[t] = lab
        masklets.append(Masklet(track_id, regions))
        truth[track_id] = LabelSequence(track_id, labels)

    if change_points:
        first, last = min(change_points), max(change_points)
        phases = [
            FramePhase.INITIAL if t < first else FramePhase.END if t >= last else FramePhase.TRANSITION
            for t in range(n_frames)
        ]
    else:
        phases = [FramePhase.UNLABELED] * n_frames
    gt = [
        GroundTruthFrame(t, union_all(per_frame_act[t], height, width), union_all(per_frame_trf[t], height, width))
        for t in range(n_frames)
    ]
    clip = ClipRecord(
        clip_id=clip_id,
        osc=OscDescriptor(verb, noun, p_act, p_trf),
        frame_count=n_frames,
        height=height,
        width=width,
        fps=1.0,
        frame_phases=phases,
        masklets=masklets,
        split_tag=split,
        ground_truth=gt,
    )
    return clip, truth


def perturb_clip(clip: ClipRecord, clip_index: int, noise_flip_prob: float, ambiguous_prob: float,
                 seed: int, delta: float = DEFAULT_DELTA) -> ClipRecord:
    """Corrupt region scores of one clip.

    Each region draws the same three uniforms whatever the probabilities, so
    a given seed corrupts the same regions at every noise level below it.
    """
    rng = _rng(seed, clip_index, _PERTURB)
    masklets = []
    for m in clip.masklets:
        regions = []
        for r in m.regions:
            u_flip, u_amb, u_gap = rng.random(3)
            s = r.scores
            if s is not None:
                if u_flip < noise_flip_prob:
                    s = s.swapped()
                if u_amb < ambiguous_prob:
                    mean = (s.s_act + s.s_trf) / 2
                    gap = delta * (u_gap - 0.5)  # |gap| < delta / 2 < delta
                    s = SimilarityPair(mean + gap / 2, mean - gap / 2)
                r = replace(r, scores=s)
            regions.append(r)
        masklets.append(Masklet(m.track_id, regions))
    return replace(clip, masklets=masklets)


def perturb_scores(clips: Sequence[ClipRecord], noise_flip_prob: float, ambiguous_prob: float, seed: int,
                   delta: float = DEFAULT_DELTA, indices: Optional[Sequence[int]] = None) -> list[ClipRecord]:
    for name, p in (("noise_flip_prob", noise_flip_prob), ("ambiguous_prob", ambiguous_prob)):
        if not 0.0 <= p <= 1.0:
            raise SynthError(f"{name} must be in [0, 1], got {p}")
    if noise_flip_prob == 0 and ambiguous_prob == 0:
        return list(clips)
    indices = range(len(clips)) if indices is None else indices
    return [perturb_clip(c, i, noise_flip_prob, ambiguous_prob, seed, delta) for c, i in zip(clips, indices)]


def _generate_one(args) -> tuple[ClipRecord, dict[str, LabelSequence]]:
    cfg, i = args
    clip, truth = generate_clip(cfg, i)
    if cfg.noise_flip_prob or cfg.ambiguous_prob:
        clip = perturb_clip(clip, i, cfg.noise_flip_prob, cfg.ambiguous_prob, cfg.seed, cfg.delta)
    return clip, truth


def generate_corpus(cfg: SynthConfig, executor=None) -> SynthCorpus:
    """Clips with ground truth plus their true label sequences, noise applied per ``cfg``.

    ``executor`` (anything with an order-preserving ``map``) parallelises
    per-clip generation without changing the result.
    """
    jobs = [(cfg, i) for i in range(cfg.clips)]
    results = list(executor.map(_generate_one, jobs)) if executor is not None else [_generate_one(j) for j in jobs]
    clips = [c for c, _ in results]
    truth = {c.clip_id: t for c, t in results}
    return SynthCorpus(clips, truth, cfg)


def _flatten(labels: Mapping) -> dict[tuple, StateLabel]:
    flat = {}
    for key, value in labels.items():
        if isinstance(value, LabelSequence):
            for t, lab in value.labels.items():
                flat[(key, t)] = lab
        else:
            for sub, lab in _flatten(value).items():
                flat[(key,) + sub] = lab
    return flat


def label_accuracy(predicted: Mapping, truth: Mapping) -> float:
    """Fraction of frames whose predicted label equals the truth.

    Accepts track-level maps (``track_id -> LabelSequence``) or corpus-level
    maps (``clip_id -> track_id -> LabelSequence``). Ambiguous predictions
    never match.
    """
    p, t = _flatten(predicted), _flatten(truth)
    if p.keys() != t.keys():
        extra = sorted(p.keys() - t.keys())[:5]
        missing = sorted(t.keys() - p.keys())[:5]
        raise ValueError(f"label index sets differ (extra={extra}, missing={missing})")
    if not t:
        raise ValueError("no labels to compare")
    hits = sum(1 for k, lab in p.items() if lab == t[k] and lab != StateLabel.AMBIGUOUS)
    return hits / len(t)


def iter_regions(clips: Iterable[ClipRecord]):
    for c in clips:
        for m in c.masklets:
            for r in m.regions:
                yield c, m, r
