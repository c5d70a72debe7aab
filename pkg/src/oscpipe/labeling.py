"""Threshold-based pseudo-labeling of mask regions from vision-language scores."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional, Sequence

import numpy as np

from .model import ClipRecord, LabelSequence, ModelError, SimilarityPair, StateLabel, TextEmbeddings

DEFAULT_TAU = 0.5
DEFAULT_DELTA = 0.01


@dataclass(frozen=True, order=True)
class ThresholdConfig:
    tau: float = DEFAULT_TAU
    delta: float = DEFAULT_DELTA

    def __post_init__(self):
        if not math.isfinite(self.tau):
            raise ValueError(f"tau must be finite, got {self.tau}")
        if not (math.isfinite(self.delta) and self.delta >= 0):
            raise ValueError(f"delta must be finite and >= 0, got {self.delta}")


@dataclass(frozen=True)
class ThresholdTable:
    """Per-verb thresholds with a global fallback."""

    default: ThresholdConfig = ThresholdConfig()
    per_verb: Mapping[str, ThresholdConfig] = field(default_factory=dict)

    def for_verb(self, verb: str) -> ThresholdConfig:
        return self.per_verb.get(verb, self.default)

    def to_dict(self) -> dict:
        return {
            "default": {"tau": self.default.tau, "delta": self.default.delta},
            "verbs": {v: {"tau": c.tau, "delta": c.delta} for v, c in sorted(self.per_verb.items())},
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "ThresholdTable":
        d = data.get("default") or {}
        default = ThresholdConfig(float(d.get("tau", DEFAULT_TAU)), float(d.get("delta", DEFAULT_DELTA)))
        verbs = {
            v: ThresholdConfig(float(c["tau"]), float(c["delta"])) for v, c in (data.get("verbs") or {}).items()
        }
        return cls(default, verbs)


def compute_similarity(z_v: Sequence[float], text: TextEmbeddings) -> SimilarityPair:
    z_v = np.asarray(z_v, dtype=float)
    if z_v.shape != (text.dim,):
        raise ValueError(f"vision embedding has shape {z_v.shape}, text embeddings have dim {text.dim}")
    return SimilarityPair(float(z_v @ np.asarray(text.z_act)), float(z_v @ np.asarray(text.z_trf)))


def threshold_label(scores: SimilarityPair, cfg: ThresholdConfig) -> StateLabel:
    s_act, s_trf = scores.s_act, scores.s_trf
    if s_act + s_trf < cfg.tau:
        return StateLabel.BACKGROUND
    if abs(s_act - s_trf) < cfg.delta:
        return StateLabel.AMBIGUOUS
    if s_act > s_trf:
        return StateLabel.ACTIONABLE
    if s_trf > s_act:
        return StateLabel.TRANSFORMED
    # exact tie that slipped past delta == 0: neither strict branch fires
    return StateLabel.AMBIGUOUS


def region_scores(region, clip: ClipRecord, track_id: str = "?") -> SimilarityPair:
    """Precomputed scores if present, else recomputed from the region embedding."""
    if region.scores is not None:
        return region.scores
    if region.embedding is not None and clip.text_embeddings is not None:
        return compute_similarity(region.embedding, clip.text_embeddings)
    raise ModelError(
        "region has neither similarity scores nor an embedding with clip text embeddings",
        f"clip={clip.clip_id} track={track_id} frame={region.frame_index}",
    )


def pseudo_label_clip(clip: ClipRecord, cfg) -> dict[str, LabelSequence]:
    """Label every region of ``clip``.

    ``cfg`` is either a single ThresholdConfig or a ThresholdTable, in which
    case the clip's verb selects the thresholds.
    """
    if isinstance(cfg, ThresholdTable):
        cfg = cfg.for_verb(clip.verb)
    out = {}
    for m in clip.masklets:
        out[m.track_id] = LabelSequence(
            m.track_id,
            {r.frame_index: threshold_label(region_scores(r, clip, m.track_id), cfg) for r in m.regions},
        )
    return out


@dataclass
class GridSearchResult:
    best: dict[str, ThresholdConfig]
    # verb -> [(config, score or None)] in candidate order
    grid: dict[str, list[tuple[ThresholdConfig, Optional[float]]]]

    def table(self, default: ThresholdConfig = ThresholdConfig()) -> ThresholdTable:
        return ThresholdTable(default, dict(self.best))

    def rows(self):
        for verb in sorted(self.grid):
            for c, score in self.grid[verb]:
                yield verb, c.tau, c.delta, score


def _better(a: tuple[ThresholdConfig, float], b: Optional[tuple[ThresholdConfig, float]]) -> bool:
    if b is None:
        return True
    (ca, sa), (cb, sb) = a, b
    if sa != sb:
        return sa > sb
    return (ca.tau, ca.delta) < (cb.tau, cb.delta)


def grid_search_thresholds(
    candidates: Sequence[ThresholdConfig],
    clips: Iterable[ClipRecord],
    metric: Optional[Callable[[Sequence[ClipRecord], Mapping[str, Mapping[str, LabelSequence]]], Optional[float]]] = None,
) -> GridSearchResult:
    """Pick the highest-scoring thresholds for each verb.

    ``metric(clips, labels_by_clip)`` defaults to mIoU of the composited
    pseudo-labels against ground truth. An undefined score never wins; equal
    scores go to the lower tau, then the lower delta.
    """
    candidates = list(candidates)
    if not candidates:
        raise ValueError("grid search needs at least one candidate threshold")
    if metric is None:
        from .metrics import labels_miou

        metric = labels_miou

    by_verb: dict[str, list[ClipRecord]] = {}
    for clip in clips:
        by_verb.setdefault(clip.verb, []).append(clip)

    best, grid = {}, {}
    for verb, vclips in sorted(by_verb.items()):
        rows = []
        winner = None
        for c in candidates:
            labels = {clip.clip_id: pseudo_label_clip(clip, c) for clip in vclips}
            score = metric(vclips, labels)
            rows.append((c, score))
            if score is not None and _better((c, score), winner):
                winner = (c, score)
        grid[verb] = rows
        # all-undefined grid: fall back to the smallest config so the result is still total
        best[verb] = winner[0] if winner else min(candidates, key=lambda c: (c.tau, c.delta))
    return GridSearchResult(best, grid)
