"""Activity-progress curves and their monotonicity / completion metrics."""

from __future__ import annotations

import math
from bisect import bisect_left, insort
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

from .masks import union_area
from .model import ClipRecord, FramePhase

PROGRESS_CONVENTIONS = {
    "tau_ties": "tied pairs count as non-increasing; constant curves give tau = -1",
    "end_sigma": "population variance over end-phase frames",
    "end_l2": "root-mean-square over end-phase frames",
    "smoothing": "none",
}


@dataclass(frozen=True)
class ProgressCurve:
    # None marks frames with no actionable or transformed area
    values: tuple[Optional[float], ...]
    phases: tuple[FramePhase, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(self.values))
        object.__setattr__(self, "phases", tuple(FramePhase(p) for p in self.phases))
        if len(self.values) != len(self.phases):
            raise ValueError(f"{len(self.values)} values but {len(self.phases)} phases")
        for v in self.values:
            if v is not None and not math.isfinite(v):
                raise ValueError(f"non-finite progress value {v}")

    def present(self) -> list[float]:
        return [v for v in self.values if v is not None]


@dataclass(frozen=True)
class ProgressMetrics:
    tau: Optional[float]
    end_sigma: Optional[float]
    end_l2: Optional[float]

    @property
    def defined(self) -> bool:
        return self.tau is not None and self.end_sigma is not None


def progress_curve(clip: ClipRecord, prediction: Mapping[int, tuple]) -> ProgressCurve:
    """Fraction of state area still actionable, per frame.

    ``prediction`` maps frame index to an ``(act, trf)`` mask pair; the
    denominator is the area of their union so overlapping inputs are not
    double-counted.
    """
    values = []
    for t in range(clip.frame_count):
        pair = prediction.get(t)
        if pair is None:
            values.append(None)
            continue
        act, trf = pair
        total = union_area(act, trf)
        values.append(act.area / total if total else None)
    return ProgressCurve(values, clip.frame_phases)


def kendall_tau(curve) -> Optional[float]:
    """Monotonicity index of a curve: (increasing - non-increasing) / all pairs.

    A pair ``i < j`` is increasing only when ``v[j] > v[i]``; ties are
    non-increasing. Accepts a ProgressCurve or a plain sequence with ``None``
    for absent frames. Returns ``None`` for fewer than two present values.
    """
    values = curve.present() if isinstance(curve, ProgressCurve) else [v for v in curve if v is not None]
    n = len(values)
    if n < 2:
        return None
    seen: list[float] = []
    increasing = 0
    for v in values:
        increasing += bisect_left(seen, v)
        insort(seen, v)
    total = n * (n - 1) // 2
    return (increasing - (total - increasing)) / total


def end_state_values(curve: ProgressCurve) -> list[float]:
    return [v for v, p in zip(curve.values, curve.phases) if p == FramePhase.END and v is not None]


def end_state_metrics(curve) -> tuple[Optional[float], Optional[float]]:
    """(end_sigma, end_l2) over end-phase frames, or (None, None) without any."""
    vals = end_state_values(curve) if isinstance(curve, ProgressCurve) else [v for v in curve if v is not None]
    if not vals:
        return None, None
    n = len(vals)
    mean = sum(vals) / n
    sigma = sum((v - mean) ** 2 for v in vals) / n
    l2 = math.sqrt(sum(v * v for v in vals) / n)
    return sigma, l2


def progress_metrics(curve: ProgressCurve) -> ProgressMetrics:
    sigma, l2 = end_state_metrics(curve)
    return ProgressMetrics(kendall_tau(curve), sigma, l2)


@dataclass
class ProgressReport:
    per_clip: dict[str, ProgressMetrics]
    curves: dict[str, ProgressCurve]
    aggregate: ProgressMetrics
    # clip_id -> names of metrics that were undefined for it
    undefined: dict[str, list[str]] = field(default_factory=dict)
    metadata: dict[str, str] = field(default_factory=lambda: dict(PROGRESS_CONVENTIONS))


def _mean_defined(xs) -> Optional[float]:
    xs = [x for x in xs if x is not None]
    return sum(xs) / len(xs) if xs else None


def progress_report(clips: Sequence[ClipRecord], predictions: Mapping[str, Mapping[int, tuple]]) -> ProgressReport:
    per_clip, curves, undefined = {}, {}, {}
    for clip in sorted(clips, key=lambda c: c.clip_id):
        if clip.clip_id not in predictions:
            continue
        curve = progress_curve(clip, predictions[clip.clip_id])
        m = progress_metrics(curve)
        curves[clip.clip_id] = curve
        per_clip[clip.clip_id] = m
        missing = [name for name in ("tau", "end_sigma", "end_l2") if getattr(m, name) is None]
        if missing:
            undefined[clip.clip_id] = missing
    aggregate = ProgressMetrics(
        _mean_defined(m.tau for m in per_clip.values()),
        _mean_defined(m.end_sigma for m in per_clip.values()),
        _mean_defined(m.end_l2 for m in per_clip.values()),
    )
    return ProgressReport(per_clip, curves, aggregate, undefined)


def annotation_prediction(clip: ClipRecord) -> dict[int, tuple]:
    """Ground-truth masks in prediction form, for annotation-derived curves.

    Ignored frames are left out and so read as absent.
    """
    return {g.frame_index: (g.actionable, g.transformed) for g in (clip.ground_truth or ()) if not g.ignored}
