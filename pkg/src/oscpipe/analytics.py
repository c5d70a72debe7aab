"""Dataset statistics over ground truth: phase durations, areas, progression."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np

from .model import ClipRecord


class PhaseDurations(NamedTuple):
    act: int
    trf: int
    overlap: int


@dataclass(frozen=True)
class AreaStat:
    mean: float
    std: float
    count: int


@dataclass(frozen=True)
class ProfileBin:
    act_mean: float
    act_std: float
    trf_mean: float
    trf_std: float
    frames: int


def _gt_frames(clip: ClipRecord):
    return [g for g in (clip.ground_truth or ()) if not g.ignored]


def phase_durations(clip: ClipRecord) -> PhaseDurations:
    """Frames with a non-empty actionable mask, transformed mask, and both."""
    act = trf = both = 0
    for g in _gt_frames(clip):
        a, t = not g.actionable.is_empty(), not g.transformed.is_empty()
        act += a
        trf += t
        both += a and t
    return PhaseDurations(act, trf, both)


def _stat(xs) -> AreaStat:
    arr = np.asarray(xs, dtype=float)
    return AreaStat(float(arr.mean()), float(arr.std()), int(arr.size))


def area_stats(clips: Iterable[ClipRecord]) -> dict[str, dict[str, AreaStat]]:
    """Per-verb population mean/std of non-empty GT areas, keyed ``act``/``trf``."""
    areas: dict[str, dict[str, list[int]]] = {}
    for clip in clips:
        for g in _gt_frames(clip):
            bucket = areas.setdefault(clip.verb, {"act": [], "trf": []})
            if g.actionable.area:
                bucket["act"].append(g.actionable.area)
            if g.transformed.area:
                bucket["trf"].append(g.transformed.area)
    return {
        verb: {cls: _stat(xs) for cls, xs in sorted(b.items()) if xs}
        for verb, b in sorted(areas.items())
    }


def time_bin(t: int, frame_count: int, bins: int) -> int:
    return min(bins - 1, (bins * t) // frame_count)


def progression_profile(clips: Iterable[ClipRecord], bins: int) -> dict[str, list[ProfileBin | None]]:
    """Per-verb GT areas against normalized time.

    Frame ``t`` of a ``T``-frame clip lands in bin ``floor(bins * t / T)``;
    every annotated frame in a bin (empty classes count as area 0) is pooled
    across clips. Bins no frame reaches are ``None``.
    """
    if bins < 1:
        raise ValueError("bins must be >= 1")
    pooled: dict[str, list[tuple[list[int], list[int]]]] = {}
    for clip in clips:
        per_bin = pooled.setdefault(clip.verb, [([], []) for _ in range(bins)])
        for g in _gt_frames(clip):
            acts, trfs = per_bin[time_bin(g.frame_index, clip.frame_count, bins)]
            acts.append(g.actionable.area)
            trfs.append(g.transformed.area)
    out = {}
    for verb, per_bin in sorted(pooled.items()):
        row = []
        for acts, trfs in per_bin:
            if not acts:
                row.append(None)
                continue
            a, t = np.asarray(acts, dtype=float), np.asarray(trfs, dtype=float)
            row.append(ProfileBin(float(a.mean()), float(a.std()), float(t.mean()), float(t.std()), len(acts)))
        out[verb] = row
    return out
