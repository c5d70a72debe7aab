"""Clips, masklets, labels and ground truth."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping, Optional, Sequence

from .masks import MaskError, PixelMask, intersection_area


class ModelError(ValueError):
    """A data-model invariant was violated; ``location`` pinpoints where."""

    def __init__(self, message: str, location: str = ""):
        self.location = location
        super().__init__(f"{location}: {message}" if location else message)


class StateLabel(str, enum.Enum):
    ACTIONABLE = "actionable"
    TRANSFORMED = "transformed"
    AMBIGUOUS = "ambiguous"
    BACKGROUND = "background"

    @property
    def short(self) -> str:
        return _SHORT[self]


_SHORT = {
    StateLabel.ACTIONABLE: "A",
    StateLabel.TRANSFORMED: "T",
    StateLabel.AMBIGUOUS: "amb",
    StateLabel.BACKGROUND: "bg",
}


class FramePhase(str, enum.Enum):
    INITIAL = "initial"
    TRANSITION = "transition"
    END = "end"
    UNLABELED = "unlabeled"


class SplitTag(str, enum.Enum):
    SEEN = "seen"
    NOVEL = "novel"
    UNLABELED = "unlabeled"


@dataclass(frozen=True)
class SimilarityPair:
    s_act: float
    s_trf: float

    def __post_init__(self):
        if not (math.isfinite(self.s_act) and math.isfinite(self.s_trf)):
            raise ModelError(f"non-finite similarity scores ({self.s_act}, {self.s_trf})")

    def swapped(self) -> "SimilarityPair":
        return SimilarityPair(self.s_trf, self.s_act)


@dataclass(frozen=True)
class TextEmbeddings:
    z_act: tuple[float, ...]
    z_trf: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "z_act", tuple(float(x) for x in self.z_act))
        object.__setattr__(self, "z_trf", tuple(float(x) for x in self.z_trf))
        if len(self.z_act) != len(self.z_trf):
            raise ModelError(f"text embedding dimensions differ: {len(self.z_act)} vs {len(self.z_trf)}")
        if not all(math.isfinite(x) for x in self.z_act + self.z_trf):
            raise ModelError("non-finite text embedding entry")

    @property
    def dim(self) -> int:
        return len(self.z_act)


@dataclass(frozen=True)
class MaskRegion:
    frame_index: int
    mask: PixelMask
    scores: Optional[SimilarityPair] = None
    embedding: Optional[tuple[float, ...]] = None
    bbox: Optional[tuple[int, int, int, int]] = None

    def __post_init__(self):
        if self.frame_index < 0:
            raise ModelError(f"negative frame index {self.frame_index}")
        if self.mask.is_empty():
            raise ModelError("region mask has no foreground pixels", f"frame={self.frame_index}")
        if self.embedding is not None:
            object.__setattr__(self, "embedding", tuple(float(x) for x in self.embedding))
        if self.bbox is not None:
            object.__setattr__(self, "bbox", tuple(int(x) for x in self.bbox))


@dataclass(frozen=True)
class Masklet:
    track_id: str
    regions: tuple[MaskRegion, ...]

    def __post_init__(self):
        object.__setattr__(self, "regions", tuple(self.regions))
        prev = -1
        for r in self.regions:
            if r.frame_index <= prev:
                raise ModelError(
                    "frame indices must be strictly increasing",
                    f"track={self.track_id} frame={r.frame_index}",
                )
            prev = r.frame_index
        shapes = {r.mask.shape for r in self.regions}
        if len(shapes) > 1:
            raise ModelError(f"masks have differing dimensions {sorted(shapes)}", f"track={self.track_id}")

    @property
    def frame_indices(self) -> list[int]:
        return [r.frame_index for r in self.regions]

    def region_at(self, frame_index: int) -> Optional[MaskRegion]:
        for r in self.regions:
            if r.frame_index == frame_index:
                return r
        return None


@dataclass(frozen=True)
class OscDescriptor:
    verb: str
    noun: str
    prompt_act: str
    prompt_trf: str

    def __post_init__(self):
        for name in ("verb", "noun", "prompt_act", "prompt_trf"):
            if not getattr(self, name):
                raise ModelError(f"OSC descriptor field '{name}' is empty")


@dataclass(frozen=True)
class GroundTruthFrame:
    frame_index: int
    actionable: PixelMask
    transformed: PixelMask
    ignored: bool = False

    def __post_init__(self):
        if self.actionable.shape != self.transformed.shape:
            raise ModelError("actionable/transformed mask dimensions differ", f"frame={self.frame_index}")
        shared = intersection_area(self.actionable, self.transformed)
        if shared:
            raise ModelError(
                f"actionable and transformed masks overlap on {shared} pixels",
                f"frame={self.frame_index}",
            )


@dataclass(frozen=True)
class ClipRecord:
    clip_id: str
    osc: OscDescriptor
    frame_count: int
    height: int
    width: int
    fps: float = 1.0
    frame_phases: tuple[FramePhase, ...] = ()
    masklets: tuple[Masklet, ...] = ()
    split_tag: SplitTag = SplitTag.UNLABELED
    ground_truth: Optional[tuple[GroundTruthFrame, ...]] = None
    text_embeddings: Optional[TextEmbeddings] = None
    # detector cadence of the upstream proposal pipeline, metadata only
    detect_every: Optional[int] = None

    def __post_init__(self):
        loc = f"clip={self.clip_id}"
        if self.frame_count <= 0:
            raise ModelError("frame_count must be positive", loc)
        if not self.fps > 0:
            raise ModelError("fps must be positive", loc)
        phases = tuple(FramePhase(p) for p in self.frame_phases) or (FramePhase.UNLABELED,) * self.frame_count
        if len(phases) != self.frame_count:
            raise ModelError(f"{len(phases)} frame phases for {self.frame_count} frames", loc)
        object.__setattr__(self, "frame_phases", phases)
        object.__setattr__(self, "split_tag", SplitTag(self.split_tag))
        object.__setattr__(self, "masklets", tuple(self.masklets))
        seen = set()
        for m in self.masklets:
            if m.track_id in seen:
                raise ModelError("duplicate track id", f"{loc} track={m.track_id}")
            seen.add(m.track_id)
            for r in m.regions:
                if r.frame_index >= self.frame_count:
                    raise ModelError(
                        f"frame index beyond clip length {self.frame_count}",
                        f"{loc} track={m.track_id} frame={r.frame_index}",
                    )
                if r.mask.shape != (self.height, self.width):
                    raise ModelError(
                        f"mask shape {r.mask.shape} != clip grid {(self.height, self.width)}",
                        f"{loc} track={m.track_id} frame={r.frame_index}",
                    )
        if self.ground_truth is not None:
            gt = tuple(self.ground_truth)
            object.__setattr__(self, "ground_truth", gt)
            prev = -1
            for g in gt:
                floc = f"{loc} frame={g.frame_index}"
                if not prev < g.frame_index < self.frame_count:
                    raise ModelError("ground-truth frames must be increasing and within the clip", floc)
                prev = g.frame_index
                if g.actionable.shape != (self.height, self.width):
                    raise ModelError("ground-truth mask shape does not match clip grid", floc)

    @property
    def verb(self) -> str:
        return self.osc.verb

    def masklet(self, track_id: str) -> Masklet:
        for m in self.masklets:
            if m.track_id == track_id:
                return m
        raise KeyError(track_id)

    def gt_by_frame(self) -> dict[int, GroundTruthFrame]:
        return {g.frame_index: g for g in (self.ground_truth or ())}


@dataclass(frozen=True)
class LabelSequence:
    track_id: str
    labels: Mapping[int, StateLabel] = field(default_factory=dict)

    def __post_init__(self):
        items = sorted((int(k), StateLabel(v)) for k, v in dict(self.labels).items())
        object.__setattr__(self, "labels", MappingProxyType(dict(items)))

    @classmethod
    def from_list(cls, track_id: str, labels: Sequence[StateLabel], start: int = 0) -> "LabelSequence":
        return cls(track_id, {start + i: lab for i, lab in enumerate(labels)})

    def frames(self) -> list[int]:
        return list(self.labels)

    def values(self) -> list[StateLabel]:
        return list(self.labels.values())

    def replace(self, updates: Mapping[int, StateLabel]) -> "LabelSequence":
        merged = dict(self.labels)
        for k in updates:
            if k not in merged:
                raise KeyError(k)
        merged.update(updates)
        return LabelSequence(self.track_id, merged)

    def __len__(self):
        return len(self.labels)

    def __reduce__(self):
        # mappingproxy does not pickle; needed for process-pool workers
        return (LabelSequence, (self.track_id, dict(self.labels)))


def index_sets(seq: LabelSequence, label: StateLabel) -> list[int]:
    """Sorted frame indices at which ``seq`` carries ``label``."""
    return [t for t, lab in seq.labels.items() if lab == label]


def check_labels_cover(clip: ClipRecord, labels: Mapping[str, LabelSequence]) -> None:
    """Raise if ``labels`` does not match the clip's masklets frame-for-frame."""
    tracks = {m.track_id: m for m in clip.masklets}
    for track_id, seq in labels.items():
        if track_id not in tracks:
            raise ModelError("label for unknown track", f"clip={clip.clip_id} track={track_id}")
        expected = tracks[track_id].frame_indices
        if seq.frames() != expected:
            extra = sorted(set(seq.frames()) - set(expected))
            missing = sorted(set(expected) - set(seq.frames()))
            raise ModelError(
                f"label frames do not match masklet (extra={extra}, missing={missing})",
                f"clip={clip.clip_id} track={track_id}",
            )


__all__ = [
    "ClipRecord",
    "FramePhase",
    "GroundTruthFrame",
    "LabelSequence",
    "MaskError",
    "MaskRegion",
    "Masklet",
    "ModelError",
    "OscDescriptor",
    "SimilarityPair",
    "SplitTag",
    "StateLabel",
    "TextEmbeddings",
    "check_labels_cover",
    "index_sets",
]
