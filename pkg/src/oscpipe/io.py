"""On-disk formats.

A dataset is a manifest JSON plus one JSON file per clip. Masks are stored as
RLE run arrays over the clip's ``height x width`` grid. Label files hold
``clip_id -> track_id -> (frames, labels)``. Tables are CSV with ``#`` header
lines carrying the format version and the producing configuration hash.
Every writer emits sorted keys and fixed separators so equal inputs give
equal bytes.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional, Sequence

from .labeling import ThresholdTable
from .masks import MaskError, PixelMask
from .model import (
    ClipRecord,
    GroundTruthFrame,
    LabelSequence,
    MaskRegion,
    Masklet,
    ModelError,
    OscDescriptor,
    SimilarityPair,
    SplitTag,
    StateLabel,
    TextEmbeddings,
)

FORMAT_VERSION = 1
SUPPORTED_VERSIONS = {1}
SCORE_CONVENTIONS = {"raw-dot", "cosine"}


class FormatError(ValueError):
    """Unreadable or invalid artifact; the message starts with its location."""

    def __init__(self, message: str, location: str = ""):
        self.location = location
        super().__init__(f"{location}: {message}" if location else message)


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def config_hash(obj: Any) -> str:
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()[:16]


def file_digest(paths: Iterable[Path]) -> str:
    h = hashlib.sha256()
    for p in paths:
        h.update(Path(p).read_bytes())
    return h.hexdigest()[:16]


def write_json(path: Path, payload: Any) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n", encoding="utf-8")


def read_json(path: Path) -> Any:
    path = Path(path)
    if not path.exists():
        raise FormatError("file not found", str(path))
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise FormatError(f"invalid JSON ({e})", str(path)) from None


def _check_version(data: Mapping, where: str) -> None:
    version = data.get("format_version")
    if version not in SUPPORTED_VERSIONS:
        raise FormatError(f"unsupported format_version {version!r}", where)


# -- clips --------------------------------------------------------------------


def clip_to_dict(clip: ClipRecord) -> dict:
    def region(r: MaskRegion) -> dict:
        d = {"frame": r.frame_index, "rle": list(r.mask.runs)}
        if r.scores is not None:
            d["scores"] = [r.scores.s_act, r.scores.s_trf]
        if r.embedding is not None:
            d["embedding"] = list(r.embedding)
        if r.bbox is not None:
            d["bbox"] = list(r.bbox)
        return d

    out = {
        "format_version": FORMAT_VERSION,
        "clip_id": clip.clip_id,
        "osc": {
            "verb": clip.osc.verb,
            "noun": clip.osc.noun,
            "prompt_act": clip.osc.prompt_act,
            "prompt_trf": clip.osc.prompt_trf,
        },
        "frame_count": clip.frame_count,
        "height": clip.height,
        "width": clip.width,
        "fps": clip.fps,
        "frame_phases": [p.value for p in clip.frame_phases],
        "split": clip.split_tag.value,
        "detect_every": clip.detect_every,
        "masklets": [{"track_id": m.track_id, "regions": [region(r) for r in m.regions]} for m in clip.masklets],
    }
    if clip.text_embeddings is not None:
        out["text_embeddings"] = {"act": list(clip.text_embeddings.z_act), "trf": list(clip.text_embeddings.z_trf)}
    if clip.ground_truth is not None:
        out["ground_truth"] = [
            {
                "frame": g.frame_index,
                "act": list(g.actionable.runs),
                "trf": list(g.transformed.runs),
                "ignored": g.ignored,
            }
            for g in clip.ground_truth
        ]
    return out


def _mask(runs, height: int, width: int, where: str) -> PixelMask:
    try:
        return PixelMask(height, width, tuple(int(x) for x in runs))
    except (MaskError, TypeError, ValueError) as e:
        raise FormatError(f"malformed RLE: {e}", where) from None


def clip_from_dict(data: Mapping, source: str = "<clip>") -> ClipRecord:
    _check_version(data, source)
    try:
        clip_id = str(data["clip_id"])
        height, width = int(data["height"]), int(data["width"])
        osc = OscDescriptor(**{k: str(v) for k, v in data["osc"].items()})
    except (KeyError, TypeError) as e:
        raise FormatError(f"missing or invalid clip header field {e}", source) from None
    except ModelError as e:
        raise FormatError(str(e), f"{source} clip={clip_id}") from None
    loc = f"{source} clip={clip_id}"

    masklets = []
    for m in data.get("masklets", []):
        track_id = str(m.get("track_id"))
        regions = []
        for r in m.get("regions", []):
            rloc = f"{loc} track={track_id} frame={r.get('frame')}"
            try:
                scores = SimilarityPair(*map(float, r["scores"])) if r.get("scores") is not None else None
                regions.append(
                    MaskRegion(
                        int(r["frame"]),
                        _mask(r["rle"], height, width, rloc),
                        scores=scores,
                        embedding=r.get("embedding"),
                        bbox=r.get("bbox"),
                    )
                )
            except FormatError:
                raise
            except (ModelError, KeyError, TypeError, ValueError) as e:
                raise FormatError(f"invalid region: {e}", rloc) from None
        try:
            masklets.append(Masklet(track_id, regions))
        except ModelError as e:
            raise FormatError(str(e), loc) from None

    gt = None
    if data.get("ground_truth") is not None:
        gt = []
        for g in data["ground_truth"]:
            gloc = f"{loc} frame={g.get('frame')}"
            act = _mask(g.get("act"), height, width, f"{gloc} class=act")
            trf = _mask(g.get("trf"), height, width, f"{gloc} class=trf")
            try:
                gt.append(GroundTruthFrame(int(g["frame"]), act, trf, bool(g.get("ignored", False))))
            except ModelError as e:
                raise FormatError(f"invalid ground truth: {e.args[0]}", gloc) from None

    text = None
    if data.get("text_embeddings") is not None:
        try:
            text = TextEmbeddings(data["text_embeddings"]["act"], data["text_embeddings"]["trf"])
        except (ModelError, KeyError) as e:
            raise FormatError(f"invalid text embeddings: {e}", loc) from None

    try:
        return ClipRecord(
            clip_id=clip_id,
            osc=osc,
            frame_count=int(data["frame_count"]),
            height=height,
            width=width,
            fps=float(data.get("fps", 1.0)),
            frame_phases=tuple(data.get("frame_phases") or ()),
            masklets=masklets,
            split_tag=SplitTag(data.get("split", "unlabeled")),
            ground_truth=gt,
            text_embeddings=text,
            detect_every=data.get("detect_every"),
        )
    except (ModelError, KeyError, ValueError) as e:
        raise FormatError(str(e), source) from None


# -- datasets -----------------------------------------------------------------


@dataclass
class DatasetManifest:
    format_version: int = FORMAT_VERSION
    score_convention: str = "raw-dot"
    embedding_dim: Optional[int] = None
    clips: list[str] = field(default_factory=list)
    thresholds_file: Optional[str] = None
    splits_file: Optional[str] = None
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "format_version": self.format_version,
            "score_convention": self.score_convention,
            "embedding_dim": self.embedding_dim,
            "clips": list(self.clips),
            "thresholds_file": self.thresholds_file,
            "splits_file": self.splits_file,
            "metadata": self.metadata,
        }


@dataclass
class Dataset:
    manifest: DatasetManifest
    clips: list[ClipRecord]
    path: Path
    thresholds: Optional[ThresholdTable] = None
    digest: str = ""

    def by_id(self) -> dict[str, ClipRecord]:
        return {c.clip_id: c for c in self.clips}


def save_dataset(
    clips: Sequence[ClipRecord],
    directory: Path,
    score_convention: str = "raw-dot",
    metadata: Optional[dict] = None,
    thresholds: Optional[ThresholdTable] = None,
    splits: Optional[Mapping[str, str]] = None,
) -> Path:
    directory = Path(directory)
    refs = []
    dims = {c.text_embeddings.dim for c in clips if c.text_embeddings is not None}
    if len(dims) > 1:
        raise FormatError(f"clips disagree on embedding dimension {sorted(dims)}")
    for clip in clips:
        rel = f"clips/{clip.clip_id}.json"
        write_json(directory / rel, clip_to_dict(clip))
        refs.append(rel)
    manifest = DatasetManifest(
        score_convention=score_convention,
        embedding_dim=dims.pop() if dims else None,
        clips=refs,
        metadata=dict(metadata or {}),
    )
    if thresholds is not None:
        manifest.thresholds_file = "thresholds.json"
        save_thresholds(thresholds, directory / manifest.thresholds_file)
    if splits is not None:
        manifest.splits_file = "splits.json"
        write_json(directory / manifest.splits_file, {"format_version": FORMAT_VERSION, "splits": dict(splits)})
    path = directory / "manifest.json"
    body = manifest.to_dict()
    body["config_hash"] = config_hash(body)
    write_json(path, body)
    return path


def load_dataset(manifest_path: Path) -> Dataset:
    manifest_path = Path(manifest_path)
    data = read_json(manifest_path)
    where = str(manifest_path)
    _check_version(data, where)
    convention = data.get("score_convention", "raw-dot")
    if convention not in SCORE_CONVENTIONS:
        raise FormatError(f"unknown score_convention {convention!r}", where)
    manifest = DatasetManifest(
        format_version=data["format_version"],
        score_convention=convention,
        embedding_dim=data.get("embedding_dim"),
        clips=list(data.get("clips", [])),
        thresholds_file=data.get("thresholds_file"),
        splits_file=data.get("splits_file"),
        metadata=data.get("metadata") or {},
    )
    root = manifest_path.parent
    paths = [manifest_path]
    clips, seen = [], set()
    for ref in manifest.clips:
        p = root / ref
        if not p.exists():
            raise FormatError(f"referenced clip file does not exist: {p}", where)
        clip = clip_from_dict(read_json(p), str(p))
        if clip.clip_id in seen:
            raise FormatError(f"duplicate clip_id {clip.clip_id}", str(p))
        if manifest.embedding_dim is not None and clip.text_embeddings is not None:
            if clip.text_embeddings.dim != manifest.embedding_dim:
                raise FormatError(
                    f"text embedding dim {clip.text_embeddings.dim} != manifest {manifest.embedding_dim}", str(p)
                )
        seen.add(clip.clip_id)
        clips.append(clip)
        paths.append(p)

    if manifest.splits_file:
        sp = root / manifest.splits_file
        if not sp.exists():
            raise FormatError(f"referenced splits file does not exist: {sp}", where)
        splits = read_json(sp)
        _check_version(splits, str(sp))
        tags = splits.get("splits", {})
        try:
            clips = [c if c.clip_id not in tags else _with_split(c, tags[c.clip_id]) for c in clips]
        except ValueError as e:
            raise FormatError(str(e), str(sp)) from None
        paths.append(sp)

    thresholds = None
    if manifest.thresholds_file:
        tp = root / manifest.thresholds_file
        if not tp.exists():
            raise FormatError(f"referenced thresholds file does not exist: {tp}", where)
        thresholds = load_thresholds(tp)
        paths.append(tp)
    return Dataset(manifest, clips, manifest_path, thresholds, file_digest(paths))


def _with_split(clip: ClipRecord, tag: str) -> ClipRecord:
    return replace(clip, split_tag=SplitTag(tag))


# -- thresholds ---------------------------------------------------------------


def save_thresholds(table: ThresholdTable, path: Path, extra: Optional[dict] = None) -> None:
    body = {"format_version": FORMAT_VERSION, **table.to_dict()}
    if extra:
        body.update(extra)
    write_json(path, body)


def load_thresholds(path: Path) -> ThresholdTable:
    data = read_json(path)
    _check_version(data, str(path))
    try:
        return ThresholdTable.from_dict(data)
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"invalid threshold table: {e}", str(path)) from None


# -- labels -------------------------------------------------------------------

LabelMap = Mapping[str, Mapping[str, LabelSequence]]


def labels_to_dict(labels: LabelMap) -> dict:
    return {
        clip_id: {
            track_id: {"frames": seq.frames(), "labels": [lab.value for lab in seq.values()]}
            for track_id, seq in sorted(tracks.items())
        }
        for clip_id, tracks in sorted(labels.items())
    }


def save_labels(labels: LabelMap, path: Path, config_hash_value: str = "", metadata: Optional[dict] = None) -> None:
    write_json(
        path,
        {
            "format_version": FORMAT_VERSION,
            "kind": "labels",
            "config_hash": config_hash_value,
            "metadata": dict(metadata or {}),
            "clips": labels_to_dict(labels),
        },
    )


def load_labels(path: Path, clips: Optional[Sequence[ClipRecord]] = None) -> dict[str, dict[str, LabelSequence]]:
    """Read a label file; with ``clips``, reject references to unknown clips, tracks or frames."""
    where = str(path)
    data = read_json(path)
    _check_version(data, where)
    known = {c.clip_id: c for c in clips} if clips is not None else None
    out = {}
    for clip_id, tracks in (data.get("clips") or {}).items():
        clip = None
        if known is not None:
            clip = known.get(clip_id)
            if clip is None:
                raise FormatError("labels reference unknown clip", f"{where} clip={clip_id}")
        out[clip_id] = {}
        for track_id, body in tracks.items():
            loc = f"{where} clip={clip_id} track={track_id}"
            frames, labs = body.get("frames", []), body.get("labels", [])
            if len(frames) != len(labs):
                raise FormatError("frames and labels differ in length", loc)
            try:
                seq = LabelSequence(track_id, {int(t): StateLabel(lab) for t, lab in zip(frames, labs)})
            except ValueError as e:
                raise FormatError(f"invalid label: {e}", loc) from None
            if clip is not None:
                try:
                    expected = clip.masklet(track_id).frame_indices
                except KeyError:
                    raise FormatError("label for unknown track", loc) from None
                if seq.frames() != expected:
                    raise FormatError("label frames do not match the masklet's frames", loc)
            out[clip_id][track_id] = seq
    return out


# -- tables -------------------------------------------------------------------


def format_value(v) -> str:
    if v is None:
        return "undefined"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_table(path: Path, header: Sequence[str], rows: Iterable[Sequence], meta: Mapping[str, Any]) -> None:
    buf = io.StringIO()
    buf.write(f"# format_version={FORMAT_VERSION}\n")
    for k, v in meta.items():
        buf.write(f"# {k}={v}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([format_value(v) for v in row])
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(buf.getvalue(), encoding="utf-8")


def read_table(path: Path) -> tuple[dict[str, str], list[dict[str, str]]]:
    meta, body = {}, []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.startswith("# ") and "=" in line:
            k, v = line[2:].split("=", 1)
            meta[k] = v
        else:
            body.append(line)
    return meta, list(csv.DictReader(body))
