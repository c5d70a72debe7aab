"""Pipeline stages and the artifacts they read and write.

Every stage reads its inputs from explicit paths or from the artifacts an
earlier stage left in the output directory, and writes its own artifact
there. Per-clip work fans out over a process pool when ``jobs > 1``; results
are collected in clip order so the bytes written never depend on ``jobs``.
"""

from __future__ import annotations

import itertools
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

from . import io as fmt
from .analytics import area_stats, phase_durations, progression_profile
from .dynamics import RefinementReport, refine_clip
from .labeling import ThresholdConfig, ThresholdTable, grid_search_thresholds, pseudo_label_clip
from .metrics import EvalConfig, EvalResult, composite_prediction, evaluate, oracle_labels
from .progress import annotation_prediction, progress_report
from .synth import RNG_NAME, SynthConfig, generate_corpus

log = logging.getLogger(__name__)

STAGES = ("synth", "gridsearch", "label", "refine", "eval", "progress", "analyze")
DEFAULT_TAUS = (0.3, 0.35, 0.4, 0.45, 0.5, 0.55, 0.6, 0.65, 0.7)
DEFAULT_DELTAS = (0.0, 0.005, 0.01, 0.02, 0.05)

ARTIFACTS = {
    "dataset": "dataset/manifest.json",
    "truth": "truth.json",
    "labels": "labels.json",
    "refined": "refined.json",
    "refine_report": "refine_report.csv",
    "eval": "eval.csv",
    "eval_summary": "eval_summary.txt",
    "progress_curves": "progress_curves.csv",
    "progress_metrics": "progress_metrics.csv",
    "phase_durations": "phase_durations.csv",
    "area_stats": "area_stats.csv",
    "progression_profile": "progression_profile.csv",
    "gridsearch": "gridsearch.csv",
    "thresholds": "thresholds.json",
}


class PipelineError(RuntimeError):
    pass


@dataclass
class RunConfig:
    out: Path
    manifest: Optional[Path] = None
    jobs: int = 1
    seed: int = 0
    thresholds: Optional[Path] = None
    verb: Optional[str] = None
    labels: Optional[Path] = None
    split: str = "full"
    fuse_states: bool = False
    per_verb: bool = False
    oracle: bool = False
    theta: float = 0.5
    report: bool = False
    annotations: bool = False
    bins: int = 10
    taus: Sequence[float] = DEFAULT_TAUS
    deltas: Sequence[float] = DEFAULT_DELTAS
    synth: SynthConfig = field(default_factory=SynthConfig)


# process-pool workers must be module level


def _label_worker(args):
    clip, table = args
    return pseudo_label_clip(clip, table)


def _refine_worker(labels):
    return refine_clip(labels)


def _predict_worker(args):
    clip, labels = args
    return composite_prediction(clip, labels)


def _oracle_worker(args):
    clip, theta = args
    return oracle_labels(clip, theta)


class Pipeline:
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.out = Path(cfg.out)
        self.produced: dict[str, Path] = {}
        self._dataset: Optional[fmt.Dataset] = None

    # -- plumbing ----------------------------------------------------------

    def path(self, key: str) -> Path:
        return self.out / ARTIFACTS[key]

    def _map(self, fn: Callable, items: list) -> list:
        if self.cfg.jobs > 1 and len(items) > 1:
            with ProcessPoolExecutor(max_workers=self.cfg.jobs) as ex:
                return list(ex.map(fn, items, chunksize=max(1, len(items) // (4 * self.cfg.jobs))))
        return [fn(x) for x in items]

    def dataset(self, stage: str) -> fmt.Dataset:
        if self._dataset is None:
            manifest = self.cfg.manifest or self.produced.get("dataset")
            if manifest is None and self.path("dataset").exists():
                manifest = self.path("dataset")
            if manifest is None:
                raise PipelineError(
                    f"stage '{stage}' needs a dataset manifest: pass --manifest or run 'synth' "
                    f"(looked for {self.path('dataset')})"
                )
            self._dataset = fmt.load_dataset(manifest)
        return self._dataset

    def clips(self, stage: str):
        clips = self.dataset(stage).clips
        if self.cfg.verb:
            clips = [c for c in clips if c.verb == self.cfg.verb]
        return clips

    def _artifact(self, stage: str, *keys: str, explicit: Optional[Path] = None) -> Path:
        """First of: explicit path, artifact produced this run, artifact already on disk."""
        if explicit is not None:
            if not Path(explicit).exists():
                raise PipelineError(f"stage '{stage}' input not found: {explicit}")
            return Path(explicit)
        for k in keys:
            if k in self.produced:
                return self.produced[k]
        for k in keys:
            if self.path(k).exists():
                return self.path(k)
        names = " or ".join(str(self.path(k)) for k in keys)
        raise PipelineError(f"stage '{stage}' requires the {keys[0]} artifact; missing {names}")

    def threshold_table(self) -> tuple[ThresholdTable, str]:
        if self.cfg.thresholds is not None:
            return fmt.load_thresholds(self.cfg.thresholds), str(self.cfg.thresholds)
        if "thresholds" in self.produced:
            return fmt.load_thresholds(self.produced["thresholds"]), "gridsearch"
        ds = self.dataset("label")
        if ds.thresholds is not None:
            return ds.thresholds, "manifest"
        return ThresholdTable(), "default"

    def _hash(self, stage: str, **params) -> str:
        return fmt.config_hash({"stage": stage, "format_version": fmt.FORMAT_VERSION, **params})

    def _done(self, key: str, path: Path) -> Path:
        self.produced[key] = path
        log.info("wrote %s", path)
        return path

    # -- stages --------------------------------------------------------------

    def synth(self):
        scfg = replace(self.cfg.synth, seed=self.cfg.seed)
        h = self._hash("synth", synth=scfg.to_dict())
        executor = ProcessPoolExecutor(self.cfg.jobs) if self.cfg.jobs > 1 else None
        try:
            corpus = generate_corpus(scfg, executor)
        finally:
            if executor is not None:
                executor.shutdown()
        meta = {"generator": scfg.to_dict(), "seed": scfg.seed, "rng": RNG_NAME, "producer_config_hash": h}
        manifest = fmt.save_dataset(corpus.clips, self.path("dataset").parent, metadata=meta)
        self._dataset = None
        self._done("dataset", manifest)
        fmt.save_labels(corpus.truth, self.path("truth"), h, {"kind": "truth", "seed": scfg.seed})
        self._done("truth", self.path("truth"))

    def gridsearch(self):
        ds = self.dataset("gridsearch")
        clips = [c for c in self.clips("gridsearch") if c.ground_truth is not None]
        if not clips:
            raise PipelineError("stage 'gridsearch' requires clips with ground truth")
        candidates = [ThresholdConfig(t, d) for t, d in itertools.product(self.cfg.taus, self.cfg.deltas)]
        h = self._hash("gridsearch", dataset=ds.digest, taus=list(self.cfg.taus), deltas=list(self.cfg.deltas),
                       verb=self.cfg.verb)
        result = grid_search_thresholds(candidates, clips)
        fmt.write_table(
            self.path("gridsearch"),
            ["verb", "tau", "delta", "miou"],
            result.rows(),
            {"config_hash": h, "tie_break": "lower tau then lower delta"},
        )
        self._done("gridsearch", self.path("gridsearch"))
        fmt.save_thresholds(result.table(), self.path("thresholds"), {"config_hash": h})
        self._done("thresholds", self.path("thresholds"))

    def label(self):
        ds = self.dataset("label")
        clips = self.clips("label")
        table, source = self.threshold_table()
        h = self._hash("label", dataset=ds.digest, thresholds=table.to_dict(), verb=self.cfg.verb)
        results = self._map(_label_worker, [(c, table) for c in clips])
        labels = {c.clip_id: r for c, r in zip(clips, results)}
        meta = {
            "stage": "label",
            "thresholds": table.to_dict(),
            "thresholds_source": source,
            "score_convention": ds.manifest.score_convention,
        }
        fmt.save_labels(labels, self.path("labels"), h, meta)
        self._done("labels", self.path("labels"))

    def refine(self):
        ds = self.dataset("refine")
        src = self._artifact("refine", "labels", explicit=self.cfg.labels)
        labels = fmt.load_labels(src, ds.clips)
        h = self._hash("refine", dataset=ds.digest, labels=fmt.file_digest([src]))
        ids = sorted(labels)
        results = self._map(_refine_worker, [labels[i] for i in ids])
        refined = {i: r[0] for i, r in zip(ids, results)}
        fmt.save_labels(refined, self.path("refined"), h, {"stage": "refine"})
        self._done("refined", self.path("refined"))
        if self.cfg.report:
            total = RefinementReport()
            rows = []
            for i, (_, rep) in zip(ids, results):
                rows.append((i, rep.flips_causal, rep.resolved_ambiguous, rep.iterations))
                total = total + rep
            rows.append(("total", total.flips_causal, total.resolved_ambiguous, total.iterations))
            fmt.write_table(
                self.path("refine_report"),
                ["clip_id", "flips_causal", "resolved_ambiguous", "iterations"],
                rows,
                {"config_hash": h},
            )
            self._done("refine_report", self.path("refine_report"))

    def _predictions(self, stage: str, clips):
        if self.cfg.oracle:
            labels = dict(zip([c.clip_id for c in clips], self._map(_oracle_worker, [(c, self.cfg.theta) for c in clips])))
            source = f"oracle(theta={self.cfg.theta})"
        else:
            src = self._artifact(stage, "refined", "labels", explicit=self.cfg.labels)
            labels = fmt.load_labels(src, clips if not self.cfg.verb else self.dataset(stage).clips)
            source = fmt.file_digest([src])
        clips = [c for c in clips if c.clip_id in labels]
        preds = self._map(_predict_worker, [(c, labels[c.clip_id]) for c in clips])
        return {c.clip_id: p for c, p in zip(clips, preds)}, source

    def eval(self):
        ds = self.dataset("eval")
        clips = [c for c in self.clips("eval") if c.ground_truth is not None]
        if not clips:
            raise PipelineError("stage 'eval' requires ground truth; no selected clip carries any")
        preds, source = self._predictions("eval", clips)
        ecfg = EvalConfig(self.cfg.split, self.cfg.fuse_states)
        result = evaluate(clips, preds, ecfg)
        h = self._hash("eval", dataset=ds.digest, labels=source, split=ecfg.split_filter.value,
                       fuse_states=ecfg.fuse_states, verb=self.cfg.verb)
        rows = [("all", result.miou, result.miou_act, result.miou_trf, result.frames_evaluated, result.frames_ignored)]
        if self.cfg.per_verb:
            for verb in sorted(result.per_verb):
                rows.append((verb, result.per_verb[verb], result.per_verb_act.get(verb),
                             result.per_verb_trf.get(verb), "", ""))
        fmt.write_table(
            self.path("eval"),
            ["scope", "miou", "miou_act", "miou_trf", "frames_evaluated", "frames_ignored"],
            rows,
            {"config_hash": h, **result.metadata},
        )
        self._done("eval", self.path("eval"))
        self.path("eval_summary").write_text(format_eval_summary(result, self.cfg.per_verb), encoding="utf-8")
        self._done("eval_summary", self.path("eval_summary"))
        return result

    def progress(self):
        ds = self.dataset("progress")
        clips = self.clips("progress")
        if self.cfg.annotations:
            clips = [c for c in clips if c.ground_truth is not None]
            preds = {c.clip_id: annotation_prediction(c) for c in clips}
            source = "annotations"
        else:
            preds, source = self._predictions("progress", clips)
        report = progress_report(clips, preds)
        h = self._hash("progress", dataset=ds.digest, source=source, verb=self.cfg.verb)
        curve_rows = (
            (cid, t, v, p.value)
            for cid, curve in report.curves.items()
            for t, (v, p) in enumerate(zip(curve.values, curve.phases))
        )
        fmt.write_table(self.path("progress_curves"), ["clip_id", "frame", "value", "phase"], curve_rows,
                        {"config_hash": h, "absent": "undefined"})
        self._done("progress_curves", self.path("progress_curves"))
        rows = [(cid, m.tau, m.end_sigma, m.end_l2) for cid, m in report.per_clip.items()]
        a = report.aggregate
        rows.append(("mean", a.tau, a.end_sigma, a.end_l2))
        fmt.write_table(self.path("progress_metrics"), ["clip_id", "tau", "end_sigma", "end_l2"], rows,
                        {"config_hash": h, **report.metadata})
        self._done("progress_metrics", self.path("progress_metrics"))
        return report

    def analyze(self):
        ds = self.dataset("analyze")
        clips = [c for c in self.clips("analyze") if c.ground_truth is not None]
        h = self._hash("analyze", dataset=ds.digest, bins=self.cfg.bins, verb=self.cfg.verb)
        meta = {"config_hash": h}
        fmt.write_table(
            self.path("phase_durations"),
            ["clip_id", "verb", "act_duration", "trf_duration", "overlap"],
            ((c.clip_id, c.verb, *phase_durations(c)) for c in sorted(clips, key=lambda c: c.clip_id)),
            meta,
        )
        self._done("phase_durations", self.path("phase_durations"))
        stats = area_stats(clips)
        fmt.write_table(
            self.path("area_stats"),
            ["verb", "class", "mean", "std", "frames"],
            ((v, cls, s.mean, s.std, s.count) for v, per in stats.items() for cls, s in per.items()),
            {**meta, "std": "population"},
        )
        self._done("area_stats", self.path("area_stats"))
        bins = self.cfg.bins
        profile = progression_profile(clips, bins)
        rows = []
        for verb, row in profile.items():
            for b, cell in enumerate(row):
                lo, hi = b / bins, (b + 1) / bins
                if cell is None:
                    rows.append((verb, b, lo, hi, None, None, None, None, 0))
                else:
                    rows.append((verb, b, lo, hi, cell.act_mean, cell.act_std, cell.trf_mean, cell.trf_std, cell.frames))
        fmt.write_table(
            self.path("progression_profile"),
            ["verb", "bin", "t_start", "t_end", "act_mean", "act_std", "trf_mean", "trf_std", "frames"],
            rows,
            {**meta, "binning": "floor(bins*t/T)"},
        )
        self._done("progression_profile", self.path("progression_profile"))


def format_eval_summary(result: EvalResult, per_verb: bool = False) -> str:
    def f(x):
        return "undefined" if x is None else f"{x:.4f}"

    lines = [
        f"mIoU      {f(result.miou)}",
        f"mIoU_act  {f(result.miou_act)}",
        f"mIoU_trf  {f(result.miou_trf)}",
        f"frames evaluated {result.frames_evaluated}, ignored {result.frames_ignored}",
    ]
    if per_verb:
        for verb in sorted(result.per_verb):
            lines.append(f"  {verb:<12} {f(result.per_verb[verb])}")
    return "\n".join(lines) + "\n"


def run_pipeline(stages: Sequence[str], cfg: RunConfig) -> dict[str, Path]:
    """Run ``stages`` in pipeline order; returns the artifacts written."""
    unknown = sorted(set(stages) - set(STAGES))
    if unknown:
        raise PipelineError(f"unknown stage(s): {', '.join(unknown)}; choose from {', '.join(STAGES)}")
    pipe = Pipeline(cfg)
    pipe.out.mkdir(parents=True, exist_ok=True)
    for stage in STAGES:
        if stage in stages:
            getattr(pipe, stage)()
    return dict(pipe.produced)
