"""Pseudo-labeling, refinement and evaluation of spatially-progressing object state changes."""

from .dynamics import RefinementReport, ambiguity_resolution, causal_ordering, refine_clip
from .labeling import ThresholdConfig, ThresholdTable, compute_similarity, grid_search_thresholds, pseudo_label_clip, threshold_label
from .masks import MaskError, PixelMask, mask_area, mask_intersection, mask_union, rle_decode, rle_encode
from .metrics import EvalConfig, EvalResult, composite_prediction, evaluate, frame_iou, oracle_labels
from .model import (
    ClipRecord,
    FramePhase,
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
    index_sets,
)
from .progress import ProgressCurve, ProgressMetrics, end_state_metrics, kendall_tau, progress_curve, progress_report
from .synth import SynthConfig, generate_corpus, label_accuracy, perturb_scores

__version__ = "0.1.0"
