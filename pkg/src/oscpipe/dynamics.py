"""State-change dynamics constraints on per-masklet label sequences.

Two passes run per masklet. Causal ordering repairs sequences in which an
actionable label follows a transformed one, flipping whichever boundary
label lies further from its class's temporal midpoint. Ambiguity resolution
then assigns each ambiguous frame to the nearer of the two class boundaries.
Background labels are never touched by either pass.
"""

from __future__ import annotations

from bisect import insort
from dataclasses import dataclass
from typing import Mapping

from .model import LabelSequence, StateLabel, index_sets

A = StateLabel.ACTIONABLE
T = StateLabel.TRANSFORMED
AMB = StateLabel.AMBIGUOUS


@dataclass(frozen=True)
class RefinementReport:
    flips_causal: int = 0
    resolved_ambiguous: int = 0
    iterations: int = 0

    def __add__(self, other: "RefinementReport") -> "RefinementReport":
        return RefinementReport(
            self.flips_causal + other.flips_causal,
            self.resolved_ambiguous + other.resolved_ambiguous,
            self.iterations + other.iterations,
        )


def causal_ordering(seq: LabelSequence) -> tuple[LabelSequence, RefinementReport]:
    labels = dict(seq.labels)
    act = index_sets(seq, A)
    trf = index_sets(seq, T)
    iterations = 0
    while act and trf and act[-1] > trf[0]:
        # |x - sum/n| compared in integers: |x*n - sum| scaled by the other set's size
        n_act, n_trf = len(act), len(trf)
        dist_act = abs(act[-1] * n_act - sum(act)) * n_trf
        dist_trf = abs(trf[0] * n_trf - sum(trf)) * n_act
        if dist_act > dist_trf:
            t = act.pop()
            labels[t] = T
            insort(trf, t)
        else:
            # ties flip the early transformed label
            t = trf.pop(0)
            labels[t] = A
            insort(act, t)
        iterations += 1
    return LabelSequence(seq.track_id, labels), RefinementReport(flips_causal=iterations, iterations=iterations)


def ambiguity_resolution(seq: LabelSequence) -> tuple[LabelSequence, RefinementReport]:
    act = index_sets(seq, A)
    trf = index_sets(seq, T)
    ambiguous = index_sets(seq, AMB)
    if not ambiguous or not (act or trf):
        return seq, RefinementReport()
    updates = {}
    for t in ambiguous:
        if not trf:
            updates[t] = A
        elif not act:
            updates[t] = T
        else:
            updates[t] = A if abs(t - act[-1]) < abs(t - trf[0]) else T
    return seq.replace(updates), RefinementReport(resolved_ambiguous=len(updates))


def refine_sequence(seq: LabelSequence) -> tuple[LabelSequence, RefinementReport]:
    ordered, r1 = causal_ordering(seq)
    resolved, r2 = ambiguity_resolution(ordered)
    return resolved, r1 + r2


def refine_clip(labels: Mapping[str, LabelSequence]) -> tuple[dict[str, LabelSequence], RefinementReport]:
    refined = {}
    total = RefinementReport()
    for track_id, seq in labels.items():
        refined[track_id], report = refine_sequence(seq)
        total = total + report
    return refined, total
