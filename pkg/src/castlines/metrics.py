"""Diarisation and character-recognition scoring.

DER follows the standard time-weighted definition with a forgiveness
collar around every reference boundary and multiplicity accounting for
overlapped speech. Hypothesis labels are real character names, so the
default mode compares labels literally; an optimal one-to-one mapping
mode exists for scoring name-free diarisers. CDER here is an
operational utterance-level metric (same-speaker overlap above half the
utterance), reported as "CDER(op)" to distinguish it from other
utterance-level definitions in circulation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import (
    Assignment,
    CastList,
    PipelineConfig,
    SegmentRecord,
    TimeInterval,
    interval_overlap,
)
from .errors import MetricError, ValidationError
from .exemplars import Exemplar, build_visible_map
from .io import EpisodeBundle, ReferenceAnnotation
from .assigner import classify_against_exemplars, local_context_classify

Turn = tuple[TimeInterval, str]


@dataclass(frozen=True, slots=True)
class DiarisationScore:
    """Time-weighted diarisation errors, in seconds, plus their ratio."""

    der: float
    miss: float
    false_alarm: float
    speaker_error: float
    scored_speech: float


@dataclass(frozen=True, slots=True)
class RecognitionReport:
    accuracy: float
    precision: float
    recall: float
    precision_main: float
    recall_main: float
    unknown_rate: float
    confusion: dict[str, dict[str, int]]


@dataclass(frozen=True, slots=True)
class CurvePoint:
    stratum: str
    threshold: float
    precision: Optional[float]
    pocs: float


# ---------------------------------------------------------------------------
# DER
# ---------------------------------------------------------------------------


def _check_turns(turns: Sequence[Turn], what: str):
    for interval, speaker in turns:
        if not isinstance(interval, TimeInterval):
            raise ValidationError(f"{what} entries must carry TimeInterval instances")
        if not speaker:
            raise ValidationError(f"{what} entries must carry non-empty speaker labels")


def _scored_regions(
    reference: Sequence[Turn],
    hypothesis: Sequence[Turn],
    collar: float,
) -> list[tuple[float, frozenset[str], frozenset[str]]]:
    """Maximal homogeneous regions outside the collar zones.

    Returns (duration, reference speakers, hypothesis speakers) per
    region; regions inside a collar zone around any reference boundary
    are dropped entirely.
    """
    if collar < 0:
        raise ValidationError("collar must be >= 0")
    points: set[float] = set()
    zones: list[tuple[float, float]] = []
    for interval, _ in reference:
        points.add(interval.start)
        points.add(interval.end)
        for b in (interval.start, interval.end):
            zones.append((b - collar, b + collar))
            points.add(b - collar)
            points.add(b + collar)
    for interval, _ in hypothesis:
        points.add(interval.start)
        points.add(interval.end)
    cuts = sorted(points)
    regions = []
    for t0, t1 in zip(cuts, cuts[1:]):
        if t1 <= t0:
            continue
        mid = 0.5 * (t0 + t1)
        if any(z0 < mid < z1 for z0, z1 in zones):
            continue
        ref_active = frozenset(spk for iv, spk in reference if iv.start <= mid < iv.end)
        hyp_active = frozenset(spk for iv, spk in hypothesis if iv.start <= mid < iv.end)
        if ref_active or hyp_active:
            regions.append((t1 - t0, ref_active, hyp_active))
    return regions


def _optimal_mapping(regions) -> dict[str, str]:
    """One-to-one hyp->ref label map maximising jointly active time."""
    ref_names = sorted({spk for _, ref, _ in regions for spk in ref})
    hyp_names = sorted({spk for _, _, hyp in regions for spk in hyp})
    if not ref_names or not hyp_names:
        return {}
    time_matrix = np.zeros((len(ref_names), len(hyp_names)))
    ref_idx = {n: i for i, n in enumerate(ref_names)}
    hyp_idx = {n: i for i, n in enumerate(hyp_names)}
    for dur, ref, hyp in regions:
        for r in ref:
            for h in hyp:
                time_matrix[ref_idx[r], hyp_idx[h]] += dur
    rows, cols = linear_sum_assignment(-time_matrix)
    return {hyp_names[c]: ref_names[r] for r, c in zip(rows, cols) if time_matrix[r, c] > 0}


def compute_der(
    reference: Sequence[Turn],
    hypothesis: Sequence[Turn],
    collar: float = 0.25,
    mode: str = "identification",
) -> DiarisationScore:
    """Diarisation error rate with collar and overlap multiplicity.

    mode "identification" compares speaker names literally (hypothesis
    labels are cast names); mode "optimal" first finds the one-to-one
    label mapping that maximises agreement, for clustering baselines.
    """
    _check_turns(reference, "reference")
    _check_turns(hypothesis, "hypothesis")
    if mode not in ("identification", "optimal"):
        raise ValidationError(f"unknown DER mode {mode!r}")
    regions = _scored_regions(reference, hypothesis, collar)
    mapping = _optimal_mapping(regions) if mode == "optimal" else None

    miss = 0.0
    false_alarm = 0.0
    speaker_error = 0.0
    scored = 0.0
    for dur, ref, hyp in regions:
        if mapping is not None:
            hyp = frozenset(mapping.get(h, h) for h in hyp)
        n_ref = len(ref)
        n_hyp = len(hyp)
        n_correct = len(ref & hyp)
        miss += dur * max(0, n_ref - n_hyp)
        false_alarm += dur * max(0, n_hyp - n_ref)
        speaker_error += dur * (min(n_ref, n_hyp) - n_correct)
        scored += dur * n_ref
    if scored <= 0:
        raise MetricError("DER undefined: no scored reference speech")
    return DiarisationScore(
        der=(miss + false_alarm + speaker_error) / scored,
        miss=miss,
        false_alarm=false_alarm,
        speaker_error=speaker_error,
        scored_speech=scored,
    )


# ---------------------------------------------------------------------------
# CDER (operational definition)
# ---------------------------------------------------------------------------


def compute_cder(reference_utterances: Sequence[Turn], hypothesis: Sequence[Turn]) -> float:
    """Utterance-level error: a reference utterance counts correct iff a
    same-speaker hypothesis segment overlaps more than half of it."""
    _check_turns(reference_utterances, "reference")
    _check_turns(hypothesis, "hypothesis")
    if not reference_utterances:
        raise MetricError("CDER undefined: empty reference")
    correct = 0
    for interval, speaker in reference_utterances:
        half = 0.5 * interval.duration
        for hyp_interval, label in hypothesis:
            if label == speaker and interval_overlap(interval, hyp_interval) > half:
                correct += 1
                break
    return 1.0 - correct / len(reference_utterances)


# ---------------------------------------------------------------------------
# Character recognition
# ---------------------------------------------------------------------------


def hypothesis_turns(
    segments: Sequence[SegmentRecord],
    assignments: Sequence[Assignment],
) -> list[Turn]:
    """Named speech turns for scoring; dual labels yield two turns."""
    seg_by_id = {s.id: s for s in segments}
    turns: list[Turn] = []
    for a in sorted(assignments, key=lambda a: a.segment_id):
        seg = seg_by_id.get(a.segment_id)
        if seg is None:
            raise ValidationError(f"assignment references unknown segment {a.segment_id!r}")
        for label in a.labels:
            turns.append((seg.interval, label))
    return turns


def _match_reference(
    interval: TimeInterval,
    reference: ReferenceAnnotation,
) -> list:
    """Reference entries with maximal positive overlap against interval."""
    best = 0.0
    matched = []
    for entry in reference.entries:
        ov = interval_overlap(interval, entry.interval)
        if ov <= 0:
            continue
        if ov > best + 1e-9:
            best = ov
            matched = [entry]
        elif ov >= best - 1e-9:
            matched.append(entry)
    return matched


def recognition_report(
    reference: ReferenceAnnotation,
    assignments: Sequence[Assignment],
    segments: Sequence[SegmentRecord],
    cast: CastList,
) -> RecognitionReport:
    """Accuracy, precision and recall over reference-matched records.

    Every assignment contributes one record per carried label (dual
    overlap assignments contribute two; unknowns contribute one unnamed
    record). A record is correct when its name matches a maximal-overlap
    reference entry. Unknowns count against accuracy and recall but not
    against precision. Main-character variants filter by the reference
    (recall) or the predicted (precision) side.
    """
    seg_by_id = {s.id: s for s in segments}
    records: list[tuple[TimeInterval, Optional[str]]] = []
    n_unknown_assignments = 0
    for a in assignments:
        seg = seg_by_id.get(a.segment_id)
        if seg is None:
            raise ValidationError(f"assignment references unknown segment {a.segment_id!r}")
        if a.label is None:
            n_unknown_assignments += 1
            records.append((seg.interval, None))
        else:
            for label in a.labels:
                records.append((seg.interval, label))

    matched = 0
    correct = 0
    named = 0
    named_correct = 0
    named_main = 0
    named_main_correct = 0
    ref_main = 0
    ref_main_correct = 0
    confusion: dict[str, dict[str, int]] = {}

    for interval, label in records:
        candidates = _match_reference(interval, reference)
        if not candidates:
            continue
        matched += 1
        speakers = {e.speaker for e in candidates}
        is_correct = label is not None and label in speakers
        if is_correct:
            chosen = label
        else:
            chosen = min(candidates, key=lambda e: (e.interval.start, e.speaker)).speaker
        predicted = label if label is not None else "[UNKNOWN]"
        confusion.setdefault(chosen, {}).setdefault(predicted, 0)
        confusion[chosen][predicted] += 1

        if is_correct:
            correct += 1
        if label is not None:
            named += 1
            if is_correct:
                named_correct += 1
            if cast.is_main(label):
                named_main += 1
                if is_correct:
                    named_main_correct += 1
        if cast.is_main(chosen):
            ref_main += 1
            if is_correct:
                ref_main_correct += 1

    def ratio(num: int, den: int) -> float:
        return num / den if den else 0.0

    return RecognitionReport(
        accuracy=ratio(correct, matched),
        precision=ratio(named_correct, named),
        recall=ratio(named_correct, matched),
        precision_main=ratio(named_main_correct, named_main),
        recall_main=ratio(ref_main_correct, ref_main),
        unknown_rate=ratio(n_unknown_assignments, len(assignments)),
        confusion={k: dict(sorted(v.items())) for k, v in sorted(confusion.items())},
    )


# ---------------------------------------------------------------------------
# Precision vs proportion-of-classified-segments sweep
# ---------------------------------------------------------------------------

STRATA = ("ALL", "LONG", "SHORT")


def _threshold_labels(
    bundle: EpisodeBundle,
    exemplars: Sequence[Exemplar],
    config: PipelineConfig,
    threshold: float,
    mode: str,
) -> dict[str, tuple[str, float]]:
    """Thresholded labels for every segment at a given D.

    Every segment passes through the thresholded path (exemplar
    segments match themselves at distance zero), so a zero threshold
    classifies nothing. In cascade mode the exemplar and local-context
    rungs run with the high-confidence bound scaled proportionally; in
    forced mode each segment is classified directly against the gallery
    with no duration gate.
    """
    ordered = sorted(bundle.segments, key=lambda s: (s.ordinal, s.id))
    visible = build_visible_map(ordered, bundle.visual, bundle.cast, config.visual_confidence_threshold)
    out: dict[str, tuple[str, float]] = {}
    if not exemplars:
        return out
    if mode == "forced":
        for seg in ordered:
            result = classify_against_exemplars(
                seg,
                bundle.embedding_of(seg.id),
                exemplars,
                visible.get(seg.id),
                assign_threshold=threshold,
                high_confidence_threshold=threshold,
                long_segment_seconds=0.0,
            )
            if result is not None:
                out[seg.id] = (result.label, result.score)
        return out

    ratio = config.high_confidence_threshold / config.assign_threshold
    high = threshold * ratio
    labels: dict[str, str] = {}
    for seg in ordered:
        result = classify_against_exemplars(
            seg,
            bundle.embedding_of(seg.id),
            exemplars,
            visible.get(seg.id),
            assign_threshold=threshold,
            high_confidence_threshold=high,
            long_segment_seconds=config.long_segment_seconds,
        )
        if result is not None:
            out[seg.id] = (result.label, result.score)
            labels[seg.id] = result.label
    for seg in ordered:
        if seg.id in out:
            continue
        result = local_context_classify(
            seg, ordered, labels, bundle.embeddings, config.n_local, threshold
        )
        if result is not None:
            out[seg.id] = (result.label, result.score)
            labels[seg.id] = result.label
    return out


def precision_pocs_sweep(
    bundle: EpisodeBundle,
    exemplars: Sequence[Exemplar],
    config: PipelineConfig,
    thresholds: Sequence[float],
    mode: str = "cascade",
) -> list[CurvePoint]:
    """Precision and proportion-of-classified per stratum over a D grid.

    The language-model rung stays disabled so precision reflects
    embedding classification alone. Strata split at the long-segment
    bound. Requires a reference annotation on the bundle.
    """
    if not thresholds:
        raise ValidationError("threshold grid must be non-empty")
    if mode not in ("cascade", "forced"):
        raise ValidationError(f"unknown sweep mode {mode!r}")
    if bundle.reference is None:
        raise ValidationError("precision sweep requires a reference annotation")

    strata_members: dict[str, list[SegmentRecord]] = {name: [] for name in STRATA}
    for seg in bundle.segments:
        strata_members["ALL"].append(seg)
        if seg.duration > config.long_segment_seconds:
            strata_members["LONG"].append(seg)
        else:
            strata_members["SHORT"].append(seg)

    points = []
    for threshold in thresholds:
        labeled = _threshold_labels(bundle, exemplars, config, threshold, mode)
        for stratum in STRATA:
            members = strata_members[stratum]
            classified = 0
            correct = 0
            for seg in members:
                got = labeled.get(seg.id)
                if got is None:
                    continue
                classified += 1
                matches = _match_reference(seg.interval, bundle.reference)
                if matches and got[0] in {e.speaker for e in matches}:
                    correct += 1
            pocs = classified / len(members) if members else 0.0
            precision = correct / classified if classified else None
            points.append(CurvePoint(stratum=stratum, threshold=threshold, precision=precision, pocs=pocs))
    return points


def curve_csv(points: Sequence[CurvePoint]) -> str:
    """Render sweep points as CSV with columns stratum,D,precision,pocs."""
    lines = ["stratum,D,precision,pocs"]
    for p in points:
        precision = "" if p.precision is None else repr(p.precision)
        lines.append(f"{p.stratum},{p.threshold!r},{precision},{p.pocs!r}")
    return "\n".join(lines) + "\n"
