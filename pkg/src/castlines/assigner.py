"""Stage 2: cascaded speaker assignment over one episode.

Rung order: exemplar self-labels, exemplar classification (long or
high-confidence segments, restricted to visually seen characters when
any were seen), local-context 1-NN over the dialogue window, language-
model resolution of the remaining unknowns, dual labeling of overlapped
speech, and finally silence splitting. A segment labeled at one rung is
never relabeled later, with the single exception of the overlap rung
which replaces the label pair of overlapped segments.

All thresholds use strict inequality. Every pass walks segments in
ordinal order, so runs are deterministic given a deterministic oracle.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .core import (
    Assignment,
    PipelineConfig,
    Provenance,
    SegmentRecord,
    SpeakerEmbedding,
    TimeInterval,
    WordToken,
    cosine_distance,
    interval_overlap,
    sort_segments,
)
from .errors import OracleError, ValidationError
from .exemplars import Exemplar, VisibleCandidates, build_visible_map
from .io import EpisodeBundle
from .oracle import LlmQuery, OracleContract, build_llm_prompt

logger = logging.getLogger(__name__)


def classify_against_exemplars(
    segment: SegmentRecord,
    embedding: SpeakerEmbedding,
    exemplars: Sequence[Exemplar],
    visible: Optional[VisibleCandidates],
    assign_threshold: float,
    high_confidence_threshold: float,
    long_segment_seconds: float,
) -> Optional[Assignment]:
    """Label a segment from the exemplar gallery, or defer.

    When the segment has visually seen characters, only their exemplars
    compete (even if none exist, in which case the rung defers); with
    nobody seen, the whole gallery competes. The argmin exemplar label
    is accepted for long segments under the assign threshold, or for any
    segment under the stricter high-confidence threshold.
    """
    if embedding.segment_id != segment.id:
        raise ValidationError(f"embedding {embedding.segment_id} does not belong to segment {segment.id}")
    if not exemplars:
        return None
    candidates = list(exemplars)
    if visible is not None and visible.candidates:
        candidates = [e for e in candidates if e.character in visible.candidates]
        if not candidates:
            return None
    target = embedding.as_array()
    best = min(
        ((cosine_distance(target, e.embedding.as_array()), e.segment_id, e) for e in candidates),
        key=lambda t: (t[0], t[1]),
    )
    distance, _, exemplar = best
    if segment.duration > long_segment_seconds and distance < assign_threshold:
        return Assignment(
            segment_id=segment.id,
            label=exemplar.character,
            provenance=Provenance.LONG_SEGMENT,
            score=distance,
        )
    if distance < high_confidence_threshold:
        return Assignment(
            segment_id=segment.id,
            label=exemplar.character,
            provenance=Provenance.HIGH_CONFIDENCE,
            score=distance,
        )
    return None


def local_context_classify(
    segment: SegmentRecord,
    ordered_segments: Sequence[SegmentRecord],
    labels: Mapping[str, str],
    embeddings: Mapping[str, SpeakerEmbedding],
    n_local: int,
    assign_threshold: float,
) -> Optional[Assignment]:
    """1-NN against labeled segments within the dialogue window.

    The window spans n_local sentences on each side of the target by
    ordinal. Accepts the nearest labeled neighbour's name when its
    cosine distance beats the threshold; otherwise defers (unknown).
    """
    lo = segment.ordinal - n_local
    hi = segment.ordinal + n_local
    target = embeddings[segment.id].as_array()
    best: Optional[tuple[float, str, str]] = None
    for other in ordered_segments:
        if other.ordinal < lo or other.ordinal > hi or other.id == segment.id:
            continue
        label = labels.get(other.id)
        if label is None:
            continue
        d = cosine_distance(target, embeddings[other.id].as_array())
        key = (d, other.id)
        if best is None or key < (best[0], best[1]):
            best = (d, other.id, label)
    if best is None or best[0] >= assign_threshold:
        return None
    return Assignment(
        segment_id=segment.id,
        label=best[2],
        provenance=Provenance.LOCAL_CONTEXT,
        score=best[0],
    )


def build_llm_query(
    segment: SegmentRecord,
    ordered_segments: Sequence[SegmentRecord],
    labels: Mapping[str, str],
    n_llm: int,
) -> LlmQuery:
    """Assemble the dialogue window around one unknown segment."""
    lo = segment.ordinal - n_llm
    hi = segment.ordinal + n_llm
    dialogue = []
    target_position = None
    for other in ordered_segments:
        if other.ordinal < lo or other.ordinal > hi:
            continue
        if other.id == segment.id:
            target_position = len(dialogue)
            dialogue.append((None, other.text))
        else:
            dialogue.append((labels.get(other.id), other.text))
    if target_position is None:
        raise ValidationError(f"segment {segment.id} missing from its own window")
    names = []
    for speaker, _ in dialogue:
        if speaker is not None and speaker not in names:
            names.append(speaker)
    return LlmQuery(
        target_segment_id=segment.id,
        dialogue=tuple(dialogue),
        target_position=target_position,
        speaker_names=tuple(names),
        n_llm=n_llm,
    )


def resolve_unknown_with_llm(query: LlmQuery, oracle: OracleContract) -> Assignment:
    """Ask the oracle for the target's speaker; never invents a name.

    Transport exhaustion, unparseable answers, out-of-list indices and
    verdicts peaking on the [UNKNOWN] index all leave the segment
    unresolved; the pipeline keeps going either way.
    """
    prompt = build_llm_prompt(query)
    try:
        verdict = oracle.complete(prompt)
    except OracleError as exc:
        logger.warning("oracle failed for segment %s: %s", query.target_segment_id, exc)
        return Assignment(
            segment_id=query.target_segment_id,
            label=None,
            provenance=Provenance.UNRESOLVED,
            score=0.0,
        )
    index = verdict.best_index()
    name: Optional[str] = None
    score = 0.0
    if index is not None and 1 <= index <= query.unknown_index:
        name = query.name_for_index(index)
        if verdict.distribution is not None:
            score = float(verdict.distribution.get(index, 0.0))
        else:
            score = 1.0
    elif index is not None:
        logger.warning(
            "oracle answered index %s outside the speaker list for segment %s",
            index,
            query.target_segment_id,
        )
    if name is None:
        return Assignment(
            segment_id=query.target_segment_id,
            label=None,
            provenance=Provenance.UNRESOLVED,
            score=score,
        )
    return Assignment(
        segment_id=query.target_segment_id,
        label=name,
        provenance=Provenance.LLM,
        score=score,
    )


def assign_overlap(
    assignments: Mapping[str, Assignment],
    segments: Sequence[SegmentRecord],
    overlap_regions: Sequence[TimeInterval],
) -> dict[str, Assignment]:
    """Re-label overlapped-speech segments with their two nearest speakers.

    A segment qualifies when more than half its duration falls inside
    detected overlap regions. Its labels become those of the nearest
    named segments before and after (by midpoint distance, nearer one
    first); when both sides agree, the search widens to the next
    distinct name. Without a second distinct name in the episode the
    assignment is left untouched.
    """
    out = dict(assignments)
    if not overlap_regions:
        return out
    ordered = sort_segments(segments)
    named = [
        (seg.interval.midpoint, seg.id, out[seg.id].label)
        for seg in ordered
        if seg.id in out and out[seg.id].label is not None
    ]
    for seg in ordered:
        covered = sum(interval_overlap(seg.interval, region) for region in overlap_regions)
        if covered <= 0.5 * seg.duration:
            continue
        mid = seg.interval.midpoint
        others = [(abs(m - mid), m, sid, label) for (m, sid, label) in named if sid != seg.id]
        backward = min(((d, sid, label) for d, m, sid, label in others if m <= mid), default=None)
        forward = min(((d, sid, label) for d, m, sid, label in others if m > mid), default=None)
        sides = [s for s in (backward, forward) if s is not None]
        if not sides:
            continue
        sides.sort(key=lambda t: (t[0], t[1]))
        primary = sides[0][2]
        secondary = None
        for _, _, label in sides[1:]:
            if label != primary:
                secondary = label
        if secondary is None:
            widened = sorted(others, key=lambda t: (t[0], t[2]))
            for _, _, _, label in widened:
                if label != primary:
                    secondary = label
                    break
        if secondary is None:
            continue
        out[seg.id] = Assignment(
            segment_id=seg.id,
            label=primary,
            provenance=Provenance.OVERLAP_NEIGHBOR,
            score=sides[0][0],
            secondary_label=secondary,
        )
    return out


def split_on_silence(
    segment: SegmentRecord,
    assignment: Assignment,
    silence_split_seconds: float,
) -> list[tuple[SegmentRecord, Assignment]]:
    """Cut a segment at word gaps strictly longer than the threshold.

    Children inherit the parent's assignment (including dual labels),
    carry ids derived from the parent id, and partition the word list;
    their intervals tile the covered word span. Segments without words
    or without a qualifying gap come back unchanged.
    """
    if not segment.words:
        return [(segment, assignment)]
    groups: list[list[WordToken]] = [[segment.words[0]]]
    for prev, word in zip(segment.words, segment.words[1:]):
        gap = word.interval.start - prev.interval.end
        if gap > silence_split_seconds:
            groups.append([word])
        else:
            groups[-1].append(word)
    if len(groups) == 1:
        return [(segment, assignment)]
    out = []
    for k, group in enumerate(groups):
        child_id = f"{segment.id}#{k}"
        child = SegmentRecord(
            id=child_id,
            episode=segment.episode,
            interval=TimeInterval(group[0].interval.start, group[-1].interval.end),
            text=" ".join(w.text for w in group),
            words=tuple(group),
            ordinal=segment.ordinal,
        )
        child_assignment = Assignment(
            segment_id=child_id,
            label=assignment.label,
            provenance=assignment.provenance,
            score=assignment.score,
            secondary_label=assignment.secondary_label,
        )
        out.append((child, child_assignment))
    return out


@dataclass(frozen=True)
class Stage2Result:
    """Final segments (post split) with exactly one assignment each."""

    segments: tuple[SegmentRecord, ...]
    assignments: tuple[Assignment, ...]
    oracle_calls: int

    def assignment_of(self, segment_id: str) -> Assignment:
        return next(a for a in self.assignments if a.segment_id == segment_id)

    def provenance_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {p.value: 0 for p in Provenance}
        for a in self.assignments:
            counts[a.provenance.value] += 1
        return {k: v for k, v in counts.items() if v}


def run_stage2(
    bundle: EpisodeBundle,
    exemplars: Sequence[Exemplar],
    config: PipelineConfig,
    oracle: Optional[OracleContract] = None,
    *,
    use_llm: bool = True,
    use_overlap: bool = True,
    use_split: bool = True,
) -> Stage2Result:
    """Run the full cascade over one episode.

    The oracle is only consulted when use_llm is true; disabling it (or
    any transport failure) leaves the affected segments unresolved and
    changes nothing else.
    """
    ordered = sort_segments(bundle.segments)
    exemplar_ids = {e.segment_id for e in exemplars}
    for e in exemplars:
        if e.segment_id not in bundle.embeddings:
            raise ValidationError(f"exemplar {e.segment_id!r} has no embedding in the bundle")

    visible = build_visible_map(
        ordered, bundle.visual, bundle.cast, config.visual_confidence_threshold
    )

    assignments: dict[str, Assignment] = {}
    # Rung 1: exemplar segments keep their mined labels.
    for e in sorted(exemplars, key=lambda e: e.segment_id):
        if e.segment_id in assignments:
            continue
        assignments[e.segment_id] = Assignment(
            segment_id=e.segment_id,
            label=e.character,
            provenance=Provenance.EXEMPLAR,
            score=0.0,
        )

    # Rung 2: long and high-confidence classification against exemplars.
    if exemplars:
        for seg in ordered:
            if seg.id in assignments:
                continue
            result = classify_against_exemplars(
                seg,
                bundle.embedding_of(seg.id),
                exemplars,
                visible.get(seg.id),
                config.assign_threshold,
                config.high_confidence_threshold,
                config.long_segment_seconds,
            )
            if result is not None:
                assignments[seg.id] = result

    # Rung 3: local-context 1-NN, single forward sweep; labels accepted
    # earlier in the sweep are visible to later segments.
    labels: dict[str, str] = {
        sid: a.label for sid, a in assignments.items() if a.label is not None
    }
    for seg in ordered:
        if seg.id in assignments:
            continue
        result = local_context_classify(
            seg, ordered, labels, bundle.embeddings, config.n_local, config.assign_threshold
        )
        if result is not None:
            assignments[seg.id] = result
            labels[seg.id] = result.label

    # Rung 4: language-model resolution of the remaining unknowns, in
    # ordinal order; accepted names feed later queries' dialogue lines.
    oracle_calls = 0
    for seg in ordered:
        if seg.id in assignments:
            continue
        if use_llm and oracle is not None:
            query = build_llm_query(seg, ordered, labels, config.n_llm)
            result = resolve_unknown_with_llm(query, oracle)
            oracle_calls += 1
            assignments[seg.id] = result
            if result.label is not None:
                labels[seg.id] = result.label
        else:
            assignments[seg.id] = Assignment(
                segment_id=seg.id, label=None, provenance=Provenance.UNRESOLVED, score=0.0
            )

    # Rung 5: dual labels for overlapped speech.
    if use_overlap:
        assignments = assign_overlap(assignments, ordered, bundle.overlaps)

    # Rung 6: silence splitting, propagating assignments to children.
    final_segments: list[SegmentRecord] = []
    final_assignments: list[Assignment] = []
    for seg in ordered:
        if use_split:
            pieces = split_on_silence(seg, assignments[seg.id], config.silence_split_seconds)
        else:
            pieces = [(seg, assignments[seg.id])]
        for child, child_assignment in pieces:
            final_segments.append(child)
            final_assignments.append(child_assignment)

    if len(final_assignments) != len(final_segments):
        raise ValidationError("cascade produced mismatched segments and assignments")
    return Stage2Result(
        segments=tuple(final_segments),
        assignments=tuple(final_assignments),
        oracle_calls=oracle_calls,
    )
