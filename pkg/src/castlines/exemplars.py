"""Stage 1: mine high-confidence audio exemplars from visual speaker cues.

Clips are bucketed by lip-sync peak count, visual identifications are
gated by a confidence threshold, and the surviving single-speaker
candidates are purity-filtered with an N-nearest-neighbour check over
their voice embeddings. The neighbour pool is the per-episode candidate
pool itself, never the whole series.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import (
    CastList,
    SegmentRecord,
    SpeakerEmbedding,
    VisualSpeakerObservation,
)
from .errors import ValidationError
from .io import EpisodeBundle

logger = logging.getLogger(__name__)


class ClipCategory(Enum):
    NO_PEAK = "NO_PEAK"
    SINGLE_PEAK = "SINGLE_PEAK"
    MULTI_PEAK = "MULTI_PEAK"


@dataclass(frozen=True, slots=True)
class VisibleCandidates:
    """Characters confidently identified at any lip-sync peak of a segment."""

    segment_id: str
    candidates: frozenset[str]


@dataclass(frozen=True, slots=True)
class Exemplar:
    """A segment whose character label was established in Stage 1."""

    segment_id: str
    character: str
    embedding: SpeakerEmbedding
    source: str = "STAGE1"


def categorize_clips(
    segments: Sequence[SegmentRecord],
    observations: Mapping[str, VisualSpeakerObservation],
) -> dict[str, ClipCategory]:
    """Bucket every segment by peak count; missing observations mean NO_PEAK."""
    out: dict[str, ClipCategory] = {}
    for seg in segments:
        obs = observations.get(seg.id)
        n = len(obs.peaks) if obs is not None else 0
        if n == 0:
            out[seg.id] = ClipCategory.NO_PEAK
        elif n == 1:
            out[seg.id] = ClipCategory.SINGLE_PEAK
        else:
            out[seg.id] = ClipCategory.MULTI_PEAK
    return out


def gate_visual_identity(
    observation: VisualSpeakerObservation,
    cast: CastList,
    visual_confidence_threshold: float,
) -> VisibleCandidates:
    """Admit the closest character of each peak iff its distance beats the gate.

    The candidate set is the union over peaks. Ties at the minimum
    distance break deterministically by cast-list order.
    """
    admitted: set[str] = set()
    for peak in observation.peaks:
        missing = [name for name in cast.names if name not in peak.distances]
        if missing:
            raise ValidationError(
                f"segment {observation.segment_id}: peak {peak.peak_index} lacks distances for {missing}"
            )
        best_name = min(cast.names, key=lambda name: peak.distances[name])
        if peak.distances[best_name] < visual_confidence_threshold:
            admitted.add(best_name)
    return VisibleCandidates(segment_id=observation.segment_id, candidates=frozenset(admitted))


def build_visible_map(
    segments: Sequence[SegmentRecord],
    observations: Mapping[str, VisualSpeakerObservation],
    cast: CastList,
    visual_confidence_threshold: float,
) -> dict[str, VisibleCandidates]:
    """Gate every observed segment; unobserved segments get an empty set."""
    out = {}
    for seg in segments:
        obs = observations.get(seg.id)
        if obs is None:
            out[seg.id] = VisibleCandidates(segment_id=seg.id, candidates=frozenset())
        else:
            out[seg.id] = gate_visual_identity(obs, cast, visual_confidence_threshold)
    return out


def select_exemplar_candidates(
    categories: Mapping[str, ClipCategory],
    visible: Mapping[str, VisibleCandidates],
    segments: Sequence[SegmentRecord],
) -> list[tuple[str, str]]:
    """Single-peak clips whose gated candidate set holds exactly one character.

    Multi-peak predictions are excluded here but stay available (through
    the visible map) to restrict classification later.
    """
    out = []
    for seg in segments:
        if categories.get(seg.id) is not ClipCategory.SINGLE_PEAK:
            continue
        cands = visible.get(seg.id)
        if cands is not None and len(cands.candidates) == 1:
            (character,) = cands.candidates
            out.append((seg.id, character))
    out.sort()
    return out


def audio_purity_filter(
    candidates: Sequence[tuple[str, str]],
    embeddings: Mapping[str, SpeakerEmbedding],
    n_neighbors: int,
) -> list[Exemplar]:
    """Keep a candidate only if its N nearest candidates all share its label.

    Neighbours are searched within the candidate pool, excluding self,
    by cosine distance. Ties at the Nth distance widen the set, and
    unanimity must then hold over the widened set. A candidate whose
    pool holds fewer than N other members is dropped outright.
    """
    if n_neighbors < 1:
        raise ValidationError("n_neighbors must be >= 1")
    pool = sorted(candidates)
    if not pool:
        return []
    for seg_id, _ in pool:
        if seg_id not in embeddings:
            raise ValidationError(f"candidate {seg_id!r} has no embedding")

    ids = [seg_id for seg_id, _ in pool]
    labels = [label for _, label in pool]
    matrix = np.stack([embeddings[i].as_array() for i in ids])
    norms = np.linalg.norm(matrix, axis=1)
    sims = (matrix @ matrix.T) / np.outer(norms, norms)
    dists = 1.0 - sims

    kept: list[Exemplar] = []
    n = len(pool)
    for i in range(n):
        if n - 1 < n_neighbors:
            continue
        order = sorted((dists[i, j], ids[j], j) for j in range(n) if j != i)
        cutoff = order[n_neighbors - 1][0]
        # Small slack so equal distances computed in either matrix corner agree.
        neighbor_labels = {labels[j] for d, _, j in order if d <= cutoff + 1e-12}
        if neighbor_labels == {labels[i]}:
            kept.append(Exemplar(segment_id=ids[i], character=labels[i], embedding=embeddings[ids[i]]))
    kept.sort(key=lambda e: e.segment_id)
    return kept


@dataclass(frozen=True)
class Stage1Result:
    """Exemplars plus the stage counts used in run manifests."""

    exemplars: tuple[Exemplar, ...]
    visible: dict[str, VisibleCandidates]
    categories: dict[str, ClipCategory]
    n_segments: int
    n_av_recognised: int

    @property
    def n_exemplars(self) -> int:
        return len(self.exemplars)


def build_exemplars(bundle: EpisodeBundle, config) -> Stage1Result:
    """Run the full Stage 1 over one episode bundle."""
    categories = categorize_clips(bundle.segments, bundle.visual)
    visible = build_visible_map(
        bundle.segments, bundle.visual, bundle.cast, config.visual_confidence_threshold
    )
    candidates = select_exemplar_candidates(categories, visible, bundle.segments)
    if candidates:
        exemplars = audio_purity_filter(candidates, bundle.embeddings, config.purity_neighbors)
    else:
        logger.warning("episode %s: no exemplar candidates (no usable visual cues)", bundle.episode)
        exemplars = []
    for ex in exemplars:
        if ex.character not in bundle.cast:
            raise ValidationError(f"exemplar character {ex.character!r} not in cast list")
    return Stage1Result(
        exemplars=tuple(exemplars),
        visible=visible,
        categories=categories,
        n_segments=len(bundle.segments),
        n_av_recognised=len(candidates),
    )


def exemplars_from_labels(
    pairs: Iterable[tuple[str, str]],
    bundle: EpisodeBundle,
) -> list[Exemplar]:
    """Rebuild exemplar objects from audited (segment, character) pairs."""
    seg_ids = {s.id for s in bundle.segments}
    out = []
    for seg_id, character in sorted(pairs):
        if seg_id not in seg_ids:
            raise ValidationError(f"exemplar references unknown segment {seg_id!r}")
        if character not in bundle.cast:
            raise ValidationError(f"exemplar character {character!r} not in cast list")
        out.append(Exemplar(segment_id=seg_id, character=character, embedding=bundle.embedding_of(seg_id)))
    return out
