"""Shared domain types and elementary vector/interval operations.

All timestamps are absolute episode seconds. Types are immutable after
construction and safe to share across workers; the operations here are
pure functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .errors import ValidationError

#: Display form of the missing-speaker label in prompts and reports.
UNKNOWN_LABEL = "[UNKNOWN]"


def _require_finite(value: float, what: str) -> float:
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise ValidationError(f"{what} must be a real number, got {value!r}")
    if not math.isfinite(value):
        raise ValidationError(f"{what} must be finite, got {value!r}")
    return float(value)


@dataclass(frozen=True, slots=True)
class TimeInterval:
    """Half-open-ish speech interval; end must be strictly after start."""

    start: float
    end: float

    def __post_init__(self):
        start = _require_finite(self.start, "interval start")
        end = _require_finite(self.end, "interval end")
        if start < 0:
            raise ValidationError(f"interval start must be non-negative, got {start}")
        if end <= start:
            raise ValidationError(f"interval end must exceed start, got [{start}, {end}]")
        object.__setattr__(self, "start", start)
        object.__setattr__(self, "end", end)

    @property
    def duration(self) -> float:
        return self.end - self.start

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.start + self.end)

    def contains(self, other: "TimeInterval", tol: float = 1e-9) -> bool:
        return other.start >= self.start - tol and other.end <= self.end + tol


@dataclass(frozen=True, slots=True)
class WordToken:
    """A single transcript word with its time boundaries."""

    text: str
    interval: TimeInterval


@dataclass(frozen=True, slots=True)
class SegmentRecord:
    """One ASR sentence with word-level timestamps.

    Ordinals are the 0-based dialogue position within the episode,
    assigned by the loader after sorting by start time (ties broken by
    lexicographic id so that ordering is stable across platforms).
    """

    id: str
    episode: str
    interval: TimeInterval
    text: str
    words: tuple[WordToken, ...]
    ordinal: int

    def __post_init__(self):
        if not self.id:
            raise ValidationError("segment id must be non-empty")
        if self.ordinal < 0:
            raise ValidationError(f"segment {self.id}: ordinal must be >= 0")
        prev_end = None
        for w in self.words:
            if not self.interval.contains(w.interval):
                raise ValidationError(
                    f"segment {self.id}: word [{w.interval.start}, {w.interval.end}] "
                    f"outside segment interval [{self.interval.start}, {self.interval.end}]"
                )
            if prev_end is not None and w.interval.start < prev_end - 1e-9:
                raise ValidationError(
                    f"segment {self.id}: word timestamps overlap or are out of order"
                )
            prev_end = w.interval.end

    @property
    def duration(self) -> float:
        return self.interval.duration


@dataclass(frozen=True, slots=True)
class SpeakerEmbedding:
    """Fixed-dimension voice embedding attached to one segment's audio."""

    segment_id: str
    vector: tuple[float, ...]

    def __post_init__(self):
        if len(self.vector) == 0:
            raise ValidationError(f"embedding for {self.segment_id} is empty")
        vec = tuple(_require_finite(v, f"embedding[{self.segment_id}] component") for v in self.vector)
        object.__setattr__(self, "vector", vec)
        if not any(v != 0.0 for v in vec):
            raise ValidationError(f"embedding for {self.segment_id} is a zero vector")

    @property
    def dim(self) -> int:
        return len(self.vector)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.vector, dtype=np.float64)


@dataclass(frozen=True, slots=True)
class Character:
    """A cast-list entry: canonical name, main-cast flag, aliases."""

    name: str
    is_main: bool = False
    aliases: tuple[str, ...] = ()


class CastList:
    """Immutable cast list with alias resolution.

    Canonical names are unique and case-sensitive; an alias may belong
    to at most one character and may not shadow another character's
    canonical name.
    """

    def __init__(self, characters: Iterable[Character]):
        chars = tuple(characters)
        names = [c.name for c in chars]
        if len(set(names)) != len(names):
            raise ValidationError("cast list has duplicate canonical names")
        alias_map: dict[str, str] = {}
        for c in chars:
            for alias in c.aliases:
                owner = alias_map.get(alias)
                if owner is not None and owner != c.name:
                    raise ValidationError(f"alias {alias!r} claimed by both {owner!r} and {c.name!r}")
                if alias in names and alias != c.name:
                    raise ValidationError(f"alias {alias!r} shadows another character's canonical name")
                alias_map[alias] = c.name
        self._characters = chars
        self._by_name = {c.name: c for c in chars}
        self._alias_map = alias_map

    @property
    def characters(self) -> tuple[Character, ...]:
        return self._characters

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self._characters)

    def __contains__(self, name: str) -> bool:
        return name in self._by_name

    def __len__(self) -> int:
        return len(self._characters)

    def is_main(self, name: str) -> bool:
        char = self._by_name.get(name)
        return bool(char and char.is_main)

    def resolve(self, name: str) -> Optional[str]:
        """Map a canonical name or alias to the canonical name, else None."""
        if name in self._by_name:
            return name
        return self._alias_map.get(name)


@dataclass(frozen=True, slots=True)
class VisualPeak:
    """One synchronised lip-motion peak with per-character visual distances."""

    peak_index: int
    distances: Mapping[str, float]

    def __post_init__(self):
        for name, d in self.distances.items():
            val = _require_finite(d, f"visual distance for {name!r}")
            if val < 0:
                raise ValidationError(f"visual distance for {name!r} must be non-negative")


@dataclass(frozen=True, slots=True)
class VisualSpeakerObservation:
    """Per-segment lip-sync detections; peaks may be empty (nobody visible)."""

    segment_id: str
    peaks: tuple[VisualPeak, ...]


class Provenance(str, Enum):
    """Which cascade rung decided an assignment."""

    EXEMPLAR = "EXEMPLAR"
    LONG_SEGMENT = "LONG_SEGMENT"
    HIGH_CONFIDENCE = "HIGH_CONFIDENCE"
    LOCAL_CONTEXT = "LOCAL_CONTEXT"
    LLM = "LLM"
    OVERLAP_NEIGHBOR = "OVERLAP_NEIGHBOR"
    UNRESOLVED = "UNRESOLVED"


@dataclass(frozen=True, slots=True)
class Assignment:
    """Final (segment -> character) labeling with decision provenance.

    label None means unknown. A secondary label exists only on dual
    overlapped-speech assignments. Score is the distance or confidence
    that was live at decision time.
    """

    segment_id: str
    label: Optional[str]
    provenance: Provenance
    score: float
    secondary_label: Optional[str] = None

    def __post_init__(self):
        if self.secondary_label is not None:
            if self.provenance is not Provenance.OVERLAP_NEIGHBOR:
                raise ValidationError(
                    f"assignment {self.segment_id}: secondary label requires overlap provenance"
                )
            if self.secondary_label == self.label:
                raise ValidationError(
                    f"assignment {self.segment_id}: secondary label must differ from primary"
                )
        if (self.provenance is Provenance.UNRESOLVED) != (self.label is None):
            raise ValidationError(
                f"assignment {self.segment_id}: unknown label and UNRESOLVED provenance must coincide"
            )

    @property
    def labels(self) -> tuple[str, ...]:
        """All named labels carried by this assignment (0, 1 or 2)."""
        out = []
        if self.label is not None:
            out.append(self.label)
        if self.secondary_label is not None:
            out.append(self.secondary_label)
        return tuple(out)


@dataclass(frozen=True, slots=True)
class PipelineConfig:
    """Tunable knobs for both stages and the evaluation suite.

    assign_threshold is the acceptance distance D for embedding
    classification; high_confidence_threshold is the stricter bound that
    admits short segments, and must stay below assign_threshold.
    """

    n_local: int = 15
    n_llm: int = 15
    purity_neighbors: int = 5
    assign_threshold: float = 0.6
    high_confidence_threshold: float = 0.3
    long_segment_seconds: float = 2.0
    silence_split_seconds: float = 1.0
    der_collar_seconds: float = 0.25
    visual_confidence_threshold: float = 0.5
    gallery_images_per_character: int = 10
    crop_width_px: int = 350
    crop_height_px: int = 350

    def __post_init__(self):
        for name in (
            "n_local",
            "n_llm",
            "purity_neighbors",
            "assign_threshold",
            "high_confidence_threshold",
            "long_segment_seconds",
            "silence_split_seconds",
            "der_collar_seconds",
            "visual_confidence_threshold",
            "gallery_images_per_character",
            "crop_width_px",
            "crop_height_px",
        ):
            if getattr(self, name) <= 0:
                raise ValidationError(f"config field {name} must be positive")
        if self.n_local < 1 or self.n_llm < 1:
            raise ValidationError("n_local and n_llm must be >= 1")
        if self.high_confidence_threshold >= self.assign_threshold:
            raise ValidationError(
                "high_confidence_threshold must be strictly below assign_threshold"
            )

    def to_dict(self) -> dict:
        return {
            "n_local": self.n_local,
            "n_llm": self.n_llm,
            "purity_neighbors": self.purity_neighbors,
            "assign_threshold": self.assign_threshold,
            "high_confidence_threshold": self.high_confidence_threshold,
            "long_segment_seconds": self.long_segment_seconds,
            "silence_split_seconds": self.silence_split_seconds,
            "der_collar_seconds": self.der_collar_seconds,
            "visual_confidence_threshold": self.visual_confidence_threshold,
            "gallery_images_per_character": self.gallery_images_per_character,
            "crop_width_px": self.crop_width_px,
            "crop_height_px": self.crop_height_px,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "PipelineConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"unknown config fields: {sorted(unknown)}")
        return cls(**dict(data))

    def replace(self, **overrides) -> "PipelineConfig":
        merged = self.to_dict()
        merged.update(overrides)
        return PipelineConfig.from_dict(merged)


def interval_overlap(a: TimeInterval, b: TimeInterval) -> float:
    """Length of the intersection of two intervals, in seconds (>= 0)."""
    return max(0.0, min(a.end, b.end) - max(a.start, b.start))


def cosine_distance(u: Sequence[float] | np.ndarray, v: Sequence[float] | np.ndarray) -> float:
    """1 - cos(u, v); in [0, 2] and invariant under positive scaling."""
    ua = np.asarray(u, dtype=np.float64)
    va = np.asarray(v, dtype=np.float64)
    if ua.shape != va.shape or ua.ndim != 1:
        raise ValidationError(f"cosine_distance: dimension mismatch {ua.shape} vs {va.shape}")
    nu = float(np.linalg.norm(ua))
    nv = float(np.linalg.norm(va))
    if nu == 0.0 or nv == 0.0:
        raise ValidationError("cosine_distance: zero vector")
    # Rounding can step a hair outside the declared [0, 2] range.
    return min(2.0, max(0.0, 1.0 - float(np.dot(ua, va)) / (nu * nv)))


def sort_segments(segments: Iterable[SegmentRecord]) -> list[SegmentRecord]:
    """Dialogue order: by start time, ties broken by lexicographic id."""
    return sorted(segments, key=lambda s: (s.interval.start, s.id))
