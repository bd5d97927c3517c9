"""Readers and writers for every on-disk artifact.

All engine files are line-delimited JSON with one object per line
(cast.json is a single JSON object); reference annotations are accepted
both as RTTM SPEAKER records and as reference.jsonl. Loading is
order-insensitive: rows are re-sorted into canonical order, so a
shuffled file produces an identical in-memory bundle. Floats round-trip
bit-exactly through the JSON writers (shortest-repr printing).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .core import (
    Assignment,
    CastList,
    Character,
    PipelineConfig,
    Provenance,
    SegmentRecord,
    SpeakerEmbedding,
    TimeInterval,
    VisualPeak,
    VisualSpeakerObservation,
    WordToken,
    sort_segments,
)
from .errors import ParseError, ValidationError

FORMAT_VERSION = 1  # bump when any wire schema below changes


# ---------------------------------------------------------------------------
# Generic JSON-lines plumbing
# ---------------------------------------------------------------------------


def _iter_jsonl(path: str | Path) -> Iterable[tuple[int, dict]]:
    path = Path(path)
    if not path.exists():
        raise ParseError("file not found", path=str(path))
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON ({exc.msg})", path=str(path), line=lineno) from exc
            if not isinstance(obj, dict):
                raise ParseError("expected a JSON object", path=str(path), line=lineno)
            yield lineno, obj


def _check_keys(obj: dict, required: set[str], optional: set[str], path: str, lineno: int | None):
    keys = set(obj)
    missing = required - keys
    if missing:
        raise ParseError(f"missing keys {sorted(missing)}", path=path, line=lineno)
    extra = keys - required - optional
    if extra:
        raise ParseError(f"unexpected keys {sorted(extra)}", path=path, line=lineno)


def _num(obj: dict, key: str, path: str, lineno: int | None) -> float:
    val = obj[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ParseError(f"field {key!r} must be a number, got {val!r}", path=path, line=lineno)
    return float(val)


def _atomic_write(path: str | Path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _dump_line(obj: dict) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(", ", ": "))


# ---------------------------------------------------------------------------
# Segments
# ---------------------------------------------------------------------------


def load_segments(path: str | Path) -> list[SegmentRecord]:
    """Read segments.jsonl; assigns per-episode ordinals by start time."""
    raw = []
    spath = str(path)
    seen_ids: set[str] = set()
    for lineno, obj in _iter_jsonl(path):
        _check_keys(obj, {"id", "episode", "start_s", "end_s", "text", "words"}, set(), spath, lineno)
        seg_id = obj["id"]
        if not isinstance(seg_id, str) or not seg_id:
            raise ParseError("field 'id' must be a non-empty string", path=spath, line=lineno)
        if seg_id in seen_ids:
            raise ParseError(f"duplicate segment id {seg_id!r}", path=spath, line=lineno)
        seen_ids.add(seg_id)
        if not isinstance(obj["episode"], str) or not obj["episode"]:
            raise ParseError("field 'episode' must be a non-empty string", path=spath, line=lineno)
        if not isinstance(obj["text"], str):
            raise ParseError("field 'text' must be a string", path=spath, line=lineno)
        if not isinstance(obj["words"], list):
            raise ParseError("field 'words' must be a list", path=spath, line=lineno)
        words = []
        for w in obj["words"]:
            if not isinstance(w, dict):
                raise ParseError("each word must be an object", path=spath, line=lineno)
            _check_keys(w, {"w", "start_s", "end_s"}, set(), spath, lineno)
            if not isinstance(w["w"], str):
                raise ParseError("word field 'w' must be a string", path=spath, line=lineno)
            words.append((w["w"], _num(w, "start_s", spath, lineno), _num(w, "end_s", spath, lineno)))
        raw.append(
            (
                lineno,
                seg_id,
                obj["episode"],
                _num(obj, "start_s", spath, lineno),
                _num(obj, "end_s", spath, lineno),
                obj["text"],
                words,
            )
        )

    # Ordinals are per episode, in dialogue order, regardless of file order.
    segments: list[SegmentRecord] = []
    by_episode: dict[str, list] = {}
    for rec in raw:
        by_episode.setdefault(rec[2], []).append(rec)
    for episode in sorted(by_episode):
        rows = sorted(by_episode[episode], key=lambda r: (r[3], r[1]))
        for ordinal, (lineno, seg_id, ep, start, end, text, words) in enumerate(rows):
            try:
                interval = TimeInterval(start, end)
                tokens = tuple(
                    WordToken(w, TimeInterval(ws, we)) for (w, ws, we) in words
                )
                segments.append(
                    SegmentRecord(
                        id=seg_id,
                        episode=ep,
                        interval=interval,
                        text=text,
                        words=tokens,
                        ordinal=ordinal,
                    )
                )
            except ValidationError as exc:
                raise ParseError(str(exc), path=spath, line=lineno) from exc
    return segments


def write_segments(segments: Sequence[SegmentRecord], path: str | Path):
    lines = []
    for seg in sort_segments(segments):
        lines.append(
            _dump_line(
                {
                    "id": seg.id,
                    "episode": seg.episode,
                    "start_s": seg.interval.start,
                    "end_s": seg.interval.end,
                    "text": seg.text,
                    "words": [
                        {"w": w.text, "start_s": w.interval.start, "end_s": w.interval.end}
                        for w in seg.words
                    ],
                }
            )
        )
    _atomic_write(path, "".join(line + "\n" for line in lines))


# ---------------------------------------------------------------------------
# Embeddings
# ---------------------------------------------------------------------------


def load_embeddings(path: str | Path, expected_dim: int | None = None) -> list[SpeakerEmbedding]:
    """Read embeddings.jsonl; enforces one shared dimension (and a zero-norm ban)."""
    spath = str(path)
    out: dict[str, SpeakerEmbedding] = {}
    dim = expected_dim
    for lineno, obj in _iter_jsonl(path):
        _check_keys(obj, {"segment_id", "vector"}, set(), spath, lineno)
        seg_id = obj["segment_id"]
        if not isinstance(seg_id, str) or not seg_id:
            raise ParseError("field 'segment_id' must be a non-empty string", path=spath, line=lineno)
        if seg_id in out:
            raise ParseError(f"duplicate embedding for segment {seg_id!r}", path=spath, line=lineno)
        vec = obj["vector"]
        if not isinstance(vec, list) or not vec:
            raise ParseError("field 'vector' must be a non-empty list", path=spath, line=lineno)
        values = []
        for v in vec:
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ParseError("vector components must be numbers", path=spath, line=lineno)
            values.append(float(v))
        if dim is None:
            dim = len(values)
        if len(values) != dim:
            raise ParseError(
                f"vector for {seg_id!r} has dimension {len(values)}, expected {dim}",
                path=spath,
                line=lineno,
            )
        try:
            out[seg_id] = SpeakerEmbedding(segment_id=seg_id, vector=tuple(values))
        except ValidationError as exc:
            raise ParseError(str(exc), path=spath, line=lineno) from exc
    return [out[k] for k in sorted(out)]


def write_embeddings(embeddings: Sequence[SpeakerEmbedding], path: str | Path):
    lines = [
        _dump_line({"segment_id": e.segment_id, "vector": list(e.vector)})
        for e in sorted(embeddings, key=lambda e: e.segment_id)
    ]
    _atomic_write(path, "".join(line + "\n" for line in lines))


# ---------------------------------------------------------------------------
# Visual observations
# ---------------------------------------------------------------------------


def load_visual(path: str | Path, cast: CastList | None = None) -> list[VisualSpeakerObservation]:
    """Read visual.jsonl; with a cast, every peak must cover the full cast."""
    spath = str(path)
    out: dict[str, VisualSpeakerObservation] = {}
    for lineno, obj in _iter_jsonl(path):
        _check_keys(obj, {"segment_id", "peaks"}, set(), spath, lineno)
        seg_id = obj["segment_id"]
        if not isinstance(seg_id, str) or not seg_id:
            raise ParseError("field 'segment_id' must be a non-empty string", path=spath, line=lineno)
        if seg_id in out:
            raise ParseError(f"duplicate observation for segment {seg_id!r}", path=spath, line=lineno)
        if not isinstance(obj["peaks"], list):
            raise ParseError("field 'peaks' must be a list", path=spath, line=lineno)
        peaks = []
        for peak in obj["peaks"]:
            if not isinstance(peak, dict):
                raise ParseError("each peak must be an object", path=spath, line=lineno)
            _check_keys(peak, {"peak_index", "distances"}, set(), spath, lineno)
            if isinstance(peak["peak_index"], bool) or not isinstance(peak["peak_index"], int):
                raise ParseError("peak_index must be an integer", path=spath, line=lineno)
            distances = peak["distances"]
            if not isinstance(distances, dict):
                raise ParseError("distances must be an object", path=spath, line=lineno)
            dmap = {}
            for name, d in distances.items():
                if isinstance(d, bool) or not isinstance(d, (int, float)):
                    raise ParseError(f"distance for {name!r} must be a number", path=spath, line=lineno)
                dmap[name] = float(d)
            if cast is not None:
                names = set(dmap)
                expected = set(cast.names)
                if names != expected:
                    missing = expected - names
                    extra = names - expected
                    detail = []
                    if missing:
                        detail.append(f"missing {sorted(missing)}")
                    if extra:
                        detail.append(f"unknown {sorted(extra)}")
                    raise ParseError(
                        f"peak distances must cover the full cast: {'; '.join(detail)}",
                        path=spath,
                        line=lineno,
                    )
            try:
                peaks.append(VisualPeak(peak_index=peak["peak_index"], distances=dmap))
            except ValidationError as exc:
                raise ParseError(str(exc), path=spath, line=lineno) from exc
        peaks.sort(key=lambda p: p.peak_index)
        out[seg_id] = VisualSpeakerObservation(segment_id=seg_id, peaks=tuple(peaks))
    return [out[k] for k in sorted(out)]


def write_visual(observations: Sequence[VisualSpeakerObservation], path: str | Path):
    lines = []
    for obs in sorted(observations, key=lambda o: o.segment_id):
        lines.append(
            _dump_line(
                {
                    "segment_id": obs.segment_id,
                    "peaks": [
                        {"peak_index": p.peak_index, "distances": dict(sorted(p.distances.items()))}
                        for p in obs.peaks
                    ],
                }
            )
        )
    _atomic_write(path, "".join(line + "\n" for line in lines))


# ---------------------------------------------------------------------------
# Overlap detections
# ---------------------------------------------------------------------------


def load_overlap(path: str | Path) -> dict[str, tuple[TimeInterval, ...]]:
    """Read overlap.jsonl; per episode the regions are sorted and merged."""
    spath = str(path)
    raw: dict[str, list[tuple[float, float]]] = {}
    for lineno, obj in _iter_jsonl(path):
        _check_keys(obj, {"episode", "start_s", "end_s"}, set(), spath, lineno)
        if not isinstance(obj["episode"], str) or not obj["episode"]:
            raise ParseError("field 'episode' must be a non-empty string", path=spath, line=lineno)
        start = _num(obj, "start_s", spath, lineno)
        end = _num(obj, "end_s", spath, lineno)
        if end <= start or start < 0:
            raise ParseError(f"invalid overlap interval [{start}, {end}]", path=spath, line=lineno)
        raw.setdefault(obj["episode"], []).append((start, end))

    out: dict[str, tuple[TimeInterval, ...]] = {}
    for episode, spans in raw.items():
        spans.sort()
        merged: list[list[float]] = []
        for start, end in spans:
            if merged and start <= merged[-1][1]:
                merged[-1][1] = max(merged[-1][1], end)
            else:
                merged.append([start, end])
        out[episode] = tuple(TimeInterval(s, e) for s, e in merged)
    return out


def write_overlap(overlaps: dict[str, Sequence[TimeInterval]], path: str | Path):
    lines = []
    for episode in sorted(overlaps):
        for iv in sorted(overlaps[episode], key=lambda i: i.start):
            lines.append(_dump_line({"episode": episode, "start_s": iv.start, "end_s": iv.end}))
    _atomic_write(path, "".join(line + "\n" for line in lines))


# ---------------------------------------------------------------------------
# Cast list
# ---------------------------------------------------------------------------


def load_cast(path: str | Path) -> CastList:
    spath = str(path)
    if not Path(path).exists():
        raise ParseError("file not found", path=spath)
    with open(path, "r", encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON ({exc.msg})", path=spath, line=exc.lineno) from exc
    if not isinstance(obj, dict):
        raise ParseError("cast file must hold a JSON object", path=spath)
    _check_keys(obj, {"characters"}, set(), spath, None)
    if not isinstance(obj["characters"], list) or not obj["characters"]:
        raise ParseError("field 'characters' must be a non-empty list", path=spath)
    chars = []
    for entry in obj["characters"]:
        if not isinstance(entry, dict):
            raise ParseError("each character must be an object", path=spath)
        _check_keys(entry, {"name"}, {"is_main", "aliases"}, spath, None)
        name = entry["name"]
        if not isinstance(name, str) or not name:
            raise ParseError("character name must be a non-empty string", path=spath)
        is_main = entry.get("is_main", False)
        if not isinstance(is_main, bool):
            raise ParseError(f"is_main for {name!r} must be a boolean", path=spath)
        aliases = entry.get("aliases", [])
        if not isinstance(aliases, list) or not all(isinstance(a, str) for a in aliases):
            raise ParseError(f"aliases for {name!r} must be a list of strings", path=spath)
        chars.append(Character(name=name, is_main=is_main, aliases=tuple(aliases)))
    try:
        return CastList(chars)
    except ValidationError as exc:
        raise ParseError(str(exc), path=spath) from exc


def write_cast(cast: CastList, path: str | Path):
    obj = {
        "characters": [
            {"name": c.name, "is_main": c.is_main, "aliases": list(c.aliases)}
            for c in cast.characters
        ]
    }
    _atomic_write(path, json.dumps(obj, ensure_ascii=False, indent=2) + "\n")


# ---------------------------------------------------------------------------
# Reference annotations (RTTM or JSON lines)
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class ReferenceEntry:
    interval: TimeInterval
    speaker: str
    text: Optional[str] = None
    episode: Optional[str] = None


@dataclass(frozen=True)
class ReferenceAnnotation:
    """Ground-truth who-spoke-when entries, possibly overlapping in time."""

    entries: tuple[ReferenceEntry, ...]

    def __len__(self) -> int:
        return len(self.entries)

    def for_episode(self, episode: str) -> "ReferenceAnnotation":
        kept = tuple(e for e in self.entries if e.episode in (None, episode))
        return ReferenceAnnotation(entries=kept)

    def resolved(self, cast: CastList, permissive: bool = True) -> "ReferenceAnnotation":
        """Map speaker aliases to canonical names.

        Unknown speaker strings are kept verbatim in permissive mode and
        rejected otherwise.
        """
        out = []
        for e in self.entries:
            canonical = cast.resolve(e.speaker)
            if canonical is None:
                if not permissive:
                    raise ValidationError(f"reference speaker {e.speaker!r} not in cast list")
                canonical = e.speaker
            out.append(ReferenceEntry(e.interval, canonical, e.text, e.episode))
        return ReferenceAnnotation(entries=tuple(out))


def _sorted_reference(entries: list[ReferenceEntry]) -> tuple[ReferenceEntry, ...]:
    return tuple(sorted(entries, key=lambda e: (e.episode or "", e.interval.start, e.speaker)))


def load_reference_rttm(path: str | Path) -> ReferenceAnnotation:
    """Parse RTTM SPEAKER records; other record types are skipped."""
    spath = str(path)
    if not Path(path).exists():
        raise ParseError("file not found", path=spath)
    entries: list[ReferenceEntry] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith(";;"):
                continue
            fields = line.split()
            if fields[0] != "SPEAKER":
                continue
            if len(fields) < 8:
                raise ParseError(f"SPEAKER record has {len(fields)} fields, expected >= 8", path=spath, line=lineno)
            episode = fields[1]
            try:
                onset = float(fields[3])
                duration = float(fields[4])
            except ValueError as exc:
                raise ParseError("onset and duration must be numeric", path=spath, line=lineno) from exc
            if duration <= 0 or onset < 0:
                raise ParseError(f"invalid onset/duration {onset}/{duration}", path=spath, line=lineno)
            speaker = fields[7]
            entries.append(
                ReferenceEntry(
                    interval=TimeInterval(onset, onset + duration),
                    speaker=speaker,
                    episode=episode,
                )
            )
    return ReferenceAnnotation(entries=_sorted_reference(entries))


def load_reference_jsonl(path: str | Path) -> ReferenceAnnotation:
    spath = str(path)
    entries: list[ReferenceEntry] = []
    for lineno, obj in _iter_jsonl(path):
        _check_keys(obj, {"start_s", "end_s", "speaker"}, {"text"}, spath, lineno)
        if not isinstance(obj["speaker"], str) or not obj["speaker"]:
            raise ParseError("field 'speaker' must be a non-empty string", path=spath, line=lineno)
        text = obj.get("text")
        if text is not None and not isinstance(text, str):
            raise ParseError("field 'text' must be a string", path=spath, line=lineno)
        start = _num(obj, "start_s", spath, lineno)
        end = _num(obj, "end_s", spath, lineno)
        try:
            interval = TimeInterval(start, end)
        except ValidationError as exc:
            raise ParseError(str(exc), path=spath, line=lineno) from exc
        entries.append(ReferenceEntry(interval=interval, speaker=obj["speaker"], text=text))
    return ReferenceAnnotation(entries=_sorted_reference(entries))


def load_reference(path: str | Path) -> ReferenceAnnotation:
    """Dispatch on extension: .rttm for RTTM, anything else as JSON lines."""
    if str(path).lower().endswith(".rttm"):
        return load_reference_rttm(path)
    return load_reference_jsonl(path)


def write_reference_jsonl(reference: ReferenceAnnotation, path: str | Path):
    lines = []
    for e in _sorted_reference(list(reference.entries)):
        obj = {"start_s": e.interval.start, "end_s": e.interval.end, "speaker": e.speaker}
        if e.text is not None:
            obj["text"] = e.text
        lines.append(_dump_line(obj))
    _atomic_write(path, "".join(line + "\n" for line in lines))


# ---------------------------------------------------------------------------
# Exemplars and scripted-oracle stubs
# ---------------------------------------------------------------------------


def load_exemplar_labels(path: str | Path) -> list[tuple[str, str]]:
    """Read exemplars.jsonl as (segment_id, character) pairs."""
    spath = str(path)
    seen: dict[str, str] = {}
    for lineno, obj in _iter_jsonl(path):
        _check_keys(obj, {"segment_id", "character"}, set(), spath, lineno)
        seg_id = obj["segment_id"]
        if not isinstance(seg_id, str) or not seg_id:
            raise ParseError("field 'segment_id' must be a non-empty string", path=spath, line=lineno)
        if seg_id in seen:
            raise ParseError(f"duplicate exemplar for segment {seg_id!r}", path=spath, line=lineno)
        if not isinstance(obj["character"], str) or not obj["character"]:
            raise ParseError("field 'character' must be a non-empty string", path=spath, line=lineno)
        seen[seg_id] = obj["character"]
    return sorted(seen.items())


def write_exemplar_labels(pairs: Iterable[tuple[str, str]], path: str | Path):
    lines = [
        _dump_line({"segment_id": seg_id, "character": character})
        for seg_id, character in sorted(pairs)
    ]
    _atomic_write(path, "".join(line + "\n" for line in lines))


def load_stub(path: str | Path) -> dict[str, dict[int, float]]:
    """Read stub.jsonl: per-segment scripted verdict distributions."""
    spath = str(path)
    out: dict[str, dict[int, float]] = {}
    for lineno, obj in _iter_jsonl(path):
        _check_keys(obj, {"segment_id", "distribution"}, set(), spath, lineno)
        seg_id = obj["segment_id"]
        if not isinstance(seg_id, str) or not seg_id:
            raise ParseError("field 'segment_id' must be a non-empty string", path=spath, line=lineno)
        if seg_id in out:
            raise ParseError(f"duplicate stub entry for segment {seg_id!r}", path=spath, line=lineno)
        dist = obj["distribution"]
        if not isinstance(dist, dict) or not dist:
            raise ParseError("field 'distribution' must be a non-empty object", path=spath, line=lineno)
        parsed: dict[int, float] = {}
        for key, prob in dist.items():
            try:
                idx = int(key)
            except (TypeError, ValueError) as exc:
                raise ParseError(f"distribution key {key!r} must be an integer", path=spath, line=lineno) from exc
            if isinstance(prob, bool) or not isinstance(prob, (int, float)):
                raise ParseError("distribution values must be numbers", path=spath, line=lineno)
            parsed[idx] = float(prob)
        total = sum(parsed.values())
        if abs(total - 1.0) > 1e-6:
            raise ParseError(f"distribution sums to {total}, expected 1 +- 1e-6", path=spath, line=lineno)
        out[seg_id] = parsed
    return out


# ---------------------------------------------------------------------------
# Assignments and subtitles
# ---------------------------------------------------------------------------


def format_srt_timestamp(seconds: float) -> str:
    """HH:MM:SS,mmm with millisecond rounding."""
    total_ms = int(round(seconds * 1000.0))
    hours, rem = divmod(total_ms, 3_600_000)
    minutes, rem = divmod(rem, 60_000)
    secs, ms = divmod(rem, 1000)
    return f"{hours:02d}:{minutes:02d}:{secs:02d},{ms:03d}"


def _cue_prefix(assignment: Assignment) -> str:
    if assignment.label is None:
        return "UNKNOWN"
    prefix = assignment.label.upper()
    if assignment.secondary_label is not None:
        prefix += "/" + assignment.secondary_label.upper()
    return prefix


def render_srt(segments: Sequence[SegmentRecord], assignments: dict[str, Assignment]) -> str:
    """Speaker-prefixed SRT text; cue order follows dialogue order."""
    blocks = []
    for n, seg in enumerate(sort_segments(segments), start=1):
        assignment = assignments.get(seg.id)
        if assignment is None:
            raise ValidationError(f"segment {seg.id} has no assignment")
        start = format_srt_timestamp(seg.interval.start)
        end = format_srt_timestamp(seg.interval.end)
        blocks.append(f"{n}\n{start} --> {end}\n{_cue_prefix(assignment)}: {seg.text}\n")
    return "\n".join(blocks)


def write_subtitles(
    assignments: Sequence[Assignment],
    segments: Sequence[SegmentRecord],
    path: str | Path,
    format: str = "srt",
):
    """Write the final character-aware subtitles as SRT or JSON lines."""
    by_id = {a.segment_id: a for a in assignments}
    missing = [s.id for s in segments if s.id not in by_id]
    if missing:
        raise ValidationError(f"segments without assignments: {missing[:5]}")
    if format == "srt":
        _atomic_write(path, render_srt(segments, by_id))
    elif format == "json":
        write_assignments(assignments, segments, path)
    else:
        raise ValidationError(f"unknown subtitle format {format!r}")


def write_assignments(
    assignments: Sequence[Assignment],
    segments: Sequence[SegmentRecord],
    path: str | Path,
):
    """assignments.jsonl: one record per final segment.

    Carries the segment interval and text alongside the label so the
    file is self-contained for scoring.
    """
    seg_by_id = {s.id: s for s in segments}
    for a in assignments:
        if a.segment_id not in seg_by_id:
            raise ValidationError(f"assignment references unknown segment {a.segment_id!r}")
    lines = []
    for a in sorted(assignments, key=lambda a: (seg_by_id[a.segment_id].interval.start, a.segment_id)):
        seg = seg_by_id[a.segment_id]
        lines.append(
            _dump_line(
                {
                    "segment_id": a.segment_id,
                    "episode": seg.episode,
                    "start_s": seg.interval.start,
                    "end_s": seg.interval.end,
                    "text": seg.text,
                    "label": a.label,
                    "secondary_label": a.secondary_label,
                    "provenance": a.provenance.value,
                    "score": a.score,
                }
            )
        )
    _atomic_write(path, "".join(line + "\n" for line in lines))


@dataclass(frozen=True, slots=True)
class AssignmentRow:
    """One parsed assignments.jsonl record (assignment + segment context)."""

    assignment: Assignment
    episode: str
    interval: TimeInterval
    text: str


def load_assignments(path: str | Path) -> list[AssignmentRow]:
    spath = str(path)
    rows: list[AssignmentRow] = []
    seen: set[str] = set()
    provenances = {p.value for p in Provenance}
    for lineno, obj in _iter_jsonl(path):
        _check_keys(
            obj,
            {"segment_id", "episode", "start_s", "end_s", "text", "label", "secondary_label", "provenance", "score"},
            set(),
            spath,
            lineno,
        )
        seg_id = obj["segment_id"]
        if not isinstance(seg_id, str) or not seg_id:
            raise ParseError("field 'segment_id' must be a non-empty string", path=spath, line=lineno)
        if seg_id in seen:
            raise ParseError(f"duplicate assignment for segment {seg_id!r}", path=spath, line=lineno)
        seen.add(seg_id)
        if obj["provenance"] not in provenances:
            raise ParseError(f"unknown provenance {obj['provenance']!r}", path=spath, line=lineno)
        label = obj["label"]
        secondary = obj["secondary_label"]
        if label is not None and (not isinstance(label, str) or not label):
            raise ParseError("field 'label' must be null or a non-empty string", path=spath, line=lineno)
        if secondary is not None and (not isinstance(secondary, str) or not secondary):
            raise ParseError("field 'secondary_label' must be null or a non-empty string", path=spath, line=lineno)
        try:
            assignment = Assignment(
                segment_id=seg_id,
                label=label,
                provenance=Provenance(obj["provenance"]),
                score=_num(obj, "score", spath, lineno),
                secondary_label=secondary,
            )
            interval = TimeInterval(_num(obj, "start_s", spath, lineno), _num(obj, "end_s", spath, lineno))
        except ValidationError as exc:
            raise ParseError(str(exc), path=spath, line=lineno) from exc
        if not isinstance(obj["text"], str):
            raise ParseError("field 'text' must be a string", path=spath, line=lineno)
        if not isinstance(obj["episode"], str) or not obj["episode"]:
            raise ParseError("field 'episode' must be a non-empty string", path=spath, line=lineno)
        rows.append(AssignmentRow(assignment=assignment, episode=obj["episode"], interval=interval, text=obj["text"]))
    rows.sort(key=lambda r: (r.episode, r.interval.start, r.assignment.segment_id))
    return rows


# ---------------------------------------------------------------------------
# Config files
# ---------------------------------------------------------------------------


def load_config(path: str | Path) -> PipelineConfig:
    spath = str(path)
    if not Path(path).exists():
        raise ParseError("file not found", path=spath)
    with open(path, "r", encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON ({exc.msg})", path=spath, line=exc.lineno) from exc
    if not isinstance(obj, dict):
        raise ParseError("config must be a JSON object", path=spath)
    try:
        return PipelineConfig.from_dict(obj)
    except ValidationError as exc:
        raise ParseError(str(exc), path=spath) from exc


# ---------------------------------------------------------------------------
# Episode bundle
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EpisodeBundle:
    """Everything known about one episode, cross-linked by segment id."""

    episode: str
    segments: tuple[SegmentRecord, ...]
    embeddings: dict[str, SpeakerEmbedding]
    cast: CastList
    visual: dict[str, VisualSpeakerObservation] = field(default_factory=dict)
    overlaps: tuple[TimeInterval, ...] = ()
    reference: Optional[ReferenceAnnotation] = None

    def __post_init__(self):
        ids = {s.id for s in self.segments}
        for seg in self.segments:
            if seg.id not in self.embeddings:
                raise ValidationError(f"segment {seg.id} has no embedding")
        dangling = set(self.embeddings) - ids
        if dangling:
            raise ValidationError(f"embeddings reference unknown segments: {sorted(dangling)[:5]}")
        dangling = set(self.visual) - ids
        if dangling:
            raise ValidationError(f"visual observations reference unknown segments: {sorted(dangling)[:5]}")

    def embedding_of(self, segment_id: str) -> SpeakerEmbedding:
        return self.embeddings[segment_id]


def load_bundles(
    segments_path: str | Path,
    embeddings_path: str | Path,
    cast_path: str | Path,
    visual_path: str | Path | None = None,
    overlap_path: str | Path | None = None,
    reference_path: str | Path | None = None,
    episode: str | None = None,
    expected_dim: int | None = None,
    resolve_reference: bool = True,
) -> list[EpisodeBundle]:
    """Load and cross-link one bundle per episode found in the inputs."""
    segments = load_segments(segments_path)
    cast = load_cast(cast_path)
    embeddings = load_embeddings(embeddings_path, expected_dim=expected_dim)
    visual = load_visual(visual_path, cast=cast) if visual_path else []
    overlaps = load_overlap(overlap_path) if overlap_path else {}
    reference = load_reference(reference_path) if reference_path else None
    if reference is not None and resolve_reference:
        reference = reference.resolved(cast, permissive=True)

    episodes = sorted({s.episode for s in segments})
    if episode is not None:
        if episode not in episodes:
            raise ValidationError(f"episode {episode!r} not present (found {episodes})")
        episodes = [episode]

    emb_by_id = {e.segment_id: e for e in embeddings}
    vis_by_id = {v.segment_id: v for v in visual}

    ref_has_episodes = reference is not None and any(e.episode is not None for e in reference.entries)
    if reference is not None and not ref_has_episodes and len(episodes) > 1:
        raise ValidationError(
            "reference file carries no episode field but inputs span multiple episodes; use RTTM"
        )

    bundles = []
    for ep in episodes:
        ep_segments = tuple(s for s in segments if s.episode == ep)
        ep_ids = {s.id for s in ep_segments}
        ep_embeddings = {k: v for k, v in emb_by_id.items() if k in ep_ids}
        ep_visual = {k: v for k, v in vis_by_id.items() if k in ep_ids}
        ep_reference = reference.for_episode(ep) if reference is not None else None
        bundles.append(
            EpisodeBundle(
                episode=ep,
                segments=ep_segments,
                embeddings=ep_embeddings,
                cast=cast,
                visual=ep_visual,
                overlaps=overlaps.get(ep, ()),
                reference=ep_reference,
            )
        )
    # Embeddings and observations must not reference segments outside the file.
    all_ids = {s.id for s in segments}
    dangling = set(emb_by_id) - all_ids
    if dangling:
        raise ValidationError(f"embeddings reference unknown segments: {sorted(dangling)[:5]}")
    dangling = set(vis_by_id) - all_ids
    if dangling:
        raise ValidationError(f"visual observations reference unknown segments: {sorted(dangling)[:5]}")
    return bundles
