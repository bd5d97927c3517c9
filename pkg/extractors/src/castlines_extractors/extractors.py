"""The five adapter operations, each writing one engine input file.

Outputs follow the engine's wire formats exactly; `castlines validate`
is the contract check. Tokens emitted by the transcript stage are
placeholder syllables: the builtin stack segments and timestamps speech
but does not transcribe words.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from . import audio as A
from . import video as V
from .profile import ExtractionProfile, require_builtin


def _write_jsonl(rows, path: str | Path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")


def _load_segments(path: str | Path) -> list[dict]:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows


def extract_transcript(
    media_wav: str | Path,
    profile: ExtractionProfile,
    out_path: str | Path,
    episode: str | None = None,
) -> int:
    """Energy VAD + flatness confirmation -> segments with word bursts."""
    require_builtin(profile.asr_vad_model, "asr_vad")
    require_builtin(profile.vad_filter_model, "vad_filter")
    samples, sr = A.load_wav(media_wav)
    episode = episode or Path(media_wav).stem
    regions = A.detect_speech_regions(samples, sr)
    # Second detector confirms each region, filtering false positives.
    regions = [r for r in regions if A.voiced_fraction(samples, sr, *r) >= 0.5]
    rows = []
    for k, (start, end) in enumerate(regions):
        bursts = A.word_bursts(samples, sr, start, end)
        words = [
            {"w": f"la{j}", "start_s": a, "end_s": b}
            for j, (a, b) in enumerate(bursts)
        ]
        rows.append(
            {
                "id": f"{episode}-{k:04d}",
                "episode": episode,
                "start_s": start,
                "end_s": end,
                "text": " ".join(w["w"] for w in words),
                "words": words,
            }
        )
    _write_jsonl(rows, out_path)
    return len(rows)


def extract_embeddings(
    media_wav: str | Path,
    segments_path: str | Path,
    profile: ExtractionProfile,
    out_path: str | Path,
) -> int:
    """Enhance the audio, then embed each segment's span."""
    require_builtin(profile.enhancer_model, "enhancer")
    require_builtin(profile.embedding_model, "embedder")
    samples, sr = A.load_wav(media_wav)
    enhanced = A.spectral_gate(samples, sr)
    rows = []
    for seg in _load_segments(segments_path):
        vec = A.voice_embedding(enhanced, sr, seg["start_s"], seg["end_s"], dim=profile.embedding_dim)
        rows.append({"segment_id": seg["id"], "vector": [float(x) for x in vec]})
    _write_jsonl(rows, out_path)
    return len(rows)


def extract_visual(
    media_video: str | Path,
    media_wav: str | Path,
    segments_path: str | Path,
    gallery_dir: str | Path,
    cast_path: str | Path,
    profile: ExtractionProfile,
    out_path: str | Path,
) -> int:
    """Lip-sync peaks per segment with full-cast visual distances."""
    require_builtin(profile.sync_model, "sync_localizer")
    require_builtin(profile.recognizer_model, "recognizer")
    with open(cast_path, "r", encoding="utf-8") as fh:
        cast_names = [c["name"] for c in json.load(fh)["characters"]]
    gallery = V.load_gallery(gallery_dir, cast_names, profile.gallery_images_per_character)

    gray, color, fps = V.read_video(media_video)
    samples, sr = A.load_wav(media_wav)
    hop = int(sr / fps)
    n_frames = len(gray)
    envelope = np.zeros(n_frames)
    for k in range(n_frames):
        chunk = samples[k * hop:(k + 1) * hop]
        if len(chunk):
            envelope[k] = float(np.sqrt((chunk**2).mean()))

    rows = []
    for seg in _load_segments(segments_path):
        peaks = V.motion_sync_peaks(
            gray, fps, envelope, seg["start_s"], seg["end_s"], profile.sync_peak_correlation
        )
        peak_rows = []
        for index, (cx, cy, _score) in enumerate(peaks):
            mid_frame = min(n_frames - 1, int((seg["start_s"] + seg["end_s"]) / 2 * fps))
            crop = V.crop_region(color[mid_frame], cx, cy, profile.crop_width_px, profile.crop_height_px)
            embedding = V.hsv_histogram(crop)
            distances = {
                name: V.visual_distance(embedding, gallery[name]) for name in cast_names
            }
            peak_rows.append({"peak_index": index, "distances": distances})
        rows.append({"segment_id": seg["id"], "peaks": peak_rows})
    _write_jsonl(rows, out_path)
    return len(rows)


def extract_overlap(
    media_wav: str | Path,
    profile: ExtractionProfile,
    out_path: str | Path,
    episode: str | None = None,
) -> int:
    require_builtin(profile.overlap_model, "overlap_detector")
    samples, sr = A.load_wav(media_wav)
    episode = episode or Path(media_wav).stem
    regions = A.detect_overlap_regions(samples, sr)
    _write_jsonl(
        [{"episode": episode, "start_s": a, "end_s": b} for a, b in regions],
        out_path,
    )
    return len(regions)


def convert_reference(
    native_csv: str | Path,
    out_path: str | Path,
    cast_path: str | Path | None = None,
) -> int:
    """Native CSV annotation (speaker,start_s,end_s,text) -> reference.jsonl."""
    aliases: dict[str, str] = {}
    if cast_path is not None:
        with open(cast_path, "r", encoding="utf-8") as fh:
            for character in json.load(fh)["characters"]:
                aliases[character["name"]] = character["name"]
                for alias in character.get("aliases", []):
                    aliases[alias] = character["name"]
    rows = []
    with open(native_csv, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"speaker", "start_s", "end_s"}
        if reader.fieldnames is None or not required <= set(reader.fieldnames):
            raise ValueError(f"{native_csv}: expected columns speaker,start_s,end_s[,text]")
        for record in reader:
            speaker = record["speaker"].strip()
            speaker = aliases.get(speaker, speaker)
            row = {
                "start_s": float(record["start_s"]),
                "end_s": float(record["end_s"]),
                "speaker": speaker,
            }
            text = (record.get("text") or "").strip()
            if text:
                row["text"] = text
            rows.append(row)
    rows.sort(key=lambda r: (r["start_s"], r["speaker"]))
    _write_jsonl(rows, out_path)
    return len(rows)
