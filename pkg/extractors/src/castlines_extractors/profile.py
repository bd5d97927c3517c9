"""Extraction profile: which model backs each adapter stage.

The default profile is fully self-contained signal processing (the
"builtin:" family), so the adapters run without downloaded checkpoints.
Swapping in heavyweight models means adding a new id to the dispatch in
the stage that consumes it; the output files are the contract, nothing
downstream cares which model produced them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from pathlib import Path


@dataclass(frozen=True)
class ExtractionProfile:
    asr_vad_model: str = "builtin:energy-vad"
    vad_filter_model: str = "builtin:flatness-vad"
    enhancer_model: str = "builtin:spectral-gate"
    embedding_model: str = "builtin:mel-stats"
    sync_model: str = "builtin:motion-sync"
    recognizer_model: str = "builtin:hsv-hist"
    overlap_model: str = "builtin:multi-pitch"
    crop_width_px: int = 350
    crop_height_px: int = 350
    gallery_images_per_character: int = 10
    # Minimum motion/audio correlation for a cell to count as a
    # lip-sync peak. A tuned knob with no principled default.
    sync_peak_correlation: float = 0.45
    embedding_dim: int = 48

    def __post_init__(self):
        if self.crop_width_px <= 0 or self.crop_height_px <= 0:
            raise ValueError("crop size must be positive")
        if self.gallery_images_per_character <= 0:
            raise ValueError("gallery_images_per_character must be positive")
        if not (0.0 < self.sync_peak_correlation < 1.0):
            raise ValueError("sync_peak_correlation must be in (0, 1)")


def load_profile(path: str | Path | None) -> ExtractionProfile:
    if path is None:
        return ExtractionProfile()
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    known = {f.name for f in fields(ExtractionProfile)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown profile fields: {sorted(unknown)}")
    return ExtractionProfile(**data)


def require_builtin(model_id: str, stage: str) -> str:
    """Resolve a model id; only the builtin family is shipped."""
    if not model_id.startswith("builtin:"):
        raise ValueError(
            f"{stage}: cannot load model {model_id!r} (only builtin:* models ship with this package)"
        )
    return model_id.split(":", 1)[1]
