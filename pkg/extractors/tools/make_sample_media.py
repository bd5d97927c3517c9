#!/usr/bin/env python3
"""Regenerate the bundled 10-second sample clip and gallery.

Two synthetic speakers share a static shot: Alice (left, 180 Hz voice)
and Bob (right, 120 Hz). Speech is a harmonic tone with a 2.5 Hz
syllable envelope; the on-screen mouth opens in sync with it. One
window has both speaking at once. Everything is seeded, so the media
files are reproducible.

Run from extractors/: python3 tools/make_sample_media.py
"""

from __future__ import annotations

import csv
import json
import math
import wave
from pathlib import Path

import cv2
import numpy as np

ROOT = Path(__file__).resolve().parent.parent
MEDIA = ROOT / "media"
GALLERY = ROOT / "gallery"

SAMPLE_RATE = 16000
FPS = 10
DURATION_S = 10.0
WIDTH, HEIGHT = 720, 480
SYLLABLE_HZ = 2.5

# speaker -> (f0, face center, skin BGR, shirt BGR)
SPEAKERS = {
    "Alice": (180.0, (180, 200), (150, 190, 235), (60, 60, 200)),
    "Bob": (120.0, (540, 200), (120, 170, 215), (200, 90, 40)),
}

# (speaker, start_s, end_s, line) -- the ground truth timeline
TIMELINE = [
    ("Alice", 0.5, 2.5, "Morning, did the shipment arrive?"),
    ("Bob", 3.0, 4.5, "It is still at the depot."),
    ("Alice", 5.0, 6.2, "Then call them now."),
    ("Alice", 6.2, 7.2, "No more delays."),
    ("Bob", 6.2, 7.2, "I am already dialing."),
    ("Bob", 7.6, 8.6, "Give me a minute."),
]


def syllable_envelope(t: np.ndarray) -> np.ndarray:
    # Raised-cosine syllable pulses with brief closures in between.
    phase = (t * SYLLABLE_HZ) % 1.0
    env = np.clip(np.sin(math.pi * np.clip(phase / 0.8, 0, 1)), 0.0, None)
    return env**1.5


def voice(f0: float, t: np.ndarray) -> np.ndarray:
    wavef = np.zeros_like(t)
    for harmonic, gain in ((1, 1.0), (2, 0.6), (3, 0.4), (4, 0.25), (5, 0.15)):
        wavef += gain * np.sin(2 * math.pi * f0 * harmonic * t)
    return wavef / 2.4


def build_audio(rng: np.random.Generator) -> np.ndarray:
    n = int(SAMPLE_RATE * DURATION_S)
    t = np.arange(n) / SAMPLE_RATE
    audio = 0.004 * rng.normal(size=n)  # room tone
    for speaker, start, end, _ in TIMELINE:
        f0 = SPEAKERS[speaker][0]
        mask = (t >= start) & (t < end)
        local = t[mask] - start
        env = syllable_envelope(local)
        fade = np.minimum(1.0, np.minimum(local, (end - start) - local) / 0.05)
        audio[mask] += 0.35 * env * fade * voice(f0, t[mask])
    peak = np.max(np.abs(audio))
    return (audio / peak * 0.85 * 32767).astype(np.int16)


def write_wav(path: Path, samples: np.ndarray):
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(SAMPLE_RATE)
        fh.writeframes(samples.tobytes())


def speaking_at(speaker: str, t: float) -> float:
    for spk, start, end, _ in TIMELINE:
        if spk == speaker and start <= t < end:
            return syllable_envelope(np.array([t - start]))[0]
    return 0.0


def draw_scene(frame_t: float, rng: np.random.Generator) -> np.ndarray:
    img = np.full((HEIGHT, WIDTH, 3), (40, 34, 30), dtype=np.uint8)
    cv2.rectangle(img, (0, 360), (WIDTH, HEIGHT), (70, 60, 55), -1)  # table
    for name, (_, (cx, cy), skin, shirt) in SPEAKERS.items():
        cv2.rectangle(img, (cx - 90, cy + 55), (cx + 90, cy + 220), shirt, -1)
        cv2.ellipse(img, (cx, cy), (70, 90), 0, 0, 360, skin, -1)
        eye_shade = (50, 40, 35)
        cv2.circle(img, (cx - 25, cy - 25), 9, eye_shade, -1)
        cv2.circle(img, (cx + 25, cy - 25), 9, eye_shade, -1)
        opening = speaking_at(name, frame_t)
        mouth_h = max(3, int(4 + 26 * opening))
        cv2.ellipse(img, (cx, cy + 42), (26, mouth_h), 0, 0, 360, (35, 25, 90), -1)
    noise = rng.integers(-6, 7, size=img.shape, dtype=np.int16)
    return np.clip(img.astype(np.int16) + noise, 0, 255).astype(np.uint8)


def build_video(rng: np.random.Generator, path: Path):
    writer = cv2.VideoWriter(
        str(path), cv2.VideoWriter_fourcc(*"MJPG"), FPS, (WIDTH, HEIGHT)
    )
    if not writer.isOpened():
        raise RuntimeError("could not open video writer")
    for k in range(int(DURATION_S * FPS)):
        writer.write(draw_scene(k / FPS, rng))
    writer.release()


def build_gallery(rng: np.random.Generator):
    for name, (_, (cx, cy), _, _) in SPEAKERS.items():
        out = GALLERY / name
        out.mkdir(parents=True, exist_ok=True)
        for k in range(10):
            frame = draw_scene(rng.uniform(0, DURATION_S), rng)
            jitter_x = int(rng.integers(-8, 9))
            jitter_y = int(rng.integers(-8, 9))
            x0 = max(0, cx + jitter_x - 175)
            y0 = max(0, cy + jitter_y - 175)
            crop = frame[y0:y0 + 350, x0:x0 + 350]
            cv2.imwrite(str(out / f"face{k:02d}.jpg"), crop, [cv2.IMWRITE_JPEG_QUALITY, 90])


def main():
    MEDIA.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(2024)
    write_wav(MEDIA / "sample.wav", build_audio(rng))
    build_video(np.random.default_rng(7), MEDIA / "sample.avi")
    build_gallery(np.random.default_rng(99))

    with open(MEDIA / "native_annotation.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["speaker", "start_s", "end_s", "text"])
        for speaker, start, end, line in TIMELINE:
            writer.writerow([speaker, start, end, line])

    with open(MEDIA / "cast.json", "w", encoding="utf-8") as fh:
        json.dump(
            {
                "characters": [
                    {"name": "Alice", "is_main": True, "aliases": ["Ms. Avery"]},
                    {"name": "Bob", "is_main": True, "aliases": []},
                ]
            },
            fh,
            indent=2,
        )
        fh.write("\n")

    # A silent clip for the degenerate-input tests.
    write_wav(MEDIA / "silence.wav", np.zeros(SAMPLE_RATE * 2, dtype=np.int16))
    print(f"media written to {MEDIA} and {GALLERY}")


if __name__ == "__main__":
    main()
