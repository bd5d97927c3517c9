"""Audio signal processing behind the builtin extraction models.

Everything works on 16-bit mono WAV input. Voicing decisions use frame
energy with a spectral-flatness confirmation pass, enhancement is a
spectral gate against the recording's own noise profile, and the voice
embedding is mean/std statistics of a log filterbank.
"""

from __future__ import annotations

import wave
from pathlib import Path

import numpy as np

FRAME_S = 0.025
HOP_S = 0.010


def load_wav(path: str | Path) -> tuple[np.ndarray, int]:
    with wave.open(str(path), "rb") as fh:
        if fh.getsampwidth() != 2:
            raise ValueError(f"{path}: expected 16-bit PCM")
        sr = fh.getframerate()
        raw = fh.readframes(fh.getnframes())
        samples = np.frombuffer(raw, dtype=np.int16).astype(np.float64) / 32768.0
        if fh.getnchannels() > 1:
            samples = samples.reshape(-1, fh.getnchannels()).mean(axis=1)
    return samples, sr


def frame_view(samples: np.ndarray, sr: int, frame_s: float = FRAME_S, hop_s: float = HOP_S):
    frame = int(frame_s * sr)
    hop = int(hop_s * sr)
    if len(samples) < frame:
        return np.zeros((0, frame)), np.zeros(0)
    n = 1 + (len(samples) - frame) // hop
    idx = np.arange(frame)[None, :] + hop * np.arange(n)[:, None]
    times = (hop * np.arange(n)) / sr
    return samples[idx], times


def frame_rms(samples: np.ndarray, sr: int):
    frames, times = frame_view(samples, sr)
    if not len(frames):
        return np.zeros(0), times
    return np.sqrt((frames**2).mean(axis=1)), times


def detect_speech_regions(
    samples: np.ndarray,
    sr: int,
    min_duration_s: float = 0.2,
    max_gap_s: float = 0.35,
) -> list[tuple[float, float]]:
    """Energy-threshold VAD with gap merging."""
    rms, times = frame_rms(samples, sr)
    if not len(rms):
        return []
    floor = np.percentile(rms, 20) + 1e-5
    active = rms > 4.0 * floor
    regions = []
    start = None
    for is_on, t in zip(active, times):
        if is_on and start is None:
            start = t
        elif not is_on and start is not None:
            regions.append((start, t + FRAME_S))
            start = None
    if start is not None:
        regions.append((start, times[-1] + FRAME_S))

    merged: list[list[float]] = []
    for a, b in regions:
        if merged and a - merged[-1][1] <= max_gap_s:
            merged[-1][1] = b
        else:
            merged.append([a, b])
    end_of_audio = len(samples) / sr
    return [
        (round(a, 3), round(min(b, end_of_audio), 3))
        for a, b in merged
        if b - a >= min_duration_s
    ]


def _spectral_flatness(frames: np.ndarray) -> np.ndarray:
    windowed = frames * np.hanning(frames.shape[1])
    mag = np.abs(np.fft.rfft(windowed, axis=1)) + 1e-10
    return np.exp(np.log(mag).mean(axis=1)) / mag.mean(axis=1)


def voiced_fraction(samples: np.ndarray, sr: int, start: float, end: float) -> float:
    """Share of frames in the region that look tonal rather than noisy."""
    lo, hi = int(start * sr), int(end * sr)
    frames, _ = frame_view(samples[lo:hi], sr)
    if not len(frames):
        return 0.0
    return float((_spectral_flatness(frames) < 0.5).mean())


def word_bursts(samples: np.ndarray, sr: int, start: float, end: float) -> list[tuple[float, float]]:
    """Sub-intervals of sustained energy (syllable bursts) inside a region."""
    lo, hi = int(start * sr), int(end * sr)
    rms, times = frame_rms(samples[lo:hi], sr)
    if not len(rms):
        return [(start, end)]
    threshold = 0.25 * rms.max()
    active = rms > threshold
    bursts = []
    b_start = None
    for is_on, t in zip(active, times):
        if is_on and b_start is None:
            b_start = t
        elif not is_on and b_start is not None:
            bursts.append((b_start, t + FRAME_S))
            b_start = None
    if b_start is not None:
        bursts.append((b_start, times[-1] + FRAME_S))
    merged: list[list[float]] = []
    for a, b in bursts:
        if merged and a - merged[-1][1] <= 0.05:
            merged[-1][1] = b
        else:
            merged.append([a, b])
    out = [
        (round(start + a, 3), round(min(start + b, end), 3))
        for a, b in merged
        if b - a >= 0.05
    ]
    return out or [(start, end)]


def spectral_gate(samples: np.ndarray, sr: int) -> np.ndarray:
    """Subtract the recording's own noise profile in the STFT domain."""
    frame = int(0.032 * sr)
    hop = frame // 2
    if len(samples) < 2 * frame:
        return samples
    window = np.hanning(frame)
    n = 1 + (len(samples) - frame) // hop
    idx = np.arange(frame)[None, :] + hop * np.arange(n)[:, None]
    frames = samples[idx] * window
    spec = np.fft.rfft(frames, axis=1)
    mag = np.abs(spec)
    energy = mag.sum(axis=1)
    quiet = mag[energy <= np.percentile(energy, 10)]
    noise = quiet.mean(axis=0) if len(quiet) else np.zeros(mag.shape[1])
    gated = np.maximum(mag - 1.5 * noise[None, :], 0.05 * mag)
    out_frames = np.fft.irfft(gated * np.exp(1j * np.angle(spec)), n=frame, axis=1)
    out = np.zeros(len(samples))
    weight = np.zeros(len(samples))
    for k in range(n):
        sl = slice(k * hop, k * hop + frame)
        out[sl] += out_frames[k] * window
        weight[sl] += window**2
    return out / np.maximum(weight, 1e-8)


def _filterbank(n_bands: int, n_bins: int, sr: int) -> np.ndarray:
    freqs = np.linspace(0, sr / 2, n_bins)
    edges = np.geomspace(60.0, min(6000.0, sr / 2 - 100), n_bands + 2)
    bank = np.zeros((n_bands, n_bins))
    for b in range(n_bands):
        lo, mid, hi = edges[b], edges[b + 1], edges[b + 2]
        up = (freqs - lo) / (mid - lo)
        down = (hi - freqs) / (hi - mid)
        bank[b] = np.clip(np.minimum(up, down), 0, None)
    return bank


def voice_embedding(samples: np.ndarray, sr: int, start: float, end: float, dim: int = 48) -> np.ndarray:
    """Log-filterbank mean/std statistics, unit-normalised."""
    n_bands = dim // 2
    lo, hi = int(start * sr), int(end * sr)
    chunk = samples[lo:hi]
    frame = int(FRAME_S * sr)
    if len(chunk) < frame:
        chunk = np.pad(chunk, (0, frame - len(chunk)))
    frames, _ = frame_view(chunk, sr)
    windowed = frames * np.hanning(frames.shape[1])
    power = np.abs(np.fft.rfft(windowed, axis=1)) ** 2
    bank = _filterbank(n_bands, power.shape[1], sr)
    logmel = np.log(power @ bank.T + 1e-9)
    vec = np.concatenate([logmel.mean(axis=0), logmel.std(axis=0)])
    norm = np.linalg.norm(vec)
    if norm < 1e-12:
        vec = np.ones(dim)
        norm = np.linalg.norm(vec)
    return vec / norm


def count_pitches(frame: np.ndarray, sr: int) -> int:
    """Distinct fundamentals in one frame, by iterative peel-off.

    Harmonic summation over a zero-padded spectrum finds the dominant
    fundamental; its harmonics are removed across the full window
    mainlobe and the search repeats on the residual. A second pitch
    counts only with a sizeable share of the first one's strength, so a
    lone voice (whose residual is lobe shoulders and noise) stays one.
    """
    n_fft = 8192
    windowed = frame * np.hanning(len(frame))
    mag = np.abs(np.fft.rfft(windowed, n=n_fft))
    total = mag.sum()
    if total < 1e-6:
        return 0
    bin_hz = sr / n_fft
    lobe_hz = 2.0 * sr / len(frame)  # Hann mainlobe half-width
    grid = np.arange(80.0, 300.0, 2.0)
    harmonics = range(1, 6)

    def harmonic_score(residual, f0):
        score = 0.0
        for k in harmonics:
            b = int(round(f0 * k / bin_hz))
            if 0 < b < len(residual):
                score += residual[max(0, b - 2):b + 3].max()
        return score

    count = 0
    first_strength = None
    residual = mag.copy()
    for _ in range(3):
        best = max(((harmonic_score(residual, f0), f0) for f0 in grid), key=lambda t: t[0])
        strength, f0 = best
        if first_strength is None:
            if strength / total < 0.01:  # nothing voiced at all
                break
            first_strength = strength
        elif strength < 0.3 * first_strength:
            break
        count += 1
        width = int(lobe_hz / bin_hz)
        for k in range(1, 8):
            b = int(round(f0 * k / bin_hz))
            if 0 < b < len(residual):
                residual[max(0, b - width):b + width + 1] = 0.0
    return count


def detect_overlap_regions(samples: np.ndarray, sr: int) -> list[tuple[float, float]]:
    """Stretches where at least two fundamentals sound at once."""
    frame = int(0.1 * sr)
    hop = int(0.025 * sr)
    if len(samples) < frame:
        return []
    n = 1 + (len(samples) - frame) // hop
    flags = []
    for k in range(n):
        chunk = samples[k * hop:k * hop + frame]
        flags.append(count_pitches(chunk, sr) >= 2)
    regions = []
    start = None
    for k, flag in enumerate(flags):
        t = k * hop / sr
        if flag and start is None:
            start = t
        elif not flag and start is not None:
            regions.append((start, t + 0.05))
            start = None
    if start is not None:
        regions.append((start, (n - 1) * hop / sr + 0.05))
    # Bridge syllable dips, then drop blips.
    merged: list[list[float]] = []
    for a, b in regions:
        if merged and a - merged[-1][1] <= 0.25:
            merged[-1][1] = b
        else:
            merged.append([a, b])
    return [(round(a, 3), round(b, 3)) for a, b in merged if b - a >= 0.15]
