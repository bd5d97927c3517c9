"""Video-side processing: lip-sync localisation and face matching.

The sync localiser correlates per-cell motion energy with the audio
envelope over a segment's frames; cells whose correlation clears the
profile threshold become peaks. Each peak is cropped (fixed size,
clamped to the frame) and embedded as a normalised HSV histogram, then
compared against the mean gallery embedding of every cast member.
"""

from __future__ import annotations

from pathlib import Path

import cv2
import numpy as np

CELL_PX = 40


def read_video(path: str | Path):
    """Return (gray frames, color frames, fps)."""
    capture = cv2.VideoCapture(str(path))
    if not capture.isOpened():
        raise ValueError(f"{path}: cannot open video")
    fps = capture.get(cv2.CAP_PROP_FPS) or 10.0
    gray, color = [], []
    while True:
        ok, frame = capture.read()
        if not ok:
            break
        color.append(frame)
        gray.append(cv2.cvtColor(frame, cv2.COLOR_BGR2GRAY).astype(np.float32))
    capture.release()
    if not gray:
        raise ValueError(f"{path}: no frames decoded")
    return gray, color, float(fps)


def motion_sync_peaks(
    gray_frames,
    fps: float,
    audio_envelope: np.ndarray,
    start: float,
    end: float,
    min_correlation: float,
) -> list[tuple[int, int, float]]:
    """(x, y, correlation) peak centres for one segment."""
    first = max(1, int(start * fps))
    last = min(len(gray_frames), int(end * fps) + 1)
    if last - first < 4:
        return []
    h, w = gray_frames[0].shape
    cells_y, cells_x = h // CELL_PX, w // CELL_PX
    motion = np.zeros((last - first, cells_y, cells_x))
    for i, t in enumerate(range(first, last)):
        diff = np.abs(gray_frames[t] - gray_frames[t - 1])
        trimmed = diff[: cells_y * CELL_PX, : cells_x * CELL_PX]
        motion[i] = trimmed.reshape(cells_y, CELL_PX, cells_x, CELL_PX).mean(axis=(1, 3))
    # Frame-to-frame motion tracks articulation change, so correlate it
    # with the envelope's change, not its level.
    env = np.abs(np.diff(audio_envelope[first - 1:last]))
    env = env - env.mean()
    env_norm = np.linalg.norm(env)
    if env_norm < 1e-9:
        return []

    corr = np.zeros((cells_y, cells_x))
    for y in range(cells_y):
        for x in range(cells_x):
            series = motion[:, y, x]
            series = series - series.mean()
            norm = np.linalg.norm(series)
            if norm < 1e-6:
                continue
            corr[y, x] = float(series @ env) / (norm * env_norm)

    # Sensor noise correlates with anything by chance; demand real
    # motion on top of correlation.
    mean_motion = motion.mean(axis=0)
    motion_floor = 2.5 * np.median(mean_motion)
    hot = (corr >= min_correlation) & (mean_motion >= motion_floor)
    seen = np.zeros_like(hot, dtype=bool)
    peaks = []
    for y in range(cells_y):
        for x in range(cells_x):
            if not hot[y, x] or seen[y, x]:
                continue
            # Flood the connected hot component, keep its best cell.
            stack = [(y, x)]
            best = (corr[y, x], x, y)
            while stack:
                cy, cx = stack.pop()
                if cy < 0 or cx < 0 or cy >= cells_y or cx >= cells_x:
                    continue
                if seen[cy, cx] or not hot[cy, cx]:
                    continue
                seen[cy, cx] = True
                if corr[cy, cx] > best[0]:
                    best = (corr[cy, cx], cx, cy)
                stack.extend([(cy + 1, cx), (cy - 1, cx), (cy, cx + 1), (cy, cx - 1)])
            score, cx, cy = best
            peaks.append((cx * CELL_PX + CELL_PX // 2, cy * CELL_PX + CELL_PX // 2, score))
    peaks.sort(key=lambda p: (-p[2], p[0], p[1]))
    return peaks[:4]


def crop_region(frame: np.ndarray, cx: int, cy: int, width: int, height: int) -> np.ndarray:
    h, w = frame.shape[:2]
    x0 = min(max(0, cx - width // 2), max(0, w - width))
    y0 = min(max(0, cy - height // 2), max(0, h - height))
    return frame[y0:y0 + height, x0:x0 + width]


def hsv_histogram(image: np.ndarray) -> np.ndarray:
    hsv = cv2.cvtColor(image, cv2.COLOR_BGR2HSV)
    hist = cv2.calcHist([hsv], [0, 1, 2], None, [8, 8, 4], [0, 180, 0, 256, 0, 256])
    flat = hist.flatten()
    norm = np.linalg.norm(flat)
    return flat / norm if norm > 0 else flat


def load_gallery(gallery_dir: str | Path, cast_names, max_images: int) -> dict[str, np.ndarray]:
    """Mean histogram embedding per character; every cast member required."""
    gallery_dir = Path(gallery_dir)
    out = {}
    for name in cast_names:
        folder = gallery_dir / name
        images = sorted(folder.glob("*")) if folder.is_dir() else []
        vectors = []
        for img_path in images[:max_images]:
            image = cv2.imread(str(img_path))
            if image is None:
                continue
            vectors.append(hsv_histogram(image))
        if not vectors:
            raise ValueError(f"gallery has no readable images for character {name!r}")
        mean = np.mean(vectors, axis=0)
        out[name] = mean / np.linalg.norm(mean)
    return out


def visual_distance(a: np.ndarray, b: np.ndarray) -> float:
    return float(max(0.0, min(2.0, 1.0 - float(a @ b))))
