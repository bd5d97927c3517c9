"""Seeded synthetic data generators for tests and demos.

Embedding clouds are built on the unit sphere: per-character centroids
are orthonormal (inter-centroid cosine distance exactly 1.0) and
members sit at a controlled cosine distance from their centroid along
random orthogonal directions.
"""

from __future__ import annotations

import numpy as np

from .core import (
    CastList,
    Character,
    SegmentRecord,
    SpeakerEmbedding,
    TimeInterval,
    WordToken,
)
from .exemplars import Exemplar
from .io import EpisodeBundle, ReferenceAnnotation, ReferenceEntry


def orthonormal_centroids(n: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    if n > dim:
        raise ValueError("need dim >= n for orthonormal centroids")
    mat = rng.normal(size=(dim, n))
    q, _ = np.linalg.qr(mat)
    return q[:, :n].T


def member_at_distance(
    centroid: np.ndarray, distance: float, rng: np.random.Generator
) -> np.ndarray:
    """Unit vector at the given cosine distance from a unit centroid."""
    direction = rng.normal(size=centroid.shape)
    direction -= np.dot(direction, centroid) * centroid
    direction /= np.linalg.norm(direction)
    cos_theta = 1.0 - distance
    sin_theta = float(np.sqrt(max(0.0, 1.0 - cos_theta**2)))
    return cos_theta * centroid + sin_theta * direction


def make_purity_pool(
    seed: int,
    n_characters: int = 4,
    per_character: int = 50,
    planted_fraction: float = 0.05,
    dim: int = 128,
):
    """Candidate pool with a few wrong-label members planted in foreign clusters.

    Returns (candidates, embeddings, planted_ids): clean members sit
    tight around their own centroid while planted members carry their
    own character's label but live near another character's centroid.
    """
    rng = np.random.default_rng(seed)
    centroids = orthonormal_centroids(n_characters, dim, rng)
    names = [f"char{c}" for c in range(n_characters)]
    n_planted = max(1, int(round(planted_fraction * per_character)))

    candidates: list[tuple[str, str]] = []
    embeddings: dict[str, SpeakerEmbedding] = {}
    planted_ids: set[str] = set()
    counter = 0
    for c, name in enumerate(names):
        for k in range(per_character):
            seg_id = f"seg{counter:04d}"
            counter += 1
            planted = k < n_planted
            if planted:
                host = (c + 1 + k) % n_characters
                vec = member_at_distance(centroids[host], rng.uniform(0.15, 0.19), rng)
                planted_ids.add(seg_id)
            else:
                vec = member_at_distance(centroids[c], rng.uniform(0.02, 0.09), rng)
            candidates.append((seg_id, name))
            embeddings[seg_id] = SpeakerEmbedding(segment_id=seg_id, vector=tuple(vec))
    return candidates, embeddings, planted_ids


def make_der_timelines(seed: int, grid: float = 0.01):
    """A random reference/hypothesis pair for diarisation scoring.

    Interval endpoints land on the grid; the hypothesis is the
    reference with jittered boundaries, occasional relabels, drops and
    spurious insertions, so every error type appears.
    """
    rng = np.random.default_rng(seed)
    n_speakers = int(rng.integers(2, 7))
    speakers = [f"spk{i}" for i in range(n_speakers)]
    horizon = float(rng.integers(60, 120))

    def snap(x: float) -> float:
        return round(round(x / grid) * grid, 6)

    reference = []
    for spk in speakers:
        t = float(rng.uniform(0, 10))
        while t < horizon - 2:
            dur = float(rng.uniform(0.5, 6.0))
            start, end = snap(t), snap(min(t + dur, horizon))
            if end > start:
                reference.append((TimeInterval(start, end), spk))
            t += dur + float(rng.uniform(0.5, 8.0))

    hypothesis = []
    for interval, spk in reference:
        if rng.random() < 0.05:
            continue
        jitter = lambda: float(rng.integers(-20, 21)) * grid
        start = snap(max(0.0, interval.start + jitter()))
        end = snap(interval.end + jitter())
        if end <= start:
            continue
        label = spk if rng.random() > 0.1 else speakers[int(rng.integers(0, n_speakers))]
        hypothesis.append((TimeInterval(start, end), label))
    for _ in range(int(rng.integers(0, 4))):
        start = snap(float(rng.uniform(0, horizon - 2)))
        end = snap(start + float(rng.uniform(0.3, 2.0)))
        if end > start:
            hypothesis.append((TimeInterval(start, end), speakers[int(rng.integers(0, n_speakers))]))
    return reference, hypothesis


def make_dialogue_scenes(
    seed: int,
    n_scenes: int = 8,
    n_speakers: int = 3,
    shorts_per_scene: int = 20,
    dim: int = 64,
    intra: float = 0.2,
):
    """Scene-structured segments for local-context classification checks.

    Each scene draws fresh per-speaker centroids (local acoustic
    conditions); the first sentences of the scene are pre-labeled long
    segments, one per speaker, and the rest are unlabeled shorts.
    Returns (segments, embeddings, prelabeled, truth).
    """
    rng = np.random.default_rng(seed)
    segments: list[SegmentRecord] = []
    embeddings: dict[str, SpeakerEmbedding] = {}
    prelabeled: dict[str, str] = {}
    truth: dict[str, str] = {}
    speakers = [f"spk{i}" for i in range(n_speakers)]
    ordinal = 0
    t = 0.0
    for scene in range(n_scenes):
        centroids = orthonormal_centroids(n_speakers, dim, rng)
        plan = [(spk, True) for spk in speakers]
        plan += [
            (speakers[int(rng.integers(0, n_speakers))], False) for _ in range(shorts_per_scene)
        ]
        for spk, is_long in plan:
            seg_id = f"sc{scene:02d}_seg{ordinal:04d}"
            dur = 3.0 if is_long else 1.0
            seg = SegmentRecord(
                id=seg_id,
                episode="synthetic",
                interval=TimeInterval(t, t + dur),
                text="long line" if is_long else "short line",
                words=(),
                ordinal=ordinal,
            )
            vec = member_at_distance(
                centroids[speakers.index(spk)], float(rng.uniform(0.01, intra / 2)), rng
            )
            segments.append(seg)
            embeddings[seg_id] = SpeakerEmbedding(segment_id=seg_id, vector=tuple(vec))
            truth[seg_id] = spk
            if is_long:
                prelabeled[seg_id] = spk
            ordinal += 1
            t += dur + 0.3
        t += 5.0
    return segments, embeddings, prelabeled, truth


def make_random_bundle(seed: int, n_characters: int = 3, n_segments: int = 40, dim: int = 32):
    """A self-consistent episode bundle with exemplars and a reference.

    Long segments sit close to their character's centroid; shorts are
    noisier. The first long segment of each character doubles as an
    exemplar. No visual observations, so classification is never
    restricted.
    """
    rng = np.random.default_rng(seed)
    centroids = orthonormal_centroids(n_characters, dim, rng)
    names = [f"char{c}" for c in range(n_characters)]
    cast = CastList([Character(name=n, is_main=(i == 0)) for i, n in enumerate(names)])

    segments = []
    embeddings = {}
    entries = []
    truth: dict[str, str] = {}
    t = 0.0
    for k in range(n_segments):
        c = int(rng.integers(0, n_characters))
        # Guarantee one long anchor per character at the head of the episode.
        is_long = k < n_characters or rng.random() < 0.3
        if k < n_characters:
            c = k
        seg_id = f"seg{k:03d}"
        dur = float(rng.uniform(2.4, 4.0)) if is_long else float(rng.uniform(0.4, 1.8))
        start, end = round(t, 3), round(t + dur, 3)
        words = (
            WordToken("word", TimeInterval(start, round(start + dur / 2, 3))),
            WordToken("more", TimeInterval(round(start + dur / 2, 3), end)),
        )
        seg = SegmentRecord(
            id=seg_id,
            episode="rnd",
            interval=TimeInterval(start, end),
            text="word more",
            words=words,
            ordinal=k,
        )
        spread = float(rng.uniform(0.01, 0.1)) if is_long else float(rng.uniform(0.05, 0.45))
        vec = member_at_distance(centroids[c], spread, rng)
        segments.append(seg)
        embeddings[seg_id] = SpeakerEmbedding(segment_id=seg_id, vector=tuple(vec))
        truth[seg_id] = names[c]
        entries.append(ReferenceEntry(interval=seg.interval, speaker=names[c]))
        t = end + float(rng.uniform(0.2, 1.0))

    bundle = EpisodeBundle(
        episode="rnd",
        segments=tuple(segments),
        embeddings=embeddings,
        cast=cast,
        reference=ReferenceAnnotation(entries=tuple(entries)),
    )
    exemplars = [
        Exemplar(segment_id=f"seg{c:03d}", character=names[c], embedding=embeddings[f"seg{c:03d}"])
        for c in range(n_characters)
    ]
    return bundle, exemplars, truth
