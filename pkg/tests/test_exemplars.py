import itertools
import random

import numpy as np
import pytest

from castlines.core import (
    CastList,
    Character,
    SegmentRecord,
    SpeakerEmbedding,
    TimeInterval,
    VisualPeak,
    VisualSpeakerObservation,
    cosine_distance,
)
from castlines.errors import ValidationError
from castlines.exemplars import (
    ClipCategory,
    audio_purity_filter,
    categorize_clips,
    gate_visual_identity,
    select_exemplar_candidates,
    build_visible_map,
)

CAST = CastList([Character("A"), Character("B"), Character("C")])


def seg(seg_id, ordinal=0):
    return SegmentRecord(
        id=seg_id,
        episode="ep",
        interval=TimeInterval(ordinal * 2.0, ordinal * 2.0 + 1.0),
        text="x",
        words=(),
        ordinal=ordinal,
    )


def obs(seg_id, *peak_distances):
    peaks = tuple(
        VisualPeak(peak_index=i, distances=d) for i, d in enumerate(peak_distances)
    )
    return VisualSpeakerObservation(segment_id=seg_id, peaks=peaks)


FULL = {"A": 0.9, "B": 0.9, "C": 0.9}


def dist(**kw):
    d = dict(FULL)
    d.update(kw)
    return d


class TestCategorize:
    def test_buckets(self):
        segments = [seg("s0", 0), seg("s1", 1), seg("s2", 2), seg("s3", 3)]
        observations = {
            "s0": obs("s0"),
            "s1": obs("s1", dist(A=0.2)),
            "s2": obs("s2", dist(A=0.2), dist(B=0.3), dist(C=0.4)),
        }
        cats = categorize_clips(segments, observations)
        assert cats["s0"] is ClipCategory.NO_PEAK
        assert cats["s1"] is ClipCategory.SINGLE_PEAK
        assert cats["s2"] is ClipCategory.MULTI_PEAK
        # No observation row at all means NO_PEAK.
        assert cats["s3"] is ClipCategory.NO_PEAK


class TestGate:
    def test_argmin_below_threshold_admitted(self):
        got = gate_visual_identity(obs("s", {"A": 0.2, "B": 0.9, "C": 0.8}), CAST, 0.5)
        assert got.candidates == {"A"}

    def test_all_above_threshold_empty(self):
        got = gate_visual_identity(obs("s", {"A": 0.6, "B": 0.9, "C": 0.8}), CAST, 0.5)
        assert got.candidates == frozenset()

    def test_union_over_peaks(self):
        got = gate_visual_identity(obs("s", dist(A=0.2), dist(B=0.3)), CAST, 0.5)
        assert got.candidates == {"A", "B"}

    def test_missing_character_rejected(self):
        with pytest.raises(ValidationError):
            gate_visual_identity(obs("s", {"A": 0.2, "B": 0.9}), CAST, 0.5)

    def test_tie_breaks_by_cast_order(self):
        got = gate_visual_identity(obs("s", {"A": 0.2, "B": 0.2, "C": 0.9}), CAST, 0.5)
        assert got.candidates == {"A"}

    def test_never_outside_cast(self):
        rng = random.Random(3)
        for _ in range(50):
            d = {name: rng.uniform(0, 1) for name in CAST.names}
            got = gate_visual_identity(obs("s", d), CAST, rng.uniform(0, 1))
            assert got.candidates <= set(CAST.names)


class TestSelect:
    def test_rules(self):
        segments = [seg(f"s{i}", i) for i in range(4)]
        observations = {
            "s0": obs("s0", dist(A=0.2)),                 # single peak, confident
            "s1": obs("s1", dist(A=0.7)),                 # single peak, unconfident
            "s2": obs("s2", dist(A=0.2), dist(B=0.3)),    # multi peak
        }
        cats = categorize_clips(segments, observations)
        visible = build_visible_map(segments, observations, CAST, 0.5)
        candidates = select_exemplar_candidates(cats, visible, segments)
        assert candidates == [("s0", "A")]
        # The multi-peak prediction survives in the visible map for later use.
        assert visible["s2"].candidates == {"A", "B"}
        assert visible["s1"].candidates == frozenset()


def brute_force_purity(candidates, embeddings, n):
    """Independent oracle: full pairwise distances, widened ties, unanimity."""
    kept = []
    for seg_id, label in candidates:
        others = [
            (cosine_distance(embeddings[seg_id].vector, embeddings[o].vector), o, ol)
            for o, ol in candidates
            if o != seg_id
        ]
        if len(others) < n:
            continue
        others.sort(key=lambda t: (t[0], t[1]))
        cutoff = others[n - 1][0]
        labels = {ol for d, _, ol in others if d <= cutoff + 1e-12}
        if labels == {label}:
            kept.append((seg_id, label))
    return sorted(kept)


def vec(values):
    return tuple(float(v) for v in values)


class TestPurityFilter:
    def make_pool(self):
        # Five tight A members, one B planted inside the A cluster.
        base = np.eye(8)
        members = {}
        for i in range(5):
            members[f"a{i}"] = vec(0.95 * base[0] + 0.3122 * base[1 + i])
        members["b0"] = vec(0.96 * base[0] + 0.28 * base[6])
        candidates = [(sid, "A") for sid in ["a0", "a1", "a2", "a3", "a4"]] + [("b0", "B")]
        embeddings = {sid: SpeakerEmbedding(sid, v) for sid, v in members.items()}
        return candidates, embeddings

    def test_planted_wrong_label_dropped(self):
        candidates, embeddings = self.make_pool()
        kept = audio_purity_filter(candidates, embeddings, 2)
        kept_ids = {e.segment_id for e in kept}
        assert "b0" not in kept_ids
        expected = brute_force_purity(candidates, embeddings, 2)
        assert sorted((e.segment_id, e.character) for e in kept) == expected

    def test_single_candidate_dropped(self):
        emb = {"x": SpeakerEmbedding("x", (1.0, 0.0))}
        assert audio_purity_filter([("x", "A")], emb, 5) == []

    def test_identical_vectors_all_kept(self):
        candidates = [(f"s{i}", "A") for i in range(7)]
        embeddings = {sid: SpeakerEmbedding(sid, (1.0, 0.5)) for sid, _ in candidates}
        kept = audio_purity_filter(candidates, embeddings, 5)
        assert len(kept) == 7

    def test_output_subset_and_idempotent(self):
        candidates, embeddings = self.make_pool()
        kept = audio_purity_filter(candidates, embeddings, 2)
        kept_pairs = [(e.segment_id, e.character) for e in kept]
        assert set(kept_pairs) <= set(candidates)
        again = audio_purity_filter(kept_pairs, embeddings, 2)
        assert [(e.segment_id, e.character) for e in again] == sorted(kept_pairs)

    def test_permutation_invariant(self):
        candidates, embeddings = self.make_pool()
        expected = audio_purity_filter(candidates, embeddings, 2)
        for perm in itertools.islice(itertools.permutations(candidates), 0, 24, 5):
            got = audio_purity_filter(list(perm), embeddings, 2)
            assert got == expected

    def test_missing_embedding_rejected(self):
        with pytest.raises(ValidationError):
            audio_purity_filter([("x", "A"), ("y", "A")], {"x": SpeakerEmbedding("x", (1.0,))}, 1)

    def test_matches_brute_force_on_random_pools(self):
        rng = np.random.default_rng(11)
        for trial in range(5):
            n_items = 12
            candidates = []
            embeddings = {}
            for i in range(n_items):
                sid = f"s{i}"
                label = "AB"[int(rng.integers(0, 2))]
                v = rng.normal(size=6)
                candidates.append((sid, label))
                embeddings[sid] = SpeakerEmbedding(sid, vec(v))
            for n in (1, 2, 5):
                got = audio_purity_filter(candidates, embeddings, n)
                assert sorted((e.segment_id, e.character) for e in got) == brute_force_purity(
                    candidates, embeddings, n
                )
