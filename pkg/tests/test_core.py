import numpy as np
import pytest
from hypothesis import given, strategies as st

from castlines.core import (
    Assignment,
    CastList,
    Character,
    PipelineConfig,
    Provenance,
    SegmentRecord,
    TimeInterval,
    WordToken,
    cosine_distance,
    interval_overlap,
    sort_segments,
)
from castlines.errors import ValidationError


class TestTimeInterval:
    def test_rejects_end_before_start(self):
        with pytest.raises(ValidationError):
            TimeInterval(2.0, 1.0)
        with pytest.raises(ValidationError):
            TimeInterval(1.0, 1.0)

    def test_rejects_nan_and_negative(self):
        with pytest.raises(ValidationError):
            TimeInterval(float("nan"), 1.0)
        with pytest.raises(ValidationError):
            TimeInterval(0.0, float("inf"))
        with pytest.raises(ValidationError):
            TimeInterval(-0.5, 1.0)


class TestIntervalOverlap:
    def test_partial(self):
        # Direct formula cross-checked by counting 1 ms frames.
        a, b = TimeInterval(0, 2), TimeInterval(1, 3)
        frames = sum(
            1 for i in range(4000) if (0 <= i / 1000 < 2) and (1 <= i / 1000 < 3)
        )
        assert interval_overlap(a, b) == pytest.approx(1.0)
        assert frames / 1000 == pytest.approx(1.0)

    def test_touching(self):
        assert interval_overlap(TimeInterval(0, 1), TimeInterval(1, 2)) == 0.0

    def test_identity(self):
        assert interval_overlap(TimeInterval(0, 2), TimeInterval(0, 2)) == 2.0

    @given(
        st.tuples(st.floats(0, 100), st.floats(0.01, 50)),
        st.tuples(st.floats(0, 100), st.floats(0.01, 50)),
    )
    def test_symmetric_and_bounded(self, a_spec, b_spec):
        a = TimeInterval(a_spec[0], a_spec[0] + a_spec[1])
        b = TimeInterval(b_spec[0], b_spec[0] + b_spec[1])
        ov = interval_overlap(a, b)
        assert ov == interval_overlap(b, a)
        assert 0.0 <= ov <= min(a.duration, b.duration) + 1e-12


class TestCosineDistance:
    def test_identical(self):
        assert cosine_distance([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == pytest.approx(0.0)

    def test_orthogonal(self):
        assert cosine_distance([1.0, 0.0], [0.0, 1.0]) == pytest.approx(1.0)

    def test_antipodal(self):
        assert cosine_distance([1.0, 0.0], [-1.0, 0.0]) == pytest.approx(2.0)

    def test_dimension_mismatch(self):
        with pytest.raises(ValidationError):
            cosine_distance([1.0, 0.0], [1.0, 0.0, 0.0])

    def test_zero_vector(self):
        with pytest.raises(ValidationError):
            cosine_distance([0.0, 0.0], [1.0, 0.0])

    @given(
        st.lists(st.floats(-100, 100), min_size=2, max_size=8),
        st.floats(0.001, 1000),
    )
    def test_scale_invariance(self, values, alpha):
        u = np.asarray(values)
        if np.linalg.norm(u) < 1e-6:
            return
        v = np.ones_like(u)
        assert cosine_distance(alpha * u, v) == pytest.approx(cosine_distance(u, v), abs=1e-9)


def _segment(seg_id, start, end, ordinal=0, words=()):
    return SegmentRecord(
        id=seg_id,
        episode="ep",
        interval=TimeInterval(start, end),
        text="x",
        words=words,
        ordinal=ordinal,
    )


class TestSegmentRecord:
    def test_word_outside_interval_rejected(self):
        with pytest.raises(ValidationError):
            _segment("a", 0, 1, words=(WordToken("w", TimeInterval(0.5, 1.5)),))

    def test_overlapping_words_rejected(self):
        words = (
            WordToken("a", TimeInterval(0.0, 0.6)),
            WordToken("b", TimeInterval(0.5, 1.0)),
        )
        with pytest.raises(ValidationError):
            _segment("a", 0, 1, words=words)

    def test_sort_breaks_ties_by_id(self):
        segs = [_segment("b", 1, 2), _segment("a", 1, 2), _segment("c", 0, 1)]
        assert [s.id for s in sort_segments(segs)] == ["c", "a", "b"]


class TestCastList:
    def test_duplicate_names_rejected(self):
        with pytest.raises(ValidationError):
            CastList([Character("A"), Character("A")])

    def test_alias_claimed_twice_rejected(self):
        with pytest.raises(ValidationError):
            CastList([Character("A", aliases=("X",)), Character("B", aliases=("X",))])

    def test_alias_resolution(self):
        cast = CastList([Character("Frasier", aliases=("Dr. Crane",)), Character("Roz")])
        assert cast.resolve("Dr. Crane") == "Frasier"
        assert cast.resolve("Frasier") == "Frasier"
        assert cast.resolve("Eddie") is None


class TestAssignment:
    def test_secondary_requires_overlap_provenance(self):
        with pytest.raises(ValidationError):
            Assignment("s", "A", Provenance.LLM, 0.1, secondary_label="B")

    def test_secondary_must_differ(self):
        with pytest.raises(ValidationError):
            Assignment("s", "A", Provenance.OVERLAP_NEIGHBOR, 0.1, secondary_label="A")

    def test_unresolved_iff_unknown(self):
        with pytest.raises(ValidationError):
            Assignment("s", None, Provenance.LLM, 0.1)
        with pytest.raises(ValidationError):
            Assignment("s", "A", Provenance.UNRESOLVED, 0.1)
        ok = Assignment("s", None, Provenance.UNRESOLVED, 0.0)
        assert ok.labels == ()


class TestPipelineConfig:
    def test_defaults_valid(self):
        config = PipelineConfig()
        assert config.n_local == 15
        assert config.n_llm == 15
        assert config.long_segment_seconds == 2.0
        assert config.silence_split_seconds == 1.0
        assert config.der_collar_seconds == 0.25

    def test_high_confidence_must_be_below_assign(self):
        with pytest.raises(ValidationError):
            PipelineConfig(assign_threshold=0.3, high_confidence_threshold=0.3)

    def test_rejects_unknown_fields(self):
        with pytest.raises(ValidationError):
            PipelineConfig.from_dict({"no_such_field": 1})

    def test_roundtrip(self):
        config = PipelineConfig(n_local=7, assign_threshold=0.4, high_confidence_threshold=0.2)
        assert PipelineConfig.from_dict(config.to_dict()) == config
