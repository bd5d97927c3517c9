import json
import random

import pytest
from hypothesis import given, strategies as st

from castlines.core import (
    Assignment,
    Provenance,
    SegmentRecord,
    TimeInterval,
    WordToken,
)
from castlines.errors import ParseError, ValidationError
from castlines import io as cio


def write_lines(path, rows):
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")


def seg_row(seg_id="s1", episode="ep", start=0.0, end=1.2, text="hi there you", words=None):
    if words is None:
        words = [
            {"w": "hi", "start_s": start, "end_s": start + 0.3},
            {"w": "there", "start_s": start + 0.4, "end_s": start + 0.7},
            {"w": "you", "start_s": start + 0.8, "end_s": end},
        ]
    return {"id": seg_id, "episode": episode, "start_s": start, "end_s": end, "text": text, "words": words}


class TestLoadSegments:
    def test_single_record(self, tmp_path):
        path = tmp_path / "segments.jsonl"
        write_lines(path, [seg_row()])
        segs = cio.load_segments(path)
        assert len(segs) == 1
        assert segs[0].ordinal == 0
        assert len(segs[0].words) == 3

    def test_ordinals_follow_start_time_not_file_order(self, tmp_path):
        path = tmp_path / "segments.jsonl"
        rows = [seg_row("later", start=5.0, end=6.0), seg_row("earlier", start=1.0, end=2.0)]
        write_lines(path, rows)
        segs = cio.load_segments(path)
        by_id = {s.id: s.ordinal for s in segs}
        # Sorting oracle over the two start times.
        expected = {sid: i for i, sid in enumerate(sorted(by_id, key=lambda s: {"later": 5.0, "earlier": 1.0}[s]))}
        assert by_id == expected

    def test_end_before_start_rejected(self, tmp_path):
        path = tmp_path / "segments.jsonl"
        write_lines(path, [seg_row(start=2.0, end=1.0, words=[])])
        with pytest.raises(ParseError) as err:
            cio.load_segments(path)
        assert err.value.line == 1

    def test_overlapping_words_name_the_segment(self, tmp_path):
        path = tmp_path / "segments.jsonl"
        words = [
            {"w": "a", "start_s": 0.0, "end_s": 0.6},
            {"w": "b", "start_s": 0.5, "end_s": 1.0},
        ]
        write_lines(path, [seg_row("bad-seg", words=words)])
        with pytest.raises(ParseError) as err:
            cio.load_segments(path)
        assert "bad-seg" in str(err.value)

    def test_malformed_json_reports_line(self, tmp_path):
        path = tmp_path / "segments.jsonl"
        path.write_text(json.dumps(seg_row()) + "\n{broken\n")
        with pytest.raises(ParseError) as err:
            cio.load_segments(path)
        assert err.value.line == 2

    def test_unknown_keys_rejected(self, tmp_path):
        path = tmp_path / "segments.jsonl"
        row = seg_row()
        row["mystery"] = 1
        write_lines(path, [row])
        with pytest.raises(ParseError):
            cio.load_segments(path)


class TestLoadEmbeddings:
    def test_happy_path(self, tmp_path):
        path = tmp_path / "embeddings.jsonl"
        write_lines(path, [
            {"segment_id": "a", "vector": [0.1] * 192},
            {"segment_id": "b", "vector": [0.2] * 192},
        ])
        embs = cio.load_embeddings(path, expected_dim=192)
        assert [e.segment_id for e in embs] == ["a", "b"]

    def test_dimension_mismatch_names_the_row(self, tmp_path):
        path = tmp_path / "embeddings.jsonl"
        write_lines(path, [
            {"segment_id": "a", "vector": [0.1] * 192},
            {"segment_id": "b", "vector": [0.2] * 191},
        ])
        with pytest.raises(ParseError) as err:
            cio.load_embeddings(path, expected_dim=192)
        assert "'b'" in str(err.value) and err.value.line == 2

    def test_zero_vector_rejected(self, tmp_path):
        path = tmp_path / "embeddings.jsonl"
        write_lines(path, [{"segment_id": "a", "vector": [0.0, 0.0]}])
        with pytest.raises(ParseError):
            cio.load_embeddings(path)

    def test_duplicate_rejected(self, tmp_path):
        path = tmp_path / "embeddings.jsonl"
        write_lines(path, [
            {"segment_id": "a", "vector": [1.0]},
            {"segment_id": "a", "vector": [2.0]},
        ])
        with pytest.raises(ParseError):
            cio.load_embeddings(path)


class TestLoadReferenceRttm:
    def test_single_line(self, tmp_path):
        path = tmp_path / "ref.rttm"
        path.write_text("SPEAKER ep1 1 0.00 2.00 <NA> <NA> Frasier <NA> <NA>\n")
        ref = cio.load_reference_rttm(path)
        assert len(ref) == 1
        entry = ref.entries[0]
        assert entry.interval == TimeInterval(0.0, 2.0)
        assert entry.speaker == "Frasier"
        assert entry.episode == "ep1"

    def test_empty_file(self, tmp_path):
        path = tmp_path / "ref.rttm"
        path.write_text("")
        assert len(cio.load_reference_rttm(path)) == 0

    def test_negative_duration_rejected(self, tmp_path):
        path = tmp_path / "ref.rttm"
        path.write_text("SPEAKER ep1 1 0.00 -1.00 <NA> <NA> Frasier <NA> <NA>\n")
        with pytest.raises(ParseError):
            cio.load_reference_rttm(path)

    def test_non_numeric_onset_rejected(self, tmp_path):
        path = tmp_path / "ref.rttm"
        path.write_text("SPEAKER ep1 1 zero 1.00 <NA> <NA> Frasier <NA> <NA>\n")
        with pytest.raises(ParseError):
            cio.load_reference_rttm(path)

    def test_non_speaker_lines_skipped(self, tmp_path):
        path = tmp_path / "ref.rttm"
        path.write_text(
            ";; comment\nSPKR-INFO ep1 1 <NA> <NA> <NA> unknown Frasier <NA>\n"
            "SPEAKER ep1 1 1.0 1.0 <NA> <NA> Roz <NA> <NA>\n"
        )
        ref = cio.load_reference_rttm(path)
        assert [e.speaker for e in ref.entries] == ["Roz"]


def make_segment(seg_id, start, end, text, ordinal, episode="ep"):
    return SegmentRecord(
        id=seg_id,
        episode=episode,
        interval=TimeInterval(start, end),
        text=text,
        words=(),
        ordinal=ordinal,
    )


class TestSubtitles:
    def test_srt_cue_format(self, tmp_path):
        seg = make_segment("s1", 0.0, 2.0, "Hello.", 0)
        assignment = Assignment("s1", "Niles", Provenance.LLM, 0.2)
        out = tmp_path / "subtitles.srt"
        cio.write_subtitles([assignment], [seg], out)
        # Independent formatting oracle for the timestamps.
        import datetime

        def fmt(seconds):
            td = datetime.timedelta(seconds=seconds)
            total = int(td.total_seconds())
            ms = int(round(td.microseconds / 1000))
            return f"{total // 3600:02d}:{total % 3600 // 60:02d}:{total % 60:02d},{ms:03d}"

        text = out.read_text()
        assert text == f"1\n{fmt(0.0)} --> {fmt(2.0)}\nNILES: Hello.\n"
        assert "00:00:00,000 --> 00:00:02,000" in text

    def test_dual_speaker_prefix(self, tmp_path):
        seg = make_segment("s1", 0.0, 2.0, "What?", 0)
        assignment = Assignment(
            "s1", "Jerry", Provenance.OVERLAP_NEIGHBOR, 0.5, secondary_label="Elaine"
        )
        out = tmp_path / "subtitles.srt"
        cio.write_subtitles([assignment], [seg], out)
        assert "JERRY/ELAINE: What?" in out.read_text()

    def test_unknown_prefix(self, tmp_path):
        seg = make_segment("s1", 0.0, 2.0, "Hm.", 0)
        assignment = Assignment("s1", None, Provenance.UNRESOLVED, 0.0)
        out = tmp_path / "subtitles.srt"
        cio.write_subtitles([assignment], [seg], out)
        assert "UNKNOWN: Hm." in out.read_text()

    def test_zero_segments_empty_file(self, tmp_path):
        out = tmp_path / "subtitles.srt"
        cio.write_subtitles([], [], out)
        assert out.read_text() == ""

    def test_unassigned_segment_rejected(self, tmp_path):
        seg = make_segment("s1", 0.0, 2.0, "Hi", 0)
        with pytest.raises(ValidationError):
            cio.write_subtitles([], [seg], tmp_path / "x.srt")


class TestRoundTrips:
    @given(
        st.lists(
            st.floats(min_value=-1e6, max_value=1e6, allow_nan=False).filter(lambda x: x != 0),
            min_size=2,
            max_size=8,
        )
    )
    def test_embedding_floats_bit_exact(self, tmp_path_factory, vector):
        tmp = tmp_path_factory.mktemp("rt") / "embeddings.jsonl"
        from castlines.core import SpeakerEmbedding

        emb = SpeakerEmbedding("s", tuple(vector))
        cio.write_embeddings([emb], tmp)
        (back,) = cio.load_embeddings(tmp)
        assert back.vector == emb.vector  # bit-identical through JSON

    def test_segments_roundtrip(self, tmp_path):
        seg = SegmentRecord(
            id="s1",
            episode="ep",
            interval=TimeInterval(0.125, 2.375),
            text="two words",
            words=(
                WordToken("two", TimeInterval(0.125, 1.0)),
                WordToken("words", TimeInterval(1.5, 2.375)),
            ),
            ordinal=0,
        )
        path = tmp_path / "segments.jsonl"
        cio.write_segments([seg], path)
        (back,) = cio.load_segments(path)
        assert back == seg

    def test_order_insensitive_loading(self, tmp_path):
        rows = [seg_row(f"s{i}", start=float(i), end=float(i) + 0.9) for i in range(10)]
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        write_lines(a, rows)
        shuffled = rows[:]
        random.Random(7).shuffle(shuffled)
        write_lines(b, shuffled)
        assert cio.load_segments(a) == cio.load_segments(b)

    def test_reference_roundtrip(self, tmp_path):
        entries = (
            cio.ReferenceEntry(TimeInterval(0.0, 1.5), "A", text="hi"),
            cio.ReferenceEntry(TimeInterval(1.0, 2.0), "B"),
        )
        ref = cio.ReferenceAnnotation(entries=entries)
        path = tmp_path / "reference.jsonl"
        cio.write_reference_jsonl(ref, path)
        assert cio.load_reference(path).entries == entries


class TestOverlapNormalization:
    def test_merge_and_sort(self, tmp_path):
        path = tmp_path / "overlap.jsonl"
        write_lines(path, [
            {"episode": "ep", "start_s": 5.0, "end_s": 6.0},
            {"episode": "ep", "start_s": 1.0, "end_s": 2.0},
            {"episode": "ep", "start_s": 1.5, "end_s": 3.0},
        ])
        regions = cio.load_overlap(path)["ep"]
        assert [(r.start, r.end) for r in regions] == [(1.0, 3.0), (5.0, 6.0)]


class TestAssignmentsFile:
    def test_roundtrip(self, tmp_path):
        segs = [make_segment("s1", 0.0, 1.0, "hi", 0), make_segment("s2", 2.0, 3.0, "yo", 1)]
        assignments = [
            Assignment("s1", "A", Provenance.EXEMPLAR, 0.0),
            Assignment("s2", None, Provenance.UNRESOLVED, 0.0),
        ]
        path = tmp_path / "assignments.jsonl"
        cio.write_assignments(assignments, segs, path)
        rows = cio.load_assignments(path)
        assert [r.assignment for r in rows] == assignments
        assert rows[0].interval == segs[0].interval

    def test_duplicate_rejected(self, tmp_path):
        path = tmp_path / "assignments.jsonl"
        row = {
            "segment_id": "s1", "episode": "ep", "start_s": 0.0, "end_s": 1.0,
            "text": "", "label": "A", "secondary_label": None,
            "provenance": "EXEMPLAR", "score": 0.0,
        }
        write_lines(path, [row, row])
        with pytest.raises(ParseError):
            cio.load_assignments(path)


class TestBundle:
    def test_missing_embedding_rejected(self, tmp_path):
        write_lines(tmp_path / "segments.jsonl", [seg_row("s1"), seg_row("s2", start=2.0, end=3.0)])
        write_lines(tmp_path / "embeddings.jsonl", [{"segment_id": "s1", "vector": [1.0, 0.0]}])
        (tmp_path / "cast.json").write_text(json.dumps({"characters": [{"name": "A"}]}))
        with pytest.raises(ValidationError):
            cio.load_bundles(
                tmp_path / "segments.jsonl", tmp_path / "embeddings.jsonl", tmp_path / "cast.json"
            )

    def test_dangling_embedding_rejected(self, tmp_path):
        write_lines(tmp_path / "segments.jsonl", [seg_row("s1")])
        write_lines(tmp_path / "embeddings.jsonl", [
            {"segment_id": "s1", "vector": [1.0, 0.0]},
            {"segment_id": "ghost", "vector": [0.0, 1.0]},
        ])
        (tmp_path / "cast.json").write_text(json.dumps({"characters": [{"name": "A"}]}))
        with pytest.raises(ValidationError):
            cio.load_bundles(
                tmp_path / "segments.jsonl", tmp_path / "embeddings.jsonl", tmp_path / "cast.json"
            )

    def test_visual_requires_full_cast_coverage(self, tmp_path):
        write_lines(tmp_path / "segments.jsonl", [seg_row("s1")])
        write_lines(tmp_path / "embeddings.jsonl", [{"segment_id": "s1", "vector": [1.0, 0.0]}])
        (tmp_path / "cast.json").write_text(
            json.dumps({"characters": [{"name": "A"}, {"name": "B"}]})
        )
        write_lines(tmp_path / "visual.jsonl", [
            {"segment_id": "s1", "peaks": [{"peak_index": 0, "distances": {"A": 0.2}}]},
        ])
        with pytest.raises(ParseError):
            cio.load_bundles(
                tmp_path / "segments.jsonl",
                tmp_path / "embeddings.jsonl",
                tmp_path / "cast.json",
                visual_path=tmp_path / "visual.jsonl",
            )
