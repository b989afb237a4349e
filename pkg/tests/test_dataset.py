import csv
import json
import logging

import pytest

from groundqa.dataset import QuestionRecord, ingest, load_nextgqa, record_from_dict
from groundqa.errors import ParseError, SchemaError
from groundqa.intervals import TimeInterval as T
from groundqa.synthetic import bundled_path


def raw(qid="q1", **over):
    obj = {
        "video_id": "v1",
        "question_id": qid,
        "question": "why did the boy cry?",
        "options": ["he fell", "he was hungry"],
        "answer_index": 0,
        "question_type": "Cau",
        "duration_s": 10.0,
        "gt_spans": [[2.0, 4.0]],
    }
    obj.update(over)
    return obj


def write(tmp_path, rows, name="d.jsonl"):
    path = tmp_path / name
    path.write_text("".join((r if isinstance(r, str) else json.dumps(r)) + "\n" for r in rows))
    return path


def test_three_lines_three_records(tmp_path):
    recs = ingest(write(tmp_path, [raw("a"), raw("b"), raw("c")]))
    assert [r.question_id for r in recs] == ["a", "b", "c"]
    assert recs[0].gt_spans == (T(2, 4),)
    assert recs[0].options == ("he fell", "he was hungry")


def test_duplicate_id_named(tmp_path):
    with pytest.raises(SchemaError, match="'a'") as exc:
        ingest(write(tmp_path, [raw("a"), raw("b"), raw("a")]))
    assert exc.value.line == 3 and exc.value.exit_code == 4


def test_out_of_range_span_clamped_with_warning(tmp_path, caplog):
    with caplog.at_level(logging.WARNING):
        recs = ingest(write(tmp_path, [raw(gt_spans=[[-1, 5]])]))
    assert recs[0].gt_spans == (T(0, 5),)
    assert "clamped" in caplog.text


def test_malformed_json_carries_line(tmp_path):
    path = write(tmp_path, [raw("a"), "{not json"])
    with pytest.raises(ParseError) as exc:
        ingest(path)
    assert exc.value.line == 2 and exc.value.exit_code == 3


def test_missing_file(tmp_path):
    with pytest.raises(ParseError):
        ingest(tmp_path / "absent.jsonl")


@pytest.mark.parametrize(
    "override,field",
    [
        ({"options": []}, "options"),
        ({"options": ["a", ""]}, "options[1]"),
        ({"answer_index": 2}, "answer_index"),
        ({"answer_index": True}, "answer_index"),
        ({"duration_s": 0}, "duration_s"),
        ({"question": " "}, "question"),
        ({"question_type": "Why"}, "question_type"),
        ({"gt_spans": [[5, 2]]}, "gt_spans[0]"),
        ({"gt_spans": [[1]]}, "gt_spans[0]"),
    ],
)
def test_schema_violations_name_the_field(override, field):
    with pytest.raises(SchemaError) as exc:
        record_from_dict(raw(**override), line=7)
    assert exc.value.field == field and exc.value.line == 7


def test_missing_field():
    obj = raw()
    del obj["duration_s"]
    with pytest.raises(SchemaError) as exc:
        record_from_dict(obj)
    assert exc.value.field == "duration_s"


def test_unannotated_record_and_round_trip():
    rec, warnings = record_from_dict(raw(gt_spans=None, question_type=None))
    assert rec.gt_spans == () and rec.question_type is None and warnings == []
    again, _ = record_from_dict(rec.to_dict())
    assert again == rec


def test_record_invariants():
    with pytest.raises(ValueError):
        QuestionRecord("v", "q", "x?", (), 0, None, 1.0)
    with pytest.raises(ValueError):
        QuestionRecord("v", "q", "x?", ("a",), 0, None, -1.0)


def test_bundled_dataset_is_valid():
    recs = ingest(bundled_path("dataset"))
    assert len(recs) == 10
    assert all(len(r.options) == 5 and r.gt_spans for r in recs)


def test_nextgqa_adapter(tmp_path, caplog):
    csv_path = tmp_path / "val.csv"
    with csv_path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["video_id", "frame_count", "width", "height", "question", "answer", "qid", "type", "a0", "a1", "a2", "a3", "a4"])
        w.writerow(["4882821564", 900, 640, 480, "why did the baby fall ", 2, 6, "CW", "a", "b", "c", "d", "e"])
        w.writerow(["4882821564", 900, 640, 480, "what happens after", 0, 7, "TN", "a", "b", "c", "d", "e"])
        w.writerow(["0000", 900, 640, 480, "orphan", 0, 1, "DC", "a", "b", "c", "d", "e"])
    gsub = {"4882821564": {"duration": 30.0, "location": {"6": [[3.1, 7.2], [20.0, 31.0]]}}}
    gsub_path = tmp_path / "gsub.json"
    gsub_path.write_text(json.dumps(gsub))
    with caplog.at_level(logging.WARNING):
        recs = load_nextgqa(csv_path, gsub_path)
    assert [r.question_id for r in recs] == ["4882821564_6", "4882821564_7"]
    first, second = recs
    assert first.question == "why did the baby fall"
    assert first.answer_index == 2 and first.question_type == "Cau"
    assert first.options == ("a", "b", "c", "d", "e")
    assert first.gt_spans == (T(3.1, 7.2), T(20.0, 30.0))
    assert second.gt_spans == () and second.question_type == "Tem"
    assert "skipped" in caplog.text and "clamped" in caplog.text


def test_nextgqa_bad_grounding_json(tmp_path):
    (tmp_path / "g.json").write_text("{oops")
    (tmp_path / "q.csv").write_text("video_id,question,answer,qid,type,a0\n")
    with pytest.raises(ParseError):
        load_nextgqa(tmp_path / "q.csv", tmp_path / "g.json")
