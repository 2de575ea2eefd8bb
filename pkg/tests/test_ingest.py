from __future__ import annotations

import json

import numpy as np
import pytest

from slowfastvad.ingest import (
    FrameRef,
    GroundTruth,
    IngestError,
    ScoreSeries,
    load_labels,
    load_scores,
    make_frame_refs,
    save_scores,
    validate_alignment,
)


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def test_load_scores_csv_roundtrip_of_simple_video(tmp_path):
    path = write(
        tmp_path,
        "scores.csv",
        "video_id,scene_id,frame_index,score\n"
        "v1,s1,0,0.1\nv1,s1,1,0.2\nv1,s1,2,0.3\n",
    )
    series = load_scores(path)
    assert len(series) == 1
    assert series[0].video_id == "v1"
    assert series[0].scene_id == "s1"
    assert series[0].scores.tolist() == [0.1, 0.2, 0.3]


def test_load_scores_rejects_out_of_range(tmp_path):
    path = write(
        tmp_path,
        "scores.csv",
        "video_id,scene_id,frame_index,score\nv1,s1,0,0.1\nv1,s1,1,1.5\n",
    )
    with pytest.raises(IngestError, match="out of range at row 3"):
        load_scores(path)


def test_load_scores_rejects_duplicate_frame(tmp_path):
    path = write(
        tmp_path,
        "scores.csv",
        "video_id,scene_id,frame_index,score\nv1,s1,0,0.1\nv1,s1,0,0.2\n",
    )
    with pytest.raises(IngestError, match="duplicate frame"):
        load_scores(path)


def test_load_scores_rejects_gap(tmp_path):
    path = write(
        tmp_path,
        "scores.csv",
        "video_id,scene_id,frame_index,score\nv1,s1,0,0.1\nv1,s1,2,0.2\n",
    )
    with pytest.raises(IngestError, match="non-contiguous"):
        load_scores(path)


def test_load_scores_missing_file(tmp_path):
    with pytest.raises(IngestError, match="not found"):
        load_scores(tmp_path / "nope.csv")


def test_load_scores_order_insensitive(tmp_path):
    rng = np.random.default_rng(0)
    rows = [
        ("v%02d" % v, "s%d" % (v % 2), i, rng.uniform())
        for v in range(3)
        for i in range(10)
    ]
    header = "video_id,scene_id,frame_index,score\n"
    fwd = header + "".join(f"{a},{b},{c},{d!r}\n" for a, b, c, d in rows)
    rng.shuffle(rows)
    shuffled = header + "".join(f"{a},{b},{c},{d!r}\n" for a, b, c, d in rows)
    first = load_scores(write(tmp_path, "a.csv", fwd))
    second = load_scores(write(tmp_path, "b.csv", shuffled))
    assert [s.video_id for s in first] == [s.video_id for s in second]
    for x, y in zip(first, second):
        assert x.scores.tolist() == y.scores.tolist()


def test_save_scores_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(1)
    original = [
        ScoreSeries("a", "s1", rng.uniform(0, 1, size=17)),
        ScoreSeries("b", "s2", rng.uniform(0, 1, size=5)),
    ]
    out = tmp_path / "round.csv"
    save_scores(original, out)
    again = load_scores(out)
    for x, y in zip(original, again):
        assert x.video_id == y.video_id
        assert x.scene_id == y.scene_id
        assert x.scores.tobytes() == y.scores.tobytes()


def test_load_scores_jsonl(tmp_path):
    path = write(
        tmp_path,
        "scores.jsonl",
        json.dumps({"video_id": "v2", "scene_id": "s1", "scores": [0.5, 0.6]})
        + "\n"
        + json.dumps({"video_id": "v1", "scene_id": "s1", "scores": [0.1]})
        + "\n",
    )
    series = load_scores(path)
    assert [s.video_id for s in series] == ["v1", "v2"]


def test_load_scores_normalize_flag(tmp_path):
    path = write(
        tmp_path,
        "raw.jsonl",
        json.dumps({"video_id": "v1", "scene_id": "s1", "scores": [2.0, 4.0, 6.0]}) + "\n",
    )
    with pytest.raises(IngestError):
        load_scores(path)
    series = load_scores(path, normalize=True)
    assert series[0].scores.tolist() == [0.0, 0.5, 1.0]


def test_load_labels_and_values(tmp_path):
    path = write(
        tmp_path,
        "labels.csv",
        "video_id,frame_index,label\nv1,0,0\nv1,1,0\nv1,2,1\n",
    )
    truth = load_labels(path)
    assert truth[0].labels.tolist() == [0, 0, 1]


def test_load_labels_rejects_bad_label(tmp_path):
    path = write(tmp_path, "labels.csv", "video_id,frame_index,label\nv1,0,2\n")
    with pytest.raises(IngestError, match="label not in"):
        load_labels(path)


def test_load_labels_empty_file_is_empty_list(tmp_path):
    path = write(tmp_path, "labels.csv", "video_id,frame_index,label\n")
    assert load_labels(path) == []
    assert load_labels(write(tmp_path, "e.csv", "")) == []


def test_validate_alignment_passes_and_fails(tmp_path):
    series = [ScoreSeries("v1", "s1", np.array([0.1, 0.2]))]
    validate_alignment(series, [GroundTruth("v1", np.array([0, 1]))])
    with pytest.raises(IngestError, match="v1"):
        validate_alignment(series, [GroundTruth("v1", np.array([0, 1, 1]))])
    with pytest.raises(IngestError, match="unknown video"):
        validate_alignment(series, [GroundTruth("v2", np.array([0, 1]))])


def test_score_series_invariants():
    with pytest.raises(IngestError):
        ScoreSeries("v", "s", np.array([]))
    with pytest.raises(IngestError):
        ScoreSeries("v", "s", np.array([0.5, -0.1]))


def test_make_frame_refs_uris_and_bounds():
    series = ScoreSeries("v1", "s1", np.linspace(0, 1, 12))
    refs = make_frame_refs(series, 4, 3, frames_root="/data/frames/")
    assert [r.frame_index for r in refs] == [4, 5, 6]
    assert refs[0].uri == "/data/frames/v1/000004.jpg"
    assert make_frame_refs(series, 0, 2)[0].uri is None
    with pytest.raises(IngestError):
        make_frame_refs(series, 10, 5)
    assert isinstance(refs[0], FrameRef)
