import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from perfalign.annotation import (AnnotationSequence, build_ground_truth, ground_truth_from, nearest_frames,
                                  parse_annotation_file, path_lookup, transfer_annotations,
                                  write_annotation_file)
from perfalign.dtw import WarpPath
from perfalign.errors import LengthMismatch, NoMarkers, NonMonotonic, UnparseableLine


def test_parse_with_labels_and_comments(tmp_path):
    p = tmp_path / "m.txt"
    p.write_text("# exported markers\n0.5\tbeat 1\n\n1.25, bar\n2.0\n")
    a = parse_annotation_file(p)
    np.testing.assert_array_equal(a.times, [0.5, 1.25, 2.0])
    assert a.annotator == "m"


@pytest.mark.parametrize("text, err, lineno", [
    ("0.5\nabc\n", UnparseableLine, 2),
    ("0.5\n0.4\n", NonMonotonic, 2),
    ("0.5\n0.5\n", NonMonotonic, 2),
    ("-1.0\n", UnparseableLine, 1),
])
def test_parse_errors_carry_line_numbers(tmp_path, text, err, lineno):
    p = tmp_path / "bad.txt"
    p.write_text(text)
    with pytest.raises(err) as exc:
        parse_annotation_file(p)
    assert exc.value.lineno == lineno


def test_empty_file(tmp_path):
    (tmp_path / "e.txt").write_text("# nothing\n")
    with pytest.raises(NoMarkers):
        parse_annotation_file(tmp_path / "e.txt")


def test_write_parse_round_trip(tmp_path):
    t = np.array([0.1, 0.123456789012345, 7.0])
    write_annotation_file(tmp_path / "o.txt", t, labels=["a", "b", "c"])
    np.testing.assert_array_equal(parse_annotation_file(tmp_path / "o.txt").times, t)


def test_ground_truth_mean():
    a = AnnotationSequence([1.0, 2.0, 3.0], "a", "r")
    b = AnnotationSequence([1.2, 2.2, 3.4], "b", "r")
    gt = build_ground_truth([a, b])
    np.testing.assert_allclose(gt.times, [1.1, 2.1, 3.2])
    assert gt.n_annotators == 2
    with pytest.raises(ValueError):
        build_ground_truth([a])
    assert ground_truth_from([a]).n_annotators == 1
    with pytest.raises(LengthMismatch):
        build_ground_truth([a, AnnotationSequence([1.0, 2.0], "c", "r")])


def test_nearest_frames_ties_go_earlier():
    times = np.array([0.0, 1.0, 2.0])
    np.testing.assert_array_equal(nearest_frames(times, [0.5, 0.51, 1.49, -3.0, 9.0]), [0, 1, 1, 0, 2])


def test_path_lookup_uses_median():
    path = WarpPath(np.array([[0, 0], [1, 1], [1, 2], [1, 3], [2, 4]]), 0.0)
    ty = np.array([0.0, 1.0, 2.0, 5.0, 6.0])
    np.testing.assert_array_equal(path_lookup(path, 3, ty), [0.0, 2.0, 6.0])


@given(st.lists(st.floats(0.0, 30.0), min_size=1, max_size=50, unique=True),
       st.floats(0.8, 1.25))
def test_transfer_through_linear_path_is_monotone(markers, slope):
    markers = np.sort(markers)
    n = 200
    tx = (np.arange(n) + 0.5) * 0.15
    ty = tx * slope
    path = WarpPath(np.stack([np.arange(n), np.arange(n)], axis=1), 0.0)
    out = transfer_annotations(markers, path, tx, ty)
    assert len(out) == len(markers)
    assert np.all(np.diff(out) >= 0)
    inside = (markers >= tx[0]) & (markers <= tx[-1])
    assert np.all(np.abs(out[inside] - markers[inside] * slope) <= 0.075 * slope + 1e-9)


def test_transfer_clipping_is_reported():
    # a path that goes backwards in time on Y is impossible, but a lookup table can still dip
    path = WarpPath(np.array([[0, 0], [0, 1], [0, 2], [1, 2], [2, 2]]), 0.0)
    ty = np.array([0.0, 10.0, 1.0])
    out, n = transfer_annotations([0.0, 1.0], path, np.array([0.0, 1.0, 2.0]), ty, return_clipped=True)
    np.testing.assert_array_equal(out, [1.0, 1.0])
    assert n == 0
