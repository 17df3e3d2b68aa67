"""Marker files, ground truth from several annotators, and marker transfer.

Marker files are the plain-text export of annotation tools: one marker per
line, the first whitespace-separated token is the time in seconds and any
trailing label is ignored.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dtw import WarpPath
from .errors import EmptyPath, LengthMismatch, NoMarkers, NonMonotonic, NonMonotonicResult, UnparseableLine

log = logging.getLogger(__name__)


@dataclass
class AnnotationSequence:
    times: np.ndarray
    annotator: str = ""
    recording: str = ""

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64).ravel()
        if len(self.times) == 0:
            raise NoMarkers(f"annotation {self.annotator!r} has no markers")
        if self.times[0] < 0:
            raise ValueError("marker times must be >= 0")
        bad = np.flatnonzero(np.diff(self.times) <= 0)
        if len(bad):
            raise NonMonotonic(f"annotation {self.annotator!r}", int(bad[0]) + 2)

    def __len__(self):
        return len(self.times)


@dataclass
class GroundTruth:
    times: np.ndarray
    n_annotators: int
    recording: str = ""

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64).ravel()

    def __len__(self):
        return len(self.times)


def parse_annotation_file(path, annotator: str | None = None, recording: str = "") -> AnnotationSequence:
    path = Path(path)
    times = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        token = s.split(None, 1)[0].rstrip(",")
        try:
            t = float(token)
        except ValueError:
            raise UnparseableLine(path, lineno, line) from None
        if not np.isfinite(t) or t < 0:
            raise UnparseableLine(path, lineno, line)
        if times and t <= times[-1]:
            raise NonMonotonic(str(path), lineno)
        times.append(t)
    if not times:
        raise NoMarkers(f"{path}: no markers")
    return AnnotationSequence(np.array(times), annotator if annotator is not None else path.stem, recording)


def write_annotation_file(path, times, labels=None) -> None:
    """Write markers in the same format :func:`parse_annotation_file` reads."""
    lines = []
    for k, t in enumerate(np.asarray(times, dtype=np.float64)):
        row = repr(float(t))
        if labels is not None:
            row += f"\t{labels[k]}"
        lines.append(row)
    Path(path).write_text("\n".join(lines) + "\n")


def build_ground_truth(annotations) -> GroundTruth:
    """Per-event arithmetic mean over two or more annotators."""
    annotations = list(annotations)
    if len(annotations) < 2:
        raise ValueError("ground truth needs at least two annotations")
    lengths = {len(a) for a in annotations}
    if len(lengths) != 1:
        raise LengthMismatch(f"annotations disagree on the event count: {sorted(lengths)}")
    recordings = {a.recording for a in annotations}
    if len(recordings) != 1:
        raise ValueError(f"annotations belong to different recordings: {sorted(recordings)}")
    g = np.mean(np.stack([a.times for a in annotations]), axis=0)
    if np.any(np.diff(g) <= 0):
        raise NonMonotonicResult("averaged markers are not strictly increasing")
    return GroundTruth(g, len(annotations), recordings.pop())


def ground_truth_from(annotations) -> GroundTruth:
    """Like :func:`build_ground_truth` but accepts a single annotation as is."""
    annotations = list(annotations)
    if len(annotations) == 1:
        a = annotations[0]
        return GroundTruth(a.times.copy(), 1, a.recording)
    return build_ground_truth(annotations)


def nearest_frames(times: np.ndarray, targets) -> np.ndarray:
    """Index of the frame centre nearest to each target; ties go to the earlier frame."""
    times = np.asarray(times, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    right = np.clip(np.searchsorted(times, targets, side="left"), 0, len(times) - 1)
    left = np.clip(right - 1, 0, len(times) - 1)
    use_left = np.abs(targets - times[left]) <= np.abs(times[right] - targets)
    return np.where(use_left, left, right)


def path_lookup(path: WarpPath, n_x: int, times_y: np.ndarray) -> np.ndarray:
    """Median target time matched to each source frame ``0 .. n_x-1``."""
    pairs = path.pairs
    if len(pairs) == 0:
        raise EmptyPath("warp path has no pairs")
    if pairs[:, 0].max() >= n_x or pairs[:, 1].max() >= len(times_y):
        raise ValueError("warp path indexes past the frame grids")
    out = np.full(n_x, np.nan)
    ty = np.asarray(times_y, dtype=np.float64)[pairs[:, 1]]
    # pairs are sorted by source frame, so each frame's matches are contiguous
    starts = np.flatnonzero(np.r_[True, pairs[1:, 0] != pairs[:-1, 0]])
    ends = np.r_[starts[1:], len(pairs)]
    for s, e in zip(starts, ends):
        out[pairs[s, 0]] = np.median(ty[s:e])
    if np.isnan(out).any():
        raise ValueError("warp path skips source frames")
    return out


def transfer_annotations(gt_x, path: WarpPath, times_x, times_y, return_clipped: bool = False):
    """Map markers of recording X onto recording Y through a warp path.

    Each marker snaps to the nearest X frame; the Y frames matched to it are
    reduced by their median time.  The result is forced non-decreasing.
    """
    markers = np.asarray(getattr(gt_x, "times", gt_x), dtype=np.float64)
    times_x = np.asarray(times_x, dtype=np.float64)
    mapped = path_lookup(path, len(times_x), times_y)[nearest_frames(times_x, markers)]
    clipped = np.maximum.accumulate(mapped)
    n_clipped = int(np.count_nonzero(clipped != mapped))
    if n_clipped:
        log.warning("monotone clipping adjusted %d transferred markers", n_clipped)
    if return_clipped:
        return clipped, n_clipped
    return clipped
