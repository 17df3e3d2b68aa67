"""Exact dynamic time warping and the multiscale FastDTW approximation.

Both routes share one banded kernel: exact DTW is the band that spans every
column, FastDTW the band grown around a projected low-resolution path.  Steps
are (1,0), (0,1) and (1,1) without slope weights, so the accumulated cost of
a path is simply the sum of its local distances.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from pathlib import Path

import numba as nb
import numpy as np

from .errors import DimensionMismatch, EmptyPath, EmptySequence, InvalidConfig

DEFAULT_RADIUS = 10
FULL_MATRIX_THRESHOLD = 20_000

_ORIGIN, _DIAG, _LEFT, _UP, _UNREACHED = 0, 1, 2, 3, 255


class DistanceMetric(str, enum.Enum):
    L1 = "L1"
    L2 = "L2"
    COSINE = "COSINE"

    @property
    def code(self) -> int:
        return _METRIC_CODES[self]


_METRIC_CODES = {DistanceMetric.L1: 0, DistanceMetric.L2: 1, DistanceMetric.COSINE: 2}


def distance(x, y, metric) -> float:
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise DimensionMismatch(f"vectors of length {len(x)} and {len(y)}")
    metric = DistanceMetric(metric)
    if metric is DistanceMetric.L1:
        return float(np.sum(np.abs(x - y)))
    if metric is DistanceMetric.L2:
        return float(np.sqrt(np.sum((x - y) ** 2)))
    nx, ny = np.sqrt(np.sum(x * x)), np.sqrt(np.sum(y * y))
    return float(_cosine(float(np.sum(x * y)), nx, ny))


@nb.njit(cache=True)
def _cosine(dot, nx, ny):
    if nx == 0.0 and ny == 0.0:
        return 0.0
    if nx == 0.0 or ny == 0.0:
        return 1.0
    d = 1.0 - dot / (nx * ny)
    return min(max(d, 0.0), 2.0)


@nb.njit(cache=True)
def _local(X, Y, xn, yn, i, j, metric):
    acc = 0.0
    if metric == 0:
        for k in range(X.shape[1]):
            acc += abs(X[i, k] - Y[j, k])
        return acc
    if metric == 1:
        for k in range(X.shape[1]):
            diff = X[i, k] - Y[j, k]
            acc += diff * diff
        return np.sqrt(acc)
    for k in range(X.shape[1]):
        acc += X[i, k] * Y[j, k]
    return _cosine(acc, xn[i], yn[j])


@nb.njit(cache=True)
def _banded_dtw(X, Y, lo, hi, metric, xn, yn):
    """Accumulate cost inside the band ``lo[i] <= j <= hi[i]`` and backtrack.

    Cost lives in two rolling rows; only the one-byte step choices are kept
    per band cell.  Ties prefer the diagonal, then (0,1), then (1,0).
    """
    L = X.shape[0]
    M = Y.shape[0]
    offs = np.zeros(L + 1, dtype=np.int64)
    for i in range(L):
        offs[i + 1] = offs[i] + hi[i] - lo[i] + 1
    steps = np.full(offs[L], _UNREACHED, dtype=np.uint8)
    inf = np.inf
    prev = np.full(M, inf)
    cur = np.full(M, inf)
    for i in range(L):
        for j in range(lo[i], hi[i] + 1):
            d = _local(X, Y, xn, yn, i, j, metric)
            if i == 0 and j == 0:
                cur[j] = d
                steps[0] = _ORIGIN
                continue
            best = inf
            step = _UNREACHED
            if i > 0 and j > 0 and lo[i - 1] <= j - 1 <= hi[i - 1] and prev[j - 1] < best:
                best = prev[j - 1]
                step = _DIAG
            if j > lo[i] and cur[j - 1] < best:
                best = cur[j - 1]
                step = _LEFT
            if i > 0 and lo[i - 1] <= j <= hi[i - 1] and prev[j] < best:
                best = prev[j]
                step = _UP
            cur[j] = best + d
            steps[offs[i] + j - lo[i]] = step
        if i < L - 1:
            prev, cur = cur, prev
    total = cur[M - 1]

    path = np.empty((L + M - 1, 2), dtype=np.int64)
    i, j, k = L - 1, M - 1, 0
    while True:
        path[k, 0] = i
        path[k, 1] = j
        k += 1
        s = steps[offs[i] + j - lo[i]]
        if s == _ORIGIN:
            break
        if s == _DIAG:
            i -= 1
            j -= 1
        elif s == _LEFT:
            j -= 1
        elif s == _UP:
            i -= 1
        else:
            return total, path[:0]
    return total, path[:k][::-1].copy()


@dataclass
class WarpPath:
    pairs: np.ndarray
    cost: float

    def __post_init__(self):
        self.pairs = np.asarray(self.pairs, dtype=np.int64).reshape(-1, 2)

    def __len__(self):
        return len(self.pairs)

    def check(self, L: int, M: int) -> None:
        """Raise ``ValueError`` unless this is a boundary-to-boundary monotone path."""
        p = self.pairs
        if len(p) == 0:
            raise EmptyPath("warp path has no pairs")
        if tuple(p[0]) != (0, 0) or tuple(p[-1]) != (L - 1, M - 1):
            raise ValueError(f"path runs {tuple(p[0])} -> {tuple(p[-1])}, expected (0,0) -> {(L - 1, M - 1)}")
        steps = np.diff(p, axis=0)
        ok = np.all((steps >= 0) & (steps <= 1), axis=1) & (steps.sum(axis=1) >= 1)
        if not ok.all():
            k = int(np.argmin(ok))
            raise ValueError(f"illegal step {tuple(steps[k])} after pair {k}")

    def reversed(self) -> "WarpPath":
        """The same alignment read from Y to X."""
        return WarpPath(self.pairs[:, ::-1].copy(), self.cost)


def _as_matrix(seq) -> np.ndarray:
    a = np.asarray(getattr(seq, "frames", seq), dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise DimensionMismatch(f"expected an L x D matrix, got shape {a.shape}")
    return np.ascontiguousarray(a)


def _prepare(X, Y):
    X, Y = _as_matrix(X), _as_matrix(Y)
    if len(X) == 0 or len(Y) == 0:
        raise EmptySequence("cannot align an empty sequence")
    if X.shape[1] != Y.shape[1]:
        raise DimensionMismatch(f"feature dimensions differ: {X.shape[1]} vs {Y.shape[1]}")
    if not (np.isfinite(X).all() and np.isfinite(Y).all()):
        raise ValueError("feature sequences contain NaN/Inf")
    return X, Y


def _run_band(X, Y, lo, hi, metric):
    metric = DistanceMetric(metric)
    xn = np.sqrt(np.einsum("ij,ij->i", X, X))
    yn = np.sqrt(np.einsum("ij,ij->i", Y, Y))
    cost, pairs = _banded_dtw(X, Y, lo.astype(np.int64), hi.astype(np.int64), metric.code, xn, yn)
    if len(pairs) == 0 or not np.isfinite(cost):
        raise RuntimeError("search window does not connect (0,0) to the end cell")
    return WarpPath(pairs, float(cost))


def dtw_exact(X, Y, metric=DistanceMetric.L2, full_matrix_threshold: int = FULL_MATRIX_THRESHOLD) -> WarpPath:
    """Globally optimal warp path between two feature sequences."""
    X, Y = _prepare(X, Y)
    L, M = len(X), len(Y)
    if max(L, M) > full_matrix_threshold:
        raise InvalidConfig(f"exact DTW on {L}x{M} frames exceeds the full-matrix threshold "
                            f"({full_matrix_threshold}); use fastdtw")
    return _run_band(X, Y, np.zeros(L, dtype=np.int64), np.full(L, M - 1, dtype=np.int64), metric)


def coarsen(X: np.ndarray) -> np.ndarray:
    """Halve the frame rate by averaging adjacent pairs; an odd last frame is kept as is."""
    n = len(X) // 2 * 2
    half = (X[0:n:2] + X[1:n:2]) / 2.0
    if len(X) % 2:
        half = np.vstack([half, X[-1:]])
    return half


def expand_window(pairs: np.ndarray, L: int, M: int, radius: int):
    """Project a half-resolution path to an ``L x M`` band grown by ``radius``.

    Returns per-row inclusive column bounds ``(lo, hi)``.
    """
    Lc = int(pairs[:, 0].max()) + 1
    Mc = int(pairs[:, 1].max()) + 1
    cmin = np.full(Lc, Mc, dtype=np.int64)
    cmax = np.full(Lc, -1, dtype=np.int64)
    np.minimum.at(cmin, pairs[:, 0], pairs[:, 1])
    np.maximum.at(cmax, pairs[:, 0], pairs[:, 1])
    rows = np.arange(Lc)
    lo_c = np.maximum(cmin[np.maximum(rows - radius, 0)] - radius, 0)
    hi_c = np.minimum(cmax[np.minimum(rows + radius, Lc - 1)] + radius, Mc - 1)
    fine = np.arange(L) // 2
    lo = 2 * lo_c[fine]
    hi = np.minimum(2 * hi_c[fine] + 1, M - 1)
    return lo, hi


def _fastdtw(X, Y, metric, radius):
    L, M = len(X), len(Y)
    if min(L, M) <= radius + 2:
        return _run_band(X, Y, np.zeros(L, dtype=np.int64), np.full(L, M - 1, dtype=np.int64), metric)
    coarse = _fastdtw(coarsen(X), coarsen(Y), metric, radius)
    lo, hi = expand_window(coarse.pairs, L, M, radius)
    return _run_band(X, Y, lo, hi, metric)


def fastdtw(X, Y, metric=DistanceMetric.L2, radius: int = DEFAULT_RADIUS) -> WarpPath:
    """Approximate DTW: align at half resolution, then refine inside a band.

    The result is a valid path whose cost is never below the exact optimum;
    with ``radius >= max(L, M)`` the band is the full matrix and the two agree.
    """
    if radius < 0:
        raise InvalidConfig(f"radius must be >= 0, got {radius}")
    X, Y = _prepare(X, Y)
    return _fastdtw(X, Y, DistanceMetric(metric), int(radius))


def write_path_csv(path, warp: WarpPath, x_id: str, y_id: str, config_digest: str = "") -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# config={config_digest} cost={warp.cost!r}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([x_id, y_id])
        w.writerows(warp.pairs.tolist())


def read_path_csv(path):
    """Return ``(WarpPath, x_id, y_id, config_digest)``."""
    lines = Path(path).read_text().splitlines()
    meta = dict(kv.split("=", 1) for kv in lines[0].lstrip("# ").split())
    rows = list(csv.reader(lines[1:]))
    x_id, y_id = rows[0]
    pairs = np.array([[int(a), int(b)] for a, b in rows[1:]], dtype=np.int64)
    return WarpPath(pairs, float(meta.get("cost", "nan"))), x_id, y_id, meta.get("config", "")
