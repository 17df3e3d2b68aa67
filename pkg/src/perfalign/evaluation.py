"""Scoring alignments against ground truth.

Errors are computed per evaluation direction, summarised by mean / max /
median absolute value, filtered for robustness, ranked, pooled and compared
with a one-way ANOVA.  Everything here is pure aggregation over arrays.
"""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .annotation import transfer_annotations
from .dtw import WarpPath
from .errors import Empty, LengthMismatch, TooFewSamples

X_TO_Y = "X_TO_Y"
Y_TO_X = "Y_TO_X"
ROBUSTNESS_MS = 5000.0
TOP_K = 10


@dataclass
class ErrorSequence:
    errors: np.ndarray  # milliseconds, signed
    direction: str
    pair: tuple
    config_digest: str

    def __post_init__(self):
        self.errors = np.asarray(self.errors, dtype=np.float64)

    def __len__(self):
        return len(self.errors)


def error_sequence(gt_x, gt_y, path: WarpPath, times_x, times_y, direction: str = X_TO_Y,
                   pair=("X", "Y"), config_digest: str = "") -> ErrorSequence:
    """Signed per-event error of path-mapped markers against the target's ground truth."""
    gx = np.asarray(getattr(gt_x, "times", gt_x), dtype=np.float64)
    gy = np.asarray(getattr(gt_y, "times", gt_y), dtype=np.float64)
    if len(gx) != len(gy):
        raise LengthMismatch(f"ground truths have {len(gx)} and {len(gy)} events")
    path.check(len(times_x), len(times_y))
    if direction == X_TO_Y:
        mapped = transfer_annotations(gx, path, times_x, times_y)
        target = gy
    elif direction == Y_TO_X:
        mapped = transfer_annotations(gy, path.reversed(), times_y, times_x)
        target = gx
    else:
        raise ValueError(f"unknown direction {direction!r}")
    return ErrorSequence((mapped - target) * 1000.0, direction, tuple(pair), config_digest)


def summarize(e) -> tuple[float, float, float]:
    """``(mean, max, median)`` of the absolute errors."""
    a = np.abs(np.asarray(getattr(e, "errors", e), dtype=np.float64))
    if len(a) == 0:
        raise Empty("no errors to summarise")
    return float(a.mean()), float(a.max()), float(np.median(a))


@dataclass
class RankEntry:
    config_digest: str
    mean_abs_ms: float
    max_abs_ms: float
    pooled: bool = True
    n: int = 0


@dataclass
class RankingReport:
    entries: list
    threshold_ms: float
    top_k: int
    excluded: list = field(default_factory=list)
    pooled_errors: dict = field(default_factory=dict)

    @property
    def no_survivors(self) -> bool:
        return not self.entries

    def check(self) -> None:
        means = [e.mean_abs_ms for e in self.entries]
        assert means == sorted(means), "ranking not sorted"
        assert all(e.max_abs_ms < self.threshold_ms for e in self.entries), "threshold violated"
        assert len(self.entries) <= self.top_k


def pool_by_config(sequences) -> dict:
    """Concatenate absolute errors of all directions sharing a config digest."""
    groups = defaultdict(list)
    for s in sequences:
        groups[s.config_digest].append(np.abs(s.errors))
    return {k: np.concatenate(v) for k, v in groups.items()}


def rank_alignments(sequences, threshold_ms: float = ROBUSTNESS_MS, top_k: int = TOP_K) -> RankingReport:
    """Rank configs by pooled mean absolute error after the robustness cut.

    Both directions of a config are pooled first, configs whose pooled
    maximum reaches ``threshold_ms`` are dropped, and the best ``top_k``
    survive.  Ties are broken by config digest.  An empty report (no
    survivors) is a valid outcome.
    """
    flat = []
    for s in sequences:
        flat.extend(s if isinstance(s, (tuple, list)) else [s])
    if not flat:
        raise Empty("no error sequences to rank")
    pooled = pool_by_config(flat)
    survivors, excluded = [], []
    for digest in sorted(pooled):
        a = pooled[digest]
        entry = RankEntry(digest, float(a.mean()), float(a.max()), True, len(a))
        (survivors if entry.max_abs_ms < threshold_ms else excluded).append(entry)
    survivors.sort(key=lambda e: (e.mean_abs_ms, e.config_digest))
    kept = survivors[:top_k]
    report = RankingReport(kept, threshold_ms, top_k, excluded, {e.config_digest: pooled[e.config_digest] for e in kept})
    report.check()
    return report


# -- one-way ANOVA -----------------------------------------------------------

def _betacf(a, b, x, eps=1e-15, max_iter=10_000):
    # modified Lentz evaluation of the incomplete beta continued fraction
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c, d = 1.0, 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > tiny else tiny)
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    raise RuntimeError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc(a: float, b: float, x: float) -> float:
    """Regularised incomplete beta function I_x(a, b)."""
    if a <= 0 or b <= 0:
        raise ValueError("betainc needs a, b > 0")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def f_sf(f: float, d1: float, d2: float) -> float:
    """Upper tail P(F > f) of the F(d1, d2) distribution."""
    if f <= 0:
        return 1.0
    if math.isinf(f):
        return 0.0
    return betainc(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f))


def one_way_anova(groups) -> tuple[float, float]:
    """Classic between/within F test for equal group means.

    With no spread at all (every group constant and all means equal) F is
    reported as 0 and p as 1.
    """
    groups = [np.asarray(g, dtype=np.float64).ravel() for g in groups]
    if len(groups) < 2:
        raise TooFewSamples("ANOVA needs at least two groups")
    if any(len(g) < 2 for g in groups):
        raise TooFewSamples("every ANOVA group needs at least two values")
    k = len(groups)
    n = sum(len(g) for g in groups)
    # fsum keeps (F, p) independent of group order
    grand = math.fsum(np.concatenate(groups)) / n
    means = [math.fsum(g) / len(g) for g in groups]
    ss_between = math.fsum(len(g) * (m - grand) ** 2 for g, m in zip(groups, means))
    ss_within = math.fsum(math.fsum((g - m) ** 2) for g, m in zip(groups, means))
    df_b, df_w = k - 1, n - k
    if ss_between == 0.0:
        return 0.0, 1.0
    if ss_within == 0.0:
        return math.inf, 0.0
    f = (ss_between / df_b) / (ss_within / df_w)
    return f, f_sf(f, df_b, df_w)


# -- empirical CDF -----------------------------------------------------------

def ecdf(values) -> list[tuple[float, float]]:
    """Support points ``(value, P(V <= value))`` of the right-continuous eCDF."""
    v = np.asarray(values, dtype=np.float64).ravel()
    if len(v) == 0:
        raise Empty("eCDF of an empty sample")
    uniq, counts = np.unique(v, return_counts=True)
    frac = np.cumsum(counts) / len(v)
    return [(float(u), float(f)) for u, f in zip(uniq, frac)]


def ecdf_at(values, x: float) -> float:
    v = np.asarray(values, dtype=np.float64).ravel()
    if len(v) == 0:
        raise Empty("eCDF of an empty sample")
    return float(np.count_nonzero(v <= x) / len(v))


# -- CSV reports -------------------------------------------------------------

SUMMARY_COLUMNS = ["pair", "cell", "family", "fft_size", "hop_size", "n_mfcc", "n_skip", "metric", "direction",
                   "status", "mean_abs_ms", "max_abs_ms", "median_abs_ms", "n_events"]


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.10g}"
    return str(v)


def write_rows(path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in columns])


def write_ranking(path, reports: dict) -> None:
    """``reports`` maps a pair label to its :class:`RankingReport`."""
    rows = []
    for pair in sorted(reports):
        rep = reports[pair]
        for rank, e in enumerate(rep.entries, start=1):
            rows.append({"pair": pair, "rank": rank, "cell": e.config_digest, "mean_abs_ms": e.mean_abs_ms,
                         "max_abs_ms": e.max_abs_ms, "pooled": int(e.pooled), "n_errors": e.n,
                         "threshold_ms": float(rep.threshold_ms)})
        if rep.no_survivors:
            rows.append({"pair": pair, "rank": 0, "cell": "NO_SURVIVORS", "threshold_ms": float(rep.threshold_ms)})
    write_rows(path, ["pair", "rank", "cell", "mean_abs_ms", "max_abs_ms", "pooled", "n_errors", "threshold_ms"],
               rows)


def write_ecdf(path, curves: dict) -> None:
    rows = [{"pair": pair, "abs_error_ms": v, "fraction": f}
            for pair in sorted(curves) for v, f in curves[pair]]
    write_rows(path, ["pair", "abs_error_ms", "fraction"], rows)


def write_anova(path, results: dict) -> None:
    rows = []
    for pair in sorted(results):
        r = results[pair]
        rows.append({"pair": pair, "groups": r.get("groups"), "n": r.get("n"), "F": r.get("F"), "p": r.get("p"),
                     "note": r.get("note", "")})
    write_rows(path, ["pair", "groups", "n", "F", "p", "note"], rows)
