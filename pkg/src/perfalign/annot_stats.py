"""Precision of human annotations.

Two annotators marking the same score events give a difference sequence
whose spread, after removing the constant offset between them, estimates
the per-marker standard deviation.  Local (block-pooled) estimates, their
median, a Shapiro-Wilk normality test and QQ-plot data are provided.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import ndtr, ndtri

from .annotation import AnnotationSequence
from .errors import Empty, LengthMismatch, SampleSizeOutOfRange, TooFewSamples

BLOCK_LEN = 24
BLOCK_HOP = 12


@dataclass
class DifferenceSequence:
    deltas: np.ndarray
    mean_offset: float
    pair: tuple = ("", "")

    def __len__(self):
        return len(self.deltas)

    @property
    def raw(self) -> np.ndarray:
        return self.deltas + self.mean_offset


@dataclass
class SigmaEstimate:
    sigma: float  # milliseconds
    n: int
    scope: str = "GLOBAL"
    start: Optional[int] = None

    @property
    def length(self) -> int:
        return self.n


def diff_sequences(a1: AnnotationSequence, a2: AnnotationSequence) -> DifferenceSequence:
    t1 = np.asarray(getattr(a1, "times", a1), dtype=np.float64)
    t2 = np.asarray(getattr(a2, "times", a2), dtype=np.float64)
    if len(t1) != len(t2):
        raise LengthMismatch(f"{len(t1)} vs {len(t2)} markers")
    raw = t1 - t2
    offset = float(raw.mean())
    pair = (getattr(a1, "annotator", ""), getattr(a2, "annotator", ""))
    return DifferenceSequence(raw - offset, offset, pair)


def _sigma_ms(deltas) -> float:
    return float(np.sqrt(np.sum(np.square(deltas)) / (2 * len(deltas)))) * 1000.0


def estimate_sigma(d: DifferenceSequence, raw: bool = False) -> SigmaEstimate:
    """sigma^2 = sum(delta^2) / 2N, reported in ms.

    With ``raw=True`` the systematic offset is left in the differences.
    """
    if len(d) < 2:
        raise TooFewSamples(f"need at least 2 differences, got {len(d)}")
    deltas = d.raw if raw else d.deltas
    return SigmaEstimate(_sigma_ms(deltas), len(deltas))


def block_bounds(n: int, block_len: int = BLOCK_LEN, hop: int = BLOCK_HOP):
    """``(start, stop)`` index pairs of the pooling blocks.

    Full blocks start every ``hop`` events.  Events past the last full block
    become a partial block when it would hold at least ``block_len / 2``
    events, otherwise they are appended to the last full block.
    """
    if n < block_len:
        raise TooFewSamples(f"{n} events is fewer than one block of {block_len}")
    bounds = [(s, s + block_len) for s in range(0, n - block_len + 1, hop)]
    last_start, last_stop = bounds[-1]
    if last_stop < n:
        tail_start = last_start + hop
        if n - tail_start >= block_len / 2:
            bounds.append((tail_start, n))
        else:
            bounds[-1] = (last_start, n)
    return bounds


def blockwise_sigma(d: DifferenceSequence, block_len: int = BLOCK_LEN, hop: int = BLOCK_HOP,
                    raw: bool = False) -> list[SigmaEstimate]:
    deltas = d.raw if raw else d.deltas
    return [SigmaEstimate(_sigma_ms(deltas[a:b]), b - a, "BLOCK", a)
            for a, b in block_bounds(len(deltas), block_len, hop)]


def median_sd(blocks) -> float:
    """Median block sigma in ms; for an even count the lower middle value."""
    values = sorted(b.sigma if isinstance(b, SigmaEstimate) else float(b) for b in blocks)
    if not values:
        raise Empty("no block estimates")
    return values[(len(values) - 1) // 2]


def per_event_sd(annotations) -> np.ndarray:
    """Sample SD (ms) across annotators for each event.

    With three markers per event this is a very noisy estimate; it is kept
    for plotting next to the block-pooled curve, not for inference.
    """
    stack = np.stack([np.asarray(a.times) for a in annotations])
    if stack.shape[0] < 2:
        raise TooFewSamples("per-event SD needs at least two annotators")
    return stack.std(axis=0, ddof=1) * 1000.0


# -- Shapiro-Wilk (Royston 1995, algorithm AS R94) ---------------------------

_C1 = (0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056)
_C2 = (0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633)
_C3 = (0.5440, -0.39978, 0.025054, -6.714e-4)
_C4 = (1.3822, -0.77857, 0.062767, -0.0020322)
_C5 = (-1.5861, -0.31082, -0.083751, 0.0038915)
_C6 = (-0.4803, -0.082676, 0.0030302)
_G = (-2.273, 0.459)


def _poly(coeffs, x):
    return sum(c * x ** k for k, c in enumerate(coeffs))


def shapiro_coefficients(n: int) -> np.ndarray:
    """Royston's approximations to the Shapiro-Wilk weights for the upper half."""
    if n == 3:
        return np.array([np.sqrt(0.5)])
    half = n // 2
    m = ndtri((np.arange(1, half + 1) - 0.375) / (n + 0.25))
    summ2 = 2.0 * np.sum(m ** 2)
    ssumm2 = np.sqrt(summ2)
    rsn = 1.0 / np.sqrt(n)
    a = -m.copy()
    a1 = _poly(_C1, rsn) - m[0] / ssumm2
    if n > 5:
        a2 = -m[1] / ssumm2 + _poly(_C2, rsn)
        fac = np.sqrt((summ2 - 2 * m[0] ** 2 - 2 * m[1] ** 2) / (1 - 2 * a1 ** 2 - 2 * a2 ** 2))
        a[2:] /= fac
        a[1] = a2
    else:
        fac = np.sqrt((summ2 - 2 * m[0] ** 2) / (1 - 2 * a1 ** 2))
        a[1:] /= fac
    a[0] = a1
    return a


def shapiro_wilk(samples) -> tuple[float, float]:
    """Return ``(W, p)`` for the null hypothesis that the sample is normal."""
    x = np.sort(np.asarray(samples, dtype=np.float64).ravel())
    n = len(x)
    if not 3 <= n <= 5000:
        raise SampleSizeOutOfRange(f"Shapiro-Wilk needs 3 <= n <= 5000, got {n}")
    if x[-1] - x[0] < 1e-19 * max(1.0, abs(x[0])):
        raise ValueError("all samples are identical")
    a = shapiro_coefficients(n)
    half = len(a)
    spread = x[::-1][:half] - x[:half]
    ssx = np.sum((x - x.mean()) ** 2)
    w = min(float(np.dot(a, spread) ** 2 / ssx), 1.0)

    if n == 3:
        p = 6.0 / np.pi * (np.arcsin(np.sqrt(w)) - np.pi / 3.0)
        return w, float(min(max(p, 0.0), 1.0))
    w1 = 1.0 - w
    if w1 <= 0.0:
        return w, 1.0
    y = np.log(w1)
    if n <= 11:
        gamma = _poly(_G, n)
        if y >= gamma:
            return w, 0.0
        y = -np.log(gamma - y)
        mean, sd = _poly(_C3, n), np.exp(_poly(_C4, n))
    else:
        ln = np.log(n)
        mean, sd = _poly(_C5, ln), np.exp(_poly(_C6, ln))
    return w, float(ndtr(-(y - mean) / sd))


# -- QQ plot data ------------------------------------------------------------

@dataclass
class QQReport:
    theoretical: np.ndarray
    sample: np.ndarray
    slope: float
    intercept: float
    lower: np.ndarray
    upper: np.ndarray

    @property
    def fitted(self) -> np.ndarray:
        return self.intercept + self.slope * self.theoretical

    @property
    def outside(self) -> np.ndarray:
        return (self.sample < self.lower) | (self.sample > self.upper)


def qq_data(samples, z: float = 1.96) -> QQReport:
    """Normal QQ points, a line through the quartiles and a pointwise band.

    The line joins the (theoretical, sample) quartile points, both read off
    the plotting positions ``(i - 0.5) / n`` by linear interpolation.  The band
    is ``line +/- z * slope * sqrt(p (1 - p) / n) / phi(q)``, the asymptotic
    standard error of a normal order statistic.
    """
    x = np.sort(np.asarray(samples, dtype=np.float64).ravel())
    n = len(x)
    if n < 4:
        raise TooFewSamples(f"QQ data needs at least 4 samples, got {n}")
    p = (np.arange(1, n + 1) - 0.5) / n
    q = ndtri(p)
    qx = np.interp([0.25, 0.75], p, x)
    qt = np.interp([0.25, 0.75], p, q)
    slope = float((qx[1] - qx[0]) / (qt[1] - qt[0]))
    intercept = float(qx[0] - slope * qt[0])
    density = np.exp(-0.5 * q * q) / np.sqrt(2.0 * np.pi)
    se = abs(slope) * np.sqrt(p * (1 - p) / n) / density
    fitted = intercept + slope * q
    return QQReport(q, x, slope, intercept, fitted - z * se, fitted + z * se)


# -- simulation of the annotation model --------------------------------------

def simulate_annotators(n_events: int, sigma_ms, n_annotators: int = 2, seed: int = 0,
                        spacing: float = 0.5, start: float = 1.0, offsets_ms=None,
                        recording: str = "sim"):
    """Draw annotators as true event times plus independent Gaussian noise.

    ``sigma_ms`` is a scalar or one value per event.  Returns the true times
    and a list of :class:`AnnotationSequence`.
    """
    rng = np.random.default_rng(seed)
    ioi = spacing * (1.0 + 0.05 * rng.standard_normal(n_events))
    true_times = start + np.concatenate([[0.0], np.cumsum(ioi[:-1])])
    sigma = np.broadcast_to(np.asarray(sigma_ms, dtype=np.float64) / 1000.0, (n_events,))
    offsets = np.zeros(n_annotators) if offsets_ms is None else np.asarray(offsets_ms, dtype=np.float64) / 1000.0
    annotators = []
    for k in range(n_annotators):
        times = true_times + offsets[k] + sigma * rng.standard_normal(n_events)
        annotators.append(AnnotationSequence(times, f"ann{k + 1}", recording))
    return true_times, annotators


# -- reports -----------------------------------------------------------------

@dataclass
class PairReport:
    pair: tuple
    offset_ms: float
    sigma_ms: float
    median_sd_ms: float
    n_events: int
    w: float
    p: float
    blocks: list = field(default_factory=list)
    block_tests: list = field(default_factory=list)
    qq: Optional[QQReport] = None


def analyse_pair(a1, a2, block_len=BLOCK_LEN, hop=BLOCK_HOP) -> PairReport:
    d = diff_sequences(a1, a2)
    blocks = blockwise_sigma(d, block_len, hop)
    w, p = shapiro_wilk(d.deltas)
    tests = [shapiro_wilk(d.deltas[b.start:b.start + b.n]) for b in blocks]
    return PairReport(d.pair, d.mean_offset * 1000.0, estimate_sigma(d).sigma, median_sd(blocks),
                      len(d), w, p, blocks, tests, qq_data(d.deltas))


def analyse_recording(annotations, block_len=BLOCK_LEN, hop=BLOCK_HOP):
    """Pairwise reports plus the recording-level median over all pairs' blocks."""
    reports = [analyse_pair(a, b, block_len, hop) for a, b in itertools.combinations(annotations, 2)]
    pooled = [blk for r in reports for blk in r.blocks]
    return reports, median_sd(pooled)


def write_block_curve(path, reports) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["annotator_a", "annotator_b", "event_start", "n_events", "sigma_ms", "sw_w", "sw_p"])
        for r in reports:
            for blk, (sw, sp) in zip(r.blocks, r.block_tests):
                w.writerow([r.pair[0], r.pair[1], blk.start, blk.n, f"{blk.sigma:.6f}", f"{sw:.6f}", f"{sp:.6g}"])


def write_qq(path, reports) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["annotator_a", "annotator_b", "theoretical", "sample_ms", "line_ms", "lower_ms", "upper_ms",
                    "outside"])
        for r in reports:
            qq = r.qq
            for t, s, f, lo, hi, out in zip(qq.theoretical, qq.sample, qq.fitted, qq.lower, qq.upper, qq.outside):
                w.writerow([r.pair[0], r.pair[1], f"{t:.6f}", f"{s * 1000:.6f}", f"{f * 1000:.6f}",
                            f"{lo * 1000:.6f}", f"{hi * 1000:.6f}", int(out)])


def write_pair_summary(path, reports, recording_median=None) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["annotator_a", "annotator_b", "n_events", "offset_ms", "sigma_ms", "median_sd_ms",
                    "sw_w", "sw_p", "n_blocks", "blocks_normal_5pct"])
        for r in reports:
            normal = sum(p >= 0.05 for _, p in r.block_tests)
            w.writerow([r.pair[0], r.pair[1], r.n_events, f"{r.offset_ms:.6f}", f"{r.sigma_ms:.6f}",
                        f"{r.median_sd_ms:.6f}", f"{r.w:.6f}", f"{r.p:.6g}", len(r.blocks), normal])
        if recording_median is not None:
            w.writerow(["*", "*", "", "", "", f"{recording_median:.6f}", "", "", "", ""])


def write_event_sd(path, annotations) -> None:
    sd = per_event_sd(annotations)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["event", "sd_ms", "low_confidence"])
        for k, v in enumerate(sd):
            w.writerow([k, f"{v:.6f}", 1])
