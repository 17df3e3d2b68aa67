"""Synthetic recordings with known time correspondence.

A random note sequence (decaying harmonic tones plus a little noise) is
rendered twice: once on its own clock and once through a smooth
piecewise-linear time map.  Because both renderings come from the same note
list, markers placed on the first map analytically onto the second.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio_io import AudioBuffer


@dataclass
class Note:
    onset: float
    duration: float
    midi: int
    amp: float
    decay: float


@dataclass
class PiecewiseLinearWarp:
    """Monotone map from source time to target time through ``(src, dst)`` knots."""

    src: np.ndarray
    dst: np.ndarray

    def __call__(self, t):
        out = np.interp(t, self.src, self.dst)
        return float(out) if np.ndim(t) == 0 else out

    def inverse(self) -> "PiecewiseLinearWarp":
        return PiecewiseLinearWarp(self.dst.copy(), self.src.copy())

    @property
    def slopes(self) -> np.ndarray:
        return np.diff(self.dst) / np.diff(self.src)

    @classmethod
    def identity(cls, duration: float) -> "PiecewiseLinearWarp":
        return cls(np.array([0.0, duration]), np.array([0.0, duration]))

    @classmethod
    def random(cls, duration: float, seed: int = 0, n_segments: int = 6,
               slope_range=(0.8, 1.25)) -> "PiecewiseLinearWarp":
        rng = np.random.default_rng(seed)
        cuts = np.sort(rng.uniform(0.1, 0.9, n_segments - 1)) * duration
        src = np.concatenate([[0.0], cuts, [duration]])
        lo, hi = np.log(slope_range[0]), np.log(slope_range[1])
        slopes = np.exp(rng.uniform(lo, hi, n_segments))
        dst = np.concatenate([[0.0], np.cumsum(np.diff(src) * slopes)])
        return cls(src, dst)


def random_notes(duration: float, seed: int = 0, voices: int = 2) -> list[Note]:
    rng = np.random.default_rng(seed)
    notes = []
    for v in range(voices):
        t = rng.uniform(0.0, 0.2)
        low = 45 + 12 * v
        while t < duration - 0.1:
            ioi = rng.uniform(0.15, 0.6)
            dur = min(ioi * rng.uniform(0.8, 1.6), duration - t)
            notes.append(Note(t, dur, int(rng.integers(low, low + 24)), rng.uniform(0.3, 1.0),
                              rng.uniform(0.2, 0.8)))
            t += ioi
    notes.sort(key=lambda n: (n.onset, n.midi))
    return notes


def render(notes, duration: float, sample_rate: int = 44100, warp: PiecewiseLinearWarp | None = None,
           noise_db: float = -40.0, seed: int = 0, n_harmonics: int = 8) -> AudioBuffer:
    """Render notes (optionally on a warped clock) to a mono buffer peaking at 0.9."""
    rng = np.random.default_rng(seed)
    total = duration if warp is None else float(warp(duration))
    n = int(round(total * sample_rate))
    out = np.zeros(n)
    attack, release = 0.01, 0.03
    for note in notes:
        start, end = note.onset, note.onset + note.duration
        if warp is not None:
            start, end = float(warp(start)), float(warp(end))
        i0 = int(round(start * sample_rate))
        i1 = min(int(round((end + release) * sample_rate)), n)
        if i1 <= i0:
            continue
        t = np.arange(i1 - i0) / sample_rate
        held = end - start
        env = np.minimum(t / attack, 1.0) * np.exp(-t / note.decay)
        env *= np.clip((held + release - t) / release, 0.0, 1.0)
        f0 = 440.0 * 2.0 ** ((note.midi - 69) / 12.0)
        tone = np.zeros_like(t)
        for k in range(1, n_harmonics + 1):
            if k * f0 < sample_rate / 2:
                tone += np.sin(2 * np.pi * k * f0 * t) / k
        out[i0:i1] += note.amp * env * tone
    peak = np.max(np.abs(out)) or 1.0
    out = 0.9 * out / peak
    out += 10 ** (noise_db / 20.0) * rng.standard_normal(n)
    out *= 0.9 / max(np.max(np.abs(out)), 1e-12)
    return AudioBuffer(out, sample_rate, "synthetic")


@dataclass
class SyntheticPair:
    x: AudioBuffer
    y: AudioBuffer
    markers_x: np.ndarray
    markers_y: np.ndarray
    warp: PiecewiseLinearWarp


def synthetic_pair(duration: float = 30.0, sample_rate: int = 44100, seed: int = 0,
                   marker_step: float = 0.5, warp: PiecewiseLinearWarp | None = None) -> SyntheticPair:
    """A recording, its time-warped re-rendering and analytically mapped markers."""
    notes = random_notes(duration, seed)
    warp = PiecewiseLinearWarp.random(duration, seed + 1) if warp is None else warp
    x = render(notes, duration, sample_rate, seed=seed + 2)
    y = render(notes, duration, sample_rate, warp=warp, seed=seed + 3)
    markers_x = np.arange(marker_step, duration - marker_step / 2, marker_step)
    return SyntheticPair(x, y, markers_x, warp(markers_x), warp)


def write_fixture(directory, duration: float = 20.0, seed: int = 0, n_annotators: int = 2,
                  jitter_ms: float = 20.0, sample_rate: int = 22050, grid=None) -> Path:
    """Write a two-recording experiment to ``directory`` and return its config path.

    Each recording gets ``n_annotators`` marker files: the analytic markers
    plus independent Gaussian jitter.  ``grid`` is a list of grid-block
    mappings; by default one small MFCC_MOD block.
    """
    import yaml

    from .annotation import write_annotation_file
    from .audio_io import write_wav

    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    pair = synthetic_pair(duration, sample_rate, seed)
    rng = np.random.default_rng(seed + 100)
    recs = []
    for rid, buf, markers in (("x", pair.x, pair.markers_x), ("y", pair.y, pair.markers_y)):
        write_wav(d / f"{rid}.wav", buf.samples, sample_rate)
        anns = []
        for k in range(n_annotators):
            t = np.maximum(markers + jitter_ms / 1000.0 * rng.standard_normal(len(markers)), 0.0)
            write_annotation_file(d / f"{rid}_ann{k + 1}.txt", t)
            anns.append(f"{rid}_ann{k + 1}.txt")
        recs.append({"id": rid, "audio": f"{rid}.wav", "annotations": anns})
    if grid is None:
        grid = [{"family": "MFCC_MOD", "fft_sizes": [2048], "n_skip": [20]}]
    cfg = {"recordings": recs, "pairs": [["x", "y"]], "grid": grid, "metrics": ["L1", "L2", "COSINE"],
           "dtw": {"method": "fast", "radius": 10}, "output_dir": "out", "seed": seed}
    path = d / "experiment.yaml"
    path.write_text(yaml.safe_dump(cfg, sort_keys=False))
    return path
