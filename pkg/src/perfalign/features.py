"""Spectral features for alignment: MFCC, skip-MFCC, STFT chroma and CENS.

All families share the same framing (:mod:`perfalign.audio_io`) so that the
time-stamp of frame ``i`` is the centre of its analysis block.
"""

from __future__ import annotations

import enum
import hashlib
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.fft import dct

from .audio_io import AudioBuffer, FrameGrid, frame_signal
from .errors import InvalidConfig

LOG_FLOOR = 1e-10
N_MELS = 128
MOD_TOTAL = 120
CHROMA_FMIN = 32.7
STUDIED_SKIPS = tuple(range(10, 90, 10))

CENS_THRESHOLDS = (0.05, 0.1, 0.2, 0.4)
CENS_WEIGHT = 0.25
CENS_SMOOTH = 41

PITCH_CLASSES = ("C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B")


class Family(str, enum.Enum):
    MFCC = "MFCC"
    MFCC_MOD = "MFCC_MOD"
    CHROMA_STFT = "CHROMA_STFT"
    CHROMA_CENS = "CHROMA_CENS"


@dataclass(frozen=True)
class FeatureConfig:
    family: Family
    fft_size: int
    hop_size: int
    n_mfcc: Optional[int] = None
    n_skip: Optional[int] = None
    n_total: int = MOD_TOTAL
    n_mels: int = N_MELS
    tuning_ref: float = 440.0
    # grid label when this config stands in for another variant ("CHROMA_CQT")
    alias: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))

    def validate(self) -> "FeatureConfig":
        if self.fft_size < 2 or self.hop_size < 1:
            raise InvalidConfig(f"bad frame sizes fft={self.fft_size} hop={self.hop_size}")
        if self.hop_size > self.fft_size:
            raise InvalidConfig(f"hop {self.hop_size} exceeds fft {self.fft_size}")
        if self.family is Family.MFCC:
            if self.n_mfcc is None or not 1 <= self.n_mfcc <= self.n_mels:
                raise InvalidConfig(f"n_mfcc must be in [1, {self.n_mels}], got {self.n_mfcc}")
        elif self.family is Family.MFCC_MOD:
            if self.n_total != MOD_TOTAL:
                raise InvalidConfig(f"MFCC_MOD computes {MOD_TOTAL} cepstra, got n_total={self.n_total}")
            if self.n_mels < self.n_total:
                raise InvalidConfig(f"n_mels {self.n_mels} < n_total {self.n_total}")
            if self.n_skip is None or not 0 <= self.n_skip < self.n_total:
                raise InvalidConfig(f"n_skip must be in [0, {self.n_total}), got {self.n_skip}")
            if self.n_skip not in STUDIED_SKIPS:
                warnings.warn(f"n_skip={self.n_skip} is outside the studied range {STUDIED_SKIPS}", stacklevel=3)
        elif self.tuning_ref <= 0:
            raise InvalidConfig("tuning_ref must be positive")
        return self

    @property
    def dim(self) -> int:
        if self.family is Family.MFCC:
            return self.n_mfcc
        if self.family is Family.MFCC_MOD:
            return self.n_total - self.n_skip
        return 12

    @property
    def key(self) -> str:
        """Readable unique identifier, used for file names and sorting."""
        name = (self.alias or self.family.value).lower()
        parts = [name, f"fft{self.fft_size}", f"hop{self.hop_size}"]
        if self.family is Family.MFCC:
            parts.append(f"n{self.n_mfcc}")
        elif self.family is Family.MFCC_MOD:
            parts.append(f"skip{self.n_skip}")
        if self.n_mels != N_MELS and self.family in (Family.MFCC, Family.MFCC_MOD):
            parts.append(f"mels{self.n_mels}")
        if self.tuning_ref != 440.0 and self.family not in (Family.MFCC, Family.MFCC_MOD):
            parts.append(f"ref{self.tuning_ref:g}")
        return "/".join(parts)

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.key.encode()).hexdigest()[:16]


@dataclass
class FeatureSequence:
    frames: np.ndarray
    times: np.ndarray
    config: FeatureConfig
    source: str = ""
    sample_rate: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        self.times = np.asarray(self.times, dtype=np.float64)
        if self.frames.ndim != 2 or len(self.frames) != len(self.times):
            raise ValueError(f"frames {self.frames.shape} do not match {len(self.times)} time-stamps")
        if not np.all(np.isfinite(self.frames)):
            raise ValueError("feature frames contain NaN/Inf")
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("frame times must be strictly increasing")

    def __len__(self):
        return len(self.frames)

    @property
    def hop_seconds(self) -> float:
        return self.config.hop_size / self.sample_rate


def periodic_hann(n: int) -> np.ndarray:
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def stft_magnitude(audio: AudioBuffer, fft_size: int, hop_size: int):
    """Hann-windowed magnitude spectrogram, shape ``(L, fft_size // 2 + 1)``."""
    if hop_size > fft_size or hop_size < 1:
        raise InvalidConfig(f"hop {hop_size} must be in [1, fft {fft_size}]")
    if len(audio.samples) < 1:
        raise InvalidConfig("empty audio")
    grid = FrameGrid.for_length(len(audio.samples), fft_size, hop_size, audio.sample_rate)
    blocks = frame_signal(audio.samples, grid) * periodic_hann(fft_size)
    return np.abs(np.fft.rfft(blocks, axis=1)), grid


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int, fft_size: int, sample_rate: int, fmin=0.0, fmax=None) -> np.ndarray:
    """Triangular mel filters, ``(n_mels, fft_size // 2 + 1)``, each summing to 1.

    A bin's weight is the triangle's area over the bin's frequency span
    ``[f_k - df/2, f_k + df/2]`` rather than the triangle sampled at ``f_k``,
    so narrow low-frequency filters never end up empty.
    """
    fmax = sample_rate / 2.0 if fmax is None else fmax
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    lo, ctr, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    df = sample_rate / fft_size
    bins = np.arange(fft_size // 2 + 1) * df

    def area(f):
        f = np.broadcast_to(f, (n_mels, len(bins)))
        rise = np.clip(f - lo, 0.0, ctr - lo) ** 2 / (2.0 * (ctr - lo))
        fall = (hi - ctr) / 2.0 - np.clip(hi - f, 0.0, hi - ctr) ** 2 / (2.0 * (hi - ctr))
        return rise + np.where(f > ctr, fall, 0.0)

    w = area(bins + df / 2) - area(bins - df / 2)
    return w / w.sum(axis=1, keepdims=True)


def _cepstra(audio: AudioBuffer, fft_size, hop_size, n_mels, n_keep):
    mag, grid = stft_magnitude(audio, fft_size, hop_size)
    fb = mel_filterbank(n_mels, fft_size, audio.sample_rate)
    energies = (mag ** 2) @ fb.T
    logmel = np.log(np.maximum(energies, LOG_FLOOR))
    return dct(logmel, type=2, norm="ortho", axis=1)[:, :n_keep], grid


def _sequence(frames, grid, config, audio, **meta):
    return FeatureSequence(frames, grid.times(), config, audio.source_path, audio.sample_rate, dict(meta))


def _expect(config: FeatureConfig, family: Family):
    if config.family is not family:
        raise InvalidConfig(f"expected a {family.value} config, got {config.family.value}")
    config.validate()


def mfcc(audio: AudioBuffer, config: FeatureConfig) -> FeatureSequence:
    _expect(config, Family.MFCC)
    c, grid = _cepstra(audio, config.fft_size, config.hop_size, config.n_mels, config.n_mfcc)
    return _sequence(c, grid, config, audio)


def mfcc_mod(audio: AudioBuffer, config: FeatureConfig) -> FeatureSequence:
    """120 cepstra with the first ``n_skip`` (the spectral envelope) dropped."""
    _expect(config, Family.MFCC_MOD)
    c, grid = _cepstra(audio, config.fft_size, config.hop_size, config.n_mels, config.n_total)
    return _sequence(c[:, config.n_skip:], grid, config, audio)


def chroma_map(fft_size: int, sample_rate: int, tuning_ref: float = 440.0) -> np.ndarray:
    """Binary ``(12, n_bins)`` matrix folding FFT bins onto pitch classes (C=0)."""
    freqs = np.arange(fft_size // 2 + 1) * sample_rate / fft_size
    m = np.zeros((12, len(freqs)))
    ok = freqs >= CHROMA_FMIN
    semis = np.round(12.0 * np.log2(freqs[ok] / tuning_ref)).astype(int)
    m[(semis + 9) % 12, np.flatnonzero(ok)] = 1.0
    return m


def _max_normalize(frames):
    peak = frames.max(axis=1, keepdims=True)
    return np.divide(frames, peak, out=np.zeros_like(frames), where=peak > 0)


def _chroma_frames(audio, config):
    mag, grid = stft_magnitude(audio, config.fft_size, config.hop_size)
    energy = (mag ** 2) @ chroma_map(config.fft_size, audio.sample_rate, config.tuning_ref).T
    return _max_normalize(energy), grid


def chroma_stft(audio: AudioBuffer, config: FeatureConfig) -> FeatureSequence:
    _expect(config, Family.CHROMA_STFT)
    frames, grid = _chroma_frames(audio, config)
    meta = {"alias": config.alias} if config.alias else {}
    return _sequence(frames, grid, config, audio, **meta)


def cens_kernel(length: int = CENS_SMOOTH) -> np.ndarray:
    w = np.hanning(length + 2)[1:-1]
    return w / w.sum()


def cens_from_chroma(chroma: np.ndarray, smooth: int = CENS_SMOOTH) -> np.ndarray:
    """Quantise, smooth over time and l2-normalise a ``(L, 12)`` chromagram."""
    chroma = np.asarray(chroma, dtype=np.float64)
    l1 = chroma.sum(axis=1, keepdims=True)
    p = np.divide(chroma, l1, out=np.zeros_like(chroma), where=l1 > 0)
    q = np.zeros_like(p)
    for t in CENS_THRESHOLDS:
        q += CENS_WEIGHT * (p > t)
    kernel = cens_kernel(smooth)
    smoothed = np.stack([np.convolve(q[:, k], kernel, mode="same") for k in range(q.shape[1])], axis=1)
    # np.convolve(mode="same") is shorter than the kernel for very short inputs
    if len(smoothed) != len(q):
        full = np.stack([np.convolve(q[:, k], kernel, mode="full") for k in range(q.shape[1])], axis=1)
        start = (len(kernel) - 1) // 2
        smoothed = full[start:start + len(q)]
    smoothed[smoothed < 1e-15] = 0.0
    norm = np.linalg.norm(smoothed, axis=1, keepdims=True)
    return np.divide(smoothed, norm, out=np.zeros_like(smoothed), where=norm > 0)


def chroma_cens(audio: AudioBuffer, config: FeatureConfig) -> FeatureSequence:
    _expect(config, Family.CHROMA_CENS)
    frames, grid = _chroma_frames(audio, config)
    return _sequence(cens_from_chroma(frames), grid, config, audio)


_EXTRACTORS = {
    Family.MFCC: mfcc,
    Family.MFCC_MOD: mfcc_mod,
    Family.CHROMA_STFT: chroma_stft,
    Family.CHROMA_CENS: chroma_cens,
}


def extract(audio: AudioBuffer, config: FeatureConfig) -> FeatureSequence:
    return _EXTRACTORS[config.family](audio, config)


# -- feature cache -----------------------------------------------------------
#
# header (little-endian): magic "PAFC", u16 version, u16 reserved, u32 L,
# u32 D, u32 sample_rate, 16 ASCII bytes of config digest; then L*D float32.

CACHE_MAGIC = b"PAFC"
CACHE_VERSION = 1
_HEADER = struct.Struct("<4sHHIII16s")


def write_feature_cache(path, seq: FeatureSequence) -> None:
    frames = np.ascontiguousarray(seq.frames, dtype="<f4")
    header = _HEADER.pack(CACHE_MAGIC, CACHE_VERSION, 0, frames.shape[0], frames.shape[1],
                          seq.sample_rate, seq.config.digest.encode("ascii"))
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(header + frames.tobytes())
    tmp.replace(path)


def read_feature_cache(path, config: FeatureConfig, source: str = "") -> FeatureSequence:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated feature cache header")
    magic, version, _, n, d, sr, digest = _HEADER.unpack_from(raw)
    if magic != CACHE_MAGIC or version != CACHE_VERSION:
        raise ValueError(f"{path}: not a version-{CACHE_VERSION} feature cache")
    if digest.decode("ascii") != config.digest:
        raise ValueError(f"{path}: cache was written for a different config")
    body = raw[_HEADER.size:]
    if len(body) != n * d * 4:
        raise ValueError(f"{path}: expected {n}x{d} floats, found {len(body)} bytes")
    frames = np.frombuffer(body, dtype="<f4").reshape(n, d).astype(np.float64)
    grid = FrameGrid(config.fft_size, config.hop_size, n, sr)
    return FeatureSequence(frames, grid.times(), config, source, sr)
