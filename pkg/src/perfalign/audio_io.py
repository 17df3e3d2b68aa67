"""WAV decoding and the frame time-stamp model.

Only uncompressed RIFF/WAVE is handled: 16-bit PCM, 24-bit PCM and 32-bit
IEEE float, with any number of channels.  Channels are averaged to mono and
the sample rate is never changed.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import IndexOutOfRange, InvalidConfig, MalformedHeader, TruncatedData, UnsupportedEncoding

WAVE_FORMAT_PCM = 0x0001
WAVE_FORMAT_IEEE_FLOAT = 0x0003
WAVE_FORMAT_EXTENSIBLE = 0xFFFE


@dataclass
class AudioBuffer:
    samples: np.ndarray
    sample_rate: int
    source_path: str = ""

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ValueError("AudioBuffer holds mono samples only")
        if self.sample_rate <= 0:
            raise ValueError(f"sample rate must be positive, got {self.sample_rate}")

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    def __len__(self):
        return len(self.samples)


@dataclass(frozen=True)
class FrameGrid:
    """Block layout of an analysed signal.

    Frame ``i`` covers samples ``[i*hop_size, i*hop_size + fft_size)`` and is
    stamped with the time of the block centre.
    """

    fft_size: int
    hop_size: int
    frame_count: int
    sample_rate: int

    def __post_init__(self):
        if not 0 < self.hop_size <= self.fft_size:
            raise InvalidConfig(f"need 0 < hop ({self.hop_size}) <= fft ({self.fft_size})")
        if self.frame_count < 1:
            raise InvalidConfig("frame_count must be >= 1")
        if self.sample_rate <= 0:
            raise InvalidConfig("sample_rate must be positive")

    @classmethod
    def for_length(cls, n_samples: int, fft_size: int, hop_size: int, sample_rate: int) -> "FrameGrid":
        return cls(fft_size, hop_size, frame_count(n_samples, fft_size, hop_size), sample_rate)

    @property
    def hop_seconds(self) -> float:
        return self.hop_size / self.sample_rate

    def times(self) -> np.ndarray:
        idx = np.arange(self.frame_count, dtype=np.float64)
        return (idx * self.hop_size + self.fft_size / 2) / self.sample_rate


def frame_count(n_samples: int, fft_size: int, hop_size: int) -> int:
    # signals shorter than one block are zero-padded to a single frame
    if n_samples <= fft_size:
        return 1
    return (n_samples - fft_size) // hop_size + 1


def frame_time(frame_index: int, grid: FrameGrid) -> float:
    if not 0 <= frame_index < grid.frame_count:
        raise IndexOutOfRange(f"frame {frame_index} outside [0, {grid.frame_count})")
    return (frame_index * grid.hop_size + grid.fft_size / 2) / grid.sample_rate


def frame_signal(samples: np.ndarray, grid: FrameGrid) -> np.ndarray:
    """Return a ``(frame_count, fft_size)`` array of blocks (a copy)."""
    needed = (grid.frame_count - 1) * grid.hop_size + grid.fft_size
    x = np.asarray(samples, dtype=np.float64)
    if len(x) < needed:
        x = np.concatenate([x, np.zeros(needed - len(x))])
    view = np.lib.stride_tricks.sliding_window_view(x[:needed], grid.fft_size)
    return view[:: grid.hop_size].copy()


def _iter_chunks(data: bytes):
    pos = 12
    while pos + 8 <= len(data):
        cid, size = struct.unpack_from("<4sI", data, pos)
        yield cid, pos + 8, size
        pos += 8 + size + (size & 1)


def load_wav(path) -> AudioBuffer:
    path = Path(path)
    data = path.read_bytes()
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise MalformedHeader(f"{path}: not a RIFF/WAVE file")

    fmt = None
    payload = None
    for cid, start, size in _iter_chunks(data):
        if cid == b"fmt ":
            if size < 16 or start + size > len(data):
                raise MalformedHeader(f"{path}: short fmt chunk")
            fmt = struct.unpack_from("<HHIIHH", data, start)
            if fmt[0] == WAVE_FORMAT_EXTENSIBLE:
                if size < 40:
                    raise MalformedHeader(f"{path}: short extensible fmt chunk")
                # first two bytes of the sub-format GUID carry the real tag
                (sub,) = struct.unpack_from("<H", data, start + 24)
                fmt = (sub,) + fmt[1:]
        elif cid == b"data":
            if fmt is None:
                raise MalformedHeader(f"{path}: data chunk before fmt chunk")
            if start + size > len(data):
                raise TruncatedData(f"{path}: data chunk declares {size} bytes, {len(data) - start} present")
            payload = data[start:start + size]
            break
    if fmt is None:
        raise MalformedHeader(f"{path}: missing fmt chunk")
    if payload is None:
        raise MalformedHeader(f"{path}: missing data chunk")

    tag, channels, sample_rate, _, block_align, bits = fmt
    if channels < 1 or sample_rate < 1:
        raise MalformedHeader(f"{path}: {channels} channels at {sample_rate} Hz")
    if block_align != channels * bits // 8:
        raise MalformedHeader(f"{path}: block_align {block_align} inconsistent with {channels}x{bits} bits")

    n_frames = len(payload) // block_align
    payload = payload[: n_frames * block_align]
    if tag == WAVE_FORMAT_PCM and bits == 16:
        x = np.frombuffer(payload, dtype="<i2").astype(np.float64) / 32768.0
    elif tag == WAVE_FORMAT_PCM and bits == 24:
        raw = np.frombuffer(payload, dtype=np.uint8).reshape(-1, 3).astype(np.int32)
        ints = raw[:, 0] | (raw[:, 1] << 8) | (raw[:, 2] << 16)
        ints = np.where(ints >= 1 << 23, ints - (1 << 24), ints)
        x = ints.astype(np.float64) / float(1 << 23)
    elif tag == WAVE_FORMAT_IEEE_FLOAT and bits == 32:
        x = np.frombuffer(payload, dtype="<f4").astype(np.float64)
        x = np.clip(np.nan_to_num(x), -1.0, 1.0)
    else:
        raise UnsupportedEncoding(f"{path}: format tag {tag:#06x} with {bits} bits is not supported")

    if n_frames < 1:
        raise TruncatedData(f"{path}: no sample frames")
    mono = x.reshape(n_frames, channels).mean(axis=1)
    return AudioBuffer(mono, sample_rate, str(path))


def write_wav(path, samples, sample_rate: int, bits: int = 16) -> None:
    """Write a WAV file.  ``samples`` is ``(n,)`` or ``(n, channels)``."""
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    channels = x.shape[1]
    if bits == 16:
        tag = WAVE_FORMAT_PCM
        body = np.clip(np.round(x * 32768.0), -32768, 32767).astype("<i2").tobytes()
    elif bits == 24:
        tag = WAVE_FORMAT_PCM
        ints = np.clip(np.round(x * (1 << 23)), -(1 << 23), (1 << 23) - 1).astype(np.int64).ravel()
        ints = np.where(ints < 0, ints + (1 << 24), ints).astype(np.uint32)
        body = np.stack([ints & 0xFF, (ints >> 8) & 0xFF, (ints >> 16) & 0xFF], axis=1).astype(np.uint8).tobytes()
    elif bits == 32:
        tag = WAVE_FORMAT_IEEE_FLOAT
        body = x.astype("<f4").tobytes()
    else:
        raise UnsupportedEncoding(f"cannot write {bits}-bit audio")
    block_align = channels * bits // 8
    fmt = struct.pack("<HHIIHH", tag, channels, sample_rate, sample_rate * block_align, block_align, bits)
    pad = b"\x00" if len(body) & 1 else b""
    riff = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt + b"data" + struct.pack("<I", len(body)) + body + pad
    Path(path).write_bytes(b"RIFF" + struct.pack("<I", len(riff)) + riff)
