"""Expansion of grid blocks into (feature config, metric) cells."""

from __future__ import annotations

from dataclasses import dataclass

from ..dtw import DistanceMetric
from ..errors import EmptyGrid
from ..features import Family, FeatureConfig

FAMILY_ORDER = {"MFCC": 0, "MFCC_MOD": 1, "CHROMA_STFT": 2, "CHROMA_CENS": 3, "CHROMA_CQT": 4}
METRIC_ORDER = {DistanceMetric.L1: 0, DistanceMetric.L2: 1, DistanceMetric.COSINE: 2}
DEFAULT_CHROMA_HOPS = {"CHROMA_STFT": [512, 1024], "CHROMA_CENS": [512, 1024, 2048], "CHROMA_CQT": [512, 1024, 2048]}
# stand-in for a constant-Q chroma: STFT chroma over a window this much longer
CQT_WINDOW_FACTOR = 2


@dataclass(frozen=True)
class Cell:
    feature: FeatureConfig
    metric: DistanceMetric

    @property
    def key(self) -> str:
        return f"{self.feature.key}/{self.metric.value.lower()}"

    @property
    def family_label(self) -> str:
        return self.feature.alias or self.feature.family.value

    def sort_key(self):
        f = self.feature
        param = f.n_mfcc if f.family is Family.MFCC else f.n_skip if f.family is Family.MFCC_MOD else 0
        return (FAMILY_ORDER[self.family_label], f.fft_size, f.hop_size, param or 0, METRIC_ORDER[self.metric])


def mfcc_hop(fft_size: int) -> int:
    """Half the window, except a 16384 window hops by 4096."""
    return 4096 if fft_size == 16384 else fft_size // 2


def _features(block):
    fam = block.family
    for fft in block.fft_sizes:
        if fam in ("MFCC", "MFCC_MOD"):
            hops = block.hop_sizes or [mfcc_hop(fft)]
        else:
            hops = block.hop_sizes or DEFAULT_CHROMA_HOPS[fam]
        for hop in hops:
            if fam == "MFCC":
                for n in block.n_mfcc:
                    yield fft, FeatureConfig(Family.MFCC, fft, hop, n_mfcc=n)
            elif fam == "MFCC_MOD":
                for k in block.n_skip:
                    yield fft, FeatureConfig(Family.MFCC_MOD, fft, hop, n_skip=k)
            elif fam == "CHROMA_CQT":
                yield fft, FeatureConfig(Family.CHROMA_STFT, fft * CQT_WINDOW_FACTOR, hop, alias="CHROMA_CQT")
            else:
                yield fft, FeatureConfig(Family(fam), fft, hop)


def expand_grid(blocks, metrics):
    """Return ``(cells, n_dropped)``; cells with hop > window are dropped."""
    cells, dropped, seen = [], 0, set()
    for block in blocks:
        for nominal_fft, feat in _features(block):
            for metric in metrics:
                cell = Cell(feat, DistanceMetric(metric))
                if feat.hop_size > nominal_fft:
                    dropped += 1
                    continue
                if cell.key in seen:
                    continue
                seen.add(cell.key)
                cells.append(cell)
    if not cells:
        raise EmptyGrid("the parameter grid expands to no valid cells")
    cells.sort(key=Cell.sort_key)
    return cells, dropped


def build_grid(config) -> list:
    return expand_grid(config.grid, config.metrics)[0]
