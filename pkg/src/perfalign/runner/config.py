"""Experiment configuration.

Configs are YAML files; see ``configs/example.yaml`` and the README for the
full key list.  Relative paths are resolved against the config file.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import yaml

from ..dtw import DEFAULT_RADIUS, DistanceMetric
from ..errors import InvalidConfig
from ..evaluation import ROBUSTNESS_MS, TOP_K

FAMILIES = ("MFCC", "MFCC_MOD", "CHROMA_STFT", "CHROMA_CENS", "CHROMA_CQT")


@dataclass
class Recording:
    id: str
    audio: Path
    annotations: list = field(default_factory=list)


@dataclass
class GridBlock:
    family: str
    fft_sizes: list
    hop_sizes: Optional[list] = None  # None: the family's default hop rule
    n_mfcc: list = field(default_factory=list)
    n_skip: list = field(default_factory=list)


@dataclass
class DTWSettings:
    method: str = "fast"  # "fast" or "exact"
    radius: int = DEFAULT_RADIUS


@dataclass
class ExperimentConfig:
    recordings: list
    pairs: list
    grid: list
    metrics: list = field(default_factory=lambda: list(DistanceMetric))
    dtw: DTWSettings = field(default_factory=DTWSettings)
    threshold_ms: float = ROBUSTNESS_MS
    top_k: int = TOP_K
    output_dir: Path = Path("results")
    cache_dir: Optional[Path] = None
    use_cache: bool = True
    save_paths: bool = False
    workers: int = 1
    seed: int = 0

    def recording(self, rid: str) -> Recording:
        for r in self.recordings:
            if r.id == rid:
                return r
        raise InvalidConfig(f"unknown recording {rid!r}")

    def validate(self) -> "ExperimentConfig":
        ids = [r.id for r in self.recordings]
        if len(set(ids)) != len(ids):
            raise InvalidConfig("recording ids must be unique")
        for a, b in self.pairs:
            if a not in ids or b not in ids:
                raise InvalidConfig(f"pair ({a}, {b}) references an undeclared recording")
        if not self.grid:
            raise InvalidConfig("grid is empty")
        for blk in self.grid:
            if blk.family not in FAMILIES:
                raise InvalidConfig(f"unknown feature family {blk.family!r}; choose from {FAMILIES}")
            if not blk.fft_sizes:
                raise InvalidConfig(f"{blk.family} block lists no fft_sizes")
            if blk.family == "MFCC" and not blk.n_mfcc:
                raise InvalidConfig("MFCC block needs n_mfcc")
            if blk.family == "MFCC_MOD" and not blk.n_skip:
                raise InvalidConfig("MFCC_MOD block needs n_skip")
        if not self.metrics:
            raise InvalidConfig("no distance metrics selected")
        if self.dtw.method not in ("fast", "exact"):
            raise InvalidConfig(f"dtw.method must be 'fast' or 'exact', got {self.dtw.method!r}")
        if self.dtw.radius < 0 or self.top_k < 1 or self.threshold_ms <= 0 or self.workers < 1:
            raise InvalidConfig("radius, top_k, threshold_ms and workers must be positive")
        return self

    def with_overrides(self, **kw) -> "ExperimentConfig":
        cfg = self
        if kw.get("out") is not None:
            cfg = replace(cfg, output_dir=Path(kw["out"]))
        if kw.get("workers") is not None:
            cfg = replace(cfg, workers=int(kw["workers"]))
        if kw.get("seed") is not None:
            cfg = replace(cfg, seed=int(kw["seed"]))
        if kw.get("radius") is not None:
            cfg = replace(cfg, dtw=DTWSettings("fast", int(kw["radius"])))
        if kw.get("exact"):
            cfg = replace(cfg, dtw=DTWSettings("exact", cfg.dtw.radius))
        if kw.get("no_cache"):
            cfg = replace(cfg, use_cache=False)
        return cfg.validate()


def full_grid() -> list:
    """The full parameter sweep over all five feature variants."""
    chroma_ffts = [1024, 2048, 4096, 8192]
    return [
        GridBlock("MFCC", [1024, 2048, 4096, 8192, 16384], n_mfcc=[13, 20, 30, 40, 50, 80, 100]),
        GridBlock("MFCC_MOD", [1024, 2048, 4096, 8192, 16384], n_skip=list(range(10, 90, 10))),
        GridBlock("CHROMA_STFT", chroma_ffts, hop_sizes=[512, 1024]),
        GridBlock("CHROMA_CENS", chroma_ffts, hop_sizes=[512, 1024, 2048]),
        GridBlock("CHROMA_CQT", chroma_ffts, hop_sizes=[512, 1024, 2048]),
    ]


def _ints(v, name):
    if v is None:
        return []
    if isinstance(v, int):
        return [v]
    if not isinstance(v, list) or not all(isinstance(x, int) for x in v):
        raise InvalidConfig(f"{name} must be an integer or a list of integers")
    return list(v)


def _block(d) -> GridBlock:
    if not isinstance(d, dict) or "family" not in d:
        raise InvalidConfig(f"grid entries need a 'family' key: {d!r}")
    unknown = set(d) - {"family", "fft_sizes", "hop_sizes", "n_mfcc", "n_skip"}
    if unknown:
        raise InvalidConfig(f"unknown grid keys {sorted(unknown)}")
    hops = d.get("hop_sizes")
    return GridBlock(str(d["family"]).upper(), _ints(d.get("fft_sizes"), "fft_sizes"),
                     _ints(hops, "hop_sizes") if hops is not None else None,
                     _ints(d.get("n_mfcc"), "n_mfcc"), _ints(d.get("n_skip"), "n_skip"))


def config_from_dict(d: dict, base: Path = Path(".")) -> ExperimentConfig:
    if not isinstance(d, dict):
        raise InvalidConfig("config must be a mapping")
    known = {"recordings", "pairs", "grid", "metrics", "dtw", "thresholds", "output_dir", "cache_dir",
             "use_cache", "save_paths", "workers", "seed"}
    unknown = set(d) - known
    if unknown:
        raise InvalidConfig(f"unknown config keys {sorted(unknown)}")

    def path(p):
        p = Path(p)
        return p if p.is_absolute() else base / p

    recs = []
    for r in d.get("recordings") or []:
        try:
            anns = r.get("annotations") or []
            recs.append(Recording(str(r["id"]), path(r["audio"]), [path(a) for a in anns]))
        except (KeyError, TypeError, AttributeError):
            raise InvalidConfig(f"recording entries need 'id' and 'audio': {r!r}") from None
    pairs = []
    for p in d.get("pairs") or []:
        if not isinstance(p, (list, tuple)) or len(p) != 2:
            raise InvalidConfig(f"pairs are two-element lists: {p!r}")
        pairs.append((str(p[0]), str(p[1])))
    grid = d.get("grid", "full")
    grid = full_grid() if grid == "full" else [_block(b) for b in (grid or [])]
    try:
        metrics = [DistanceMetric(str(m).upper()) for m in d.get("metrics", [m.value for m in DistanceMetric])]
    except ValueError as exc:
        raise InvalidConfig(str(exc)) from None
    dtw = d.get("dtw") or {}
    th = d.get("thresholds") or {}
    cfg = ExperimentConfig(
        recordings=recs,
        pairs=pairs,
        grid=grid,
        metrics=metrics,
        dtw=DTWSettings(str(dtw.get("method", "fast")), int(dtw.get("radius", DEFAULT_RADIUS))),
        threshold_ms=float(th.get("robustness_ms", ROBUSTNESS_MS)),
        top_k=int(th.get("top_k", TOP_K)),
        output_dir=path(d.get("output_dir", "results")),
        cache_dir=path(d["cache_dir"]) if d.get("cache_dir") else None,
        use_cache=bool(d.get("use_cache", True)),
        save_paths=bool(d.get("save_paths", False)),
        workers=int(d.get("workers", 1)),
        seed=int(d.get("seed", 0)),
    )
    return cfg.validate()


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise InvalidConfig(f"{path}: {exc}") from None
    return config_from_dict(data, path.parent)
