"""Running the alignment grid and writing reports.

Grid cells are independent; they may run in worker processes, but every
report is assembled by one writer after sorting, so outputs never depend on
completion order.
"""

from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..annot_stats import analyse_recording, write_block_curve, write_event_sd, write_pair_summary, write_qq
from ..annotation import ground_truth_from, parse_annotation_file, transfer_annotations, write_annotation_file
from ..audio_io import load_wav
from ..dtw import dtw_exact, fastdtw, write_path_csv
from ..errors import InvalidConfig, LengthMismatch, PerfAlignError
from ..evaluation import (SUMMARY_COLUMNS, X_TO_Y, Y_TO_X, ecdf, ecdf_at, error_sequence,
                          one_way_anova, rank_alignments, summarize, write_anova, write_ecdf, write_ranking,
                          write_rows)
from ..features import FeatureSequence, extract, read_feature_cache, write_feature_cache
from .grid import Cell, expand_grid

log = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_ALL_FAILED = 0, 1, 2, 3


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()[:16]


class FeatureStore:
    """Loads audio once per recording and memoises features, optionally on disk.

    Features are always rounded to float32, the cache's storage type, so a
    cached run and a fresh run align exactly the same numbers.
    """

    def __init__(self, cache_dir=None, use_cache: bool = True):
        self.cache_dir = Path(cache_dir) if cache_dir and use_cache else None
        self._audio = {}
        self._digests = {}

    def audio(self, path):
        path = Path(path)
        if path not in self._audio:
            self._audio[path] = load_wav(path)
        return self._audio[path]

    def features(self, path, config) -> FeatureSequence:
        path = Path(path)
        cache_file = None
        if self.cache_dir is not None:
            if path not in self._digests:
                self._digests[path] = file_digest(path)
            cache_file = self.cache_dir / f"{self._digests[path]}_{config.digest}.feat"
            if cache_file.exists():
                try:
                    return read_feature_cache(cache_file, config, str(path))
                except ValueError:
                    log.warning("ignoring unreadable cache file %s", cache_file)
        seq = extract(self.audio(path), config)
        seq.frames = seq.frames.astype(np.float32).astype(np.float64)
        if cache_file is not None:
            self.cache_dir.mkdir(parents=True, exist_ok=True)
            write_feature_cache(cache_file, seq)
        return seq


def align(fx: FeatureSequence, fy: FeatureSequence, metric, method: str = "fast", radius: int = 10):
    if method == "exact":
        return dtw_exact(fx, fy, metric)
    return fastdtw(fx, fy, metric, radius)


@dataclass
class CellResult:
    pair: tuple
    cell_key: str
    status: str
    sequences: list = field(default_factory=list)
    error: str = ""


def _load_truths(config):
    truths = {}
    for rec in config.recordings:
        if rec.annotations:
            anns = [parse_annotation_file(p, recording=rec.id) for p in rec.annotations]
            truths[rec.id] = (ground_truth_from(anns), anns)
    for a, b in config.pairs:
        for rid in (a, b):
            if rid not in truths:
                raise InvalidConfig(f"recording {rid!r} is evaluated but has no annotations")
        if len(truths[a][0]) != len(truths[b][0]):
            raise LengthMismatch(f"pair ({a}, {b}): {len(truths[a][0])} vs {len(truths[b][0])} annotated events")
    return truths


def _run_task(args):
    config, cell, pair, gts, store = args
    a, b = pair
    try:
        fx = store.features(config.recording(a).audio, cell.feature)
        fy = store.features(config.recording(b).audio, cell.feature)
        path = align(fx, fy, cell.metric, config.dtw.method, config.dtw.radius)
        seqs = [error_sequence(gts[0], gts[1], path, fx.times, fy.times, d, pair, cell.key) for d in (X_TO_Y, Y_TO_X)]
        if config.save_paths:
            pdir = config.output_dir / "paths"
            pdir.mkdir(parents=True, exist_ok=True)
            fname = f"{a}__{b}__{cell.key.replace('/', '_')}.csv"
            write_path_csv(pdir / fname, path, a, b, cell.key)
        return CellResult(pair, cell.key, "OK", seqs)
    except (PerfAlignError, ValueError, RuntimeError, MemoryError) as exc:
        return CellResult(pair, cell.key, "FAILED", error=f"{type(exc).__name__}: {exc}")


_worker_store = None


def _pool_task(args):
    global _worker_store
    config, cell, pair, gts = args
    if _worker_store is None:
        _worker_store = FeatureStore(config.cache_dir, config.use_cache)
    return _run_task((config, cell, pair, gts, _worker_store))


def _cell_row(pair_label, cell: Cell, direction, status, errors=None):
    f = cell.feature
    row = {"pair": pair_label, "cell": cell.key, "family": cell.family_label, "fft_size": f.fft_size,
           "hop_size": f.hop_size, "n_mfcc": f.n_mfcc, "n_skip": f.n_skip, "metric": cell.metric.value,
           "direction": direction, "status": status}
    if errors is not None:
        mean, mx, med = summarize(errors)
        row.update(mean_abs_ms=mean, max_abs_ms=mx, median_abs_ms=med, n_events=len(errors))
    return row


@dataclass
class ExperimentResult:
    exit_code: int
    n_cells: int
    n_dropped: int
    n_failed: int
    rankings: dict = field(default_factory=dict)
    output_dir: Path = Path(".")


def run_experiment(config) -> ExperimentResult:
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    cells, n_dropped = expand_grid(config.grid, config.metrics)
    for rec in config.recordings:
        if not Path(rec.audio).is_file():
            raise FileNotFoundError(f"audio for {rec.id!r} not found: {rec.audio}")
    truths = _load_truths(config)
    if config.cache_dir is None and config.use_cache:
        config = replace(config, cache_dir=out / "cache")

    tasks = [(config, cell, pair, (truths[pair[0]][0], truths[pair[1]][0]))
             for pair in config.pairs for cell in cells]
    if config.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_pool_task, tasks, chunksize=max(1, len(tasks) // (4 * config.workers))))
    else:
        store = FeatureStore(config.cache_dir, config.use_cache)
        results = [_run_task(t + (store,)) for t in tasks]

    by_key = {c.key: c for c in cells}
    results.sort(key=lambda r: (r.pair, by_key[r.cell_key].sort_key()))
    failed = [r for r in results if r.status != "OK"]

    rows, rankings, anova, curves, markers = [], {}, {}, {}, []
    for pair in config.pairs:
        label = f"{pair[0]}__{pair[1]}"
        ok_seqs = []
        for r in (r for r in results if r.pair == pair):
            cell = by_key[r.cell_key]
            if r.status != "OK":
                rows.append(_cell_row(label, cell, "-", "FAILED"))
                continue
            for s in r.sequences:
                rows.append(_cell_row(label, cell, s.direction, "OK", s.errors))
            rows.append(_cell_row(label, cell, "POOLED", "OK", np.concatenate([s.errors for s in r.sequences])))
            ok_seqs.extend(r.sequences)
        if not ok_seqs:
            continue
        report = rank_alignments(ok_seqs, config.threshold_ms, config.top_k)
        rankings[label] = report
        if report.no_survivors:
            anova[label] = {"note": "no configuration passed the robustness threshold"}
            continue
        groups = [report.pooled_errors[e.config_digest] for e in report.entries]
        if len(groups) >= 2:
            f, p = one_way_anova(groups)
            anova[label] = {"groups": len(groups), "n": sum(map(len, groups)), "F": f, "p": p}
        else:
            anova[label] = {"groups": 1, "n": len(groups[0]), "note": "ANOVA needs at least two surviving configs"}
        pooled = np.concatenate(groups)
        curves[label] = ecdf(pooled)
        for rid in pair:
            anns = truths[rid][1]
            if len(anns) >= 2:
                try:
                    _, med = analyse_recording(anns)
                except PerfAlignError:
                    continue
                markers.append({"pair": label, "recording": rid, "median_sd_ms": med,
                                "fraction_below": ecdf_at(pooled, med)})

    write_rows(out / "summary.csv", SUMMARY_COLUMNS, rows)
    write_ranking(out / "ranking.csv", rankings)
    write_anova(out / "anova.csv", anova)
    write_ecdf(out / "ecdf.csv", curves)
    write_rows(out / "ecdf_markers.csv", ["pair", "recording", "median_sd_ms", "fraction_below"], markers)
    write_rows(out / "grid.csv", ["index", "cell", "family", "fft_size", "hop_size", "n_mfcc", "n_skip", "metric"],
               [dict(_cell_row("", c, "", ""), index=i) for i, c in enumerate(cells)])
    write_annotation_reports(out, config, truths)
    with open(out / "errors.jsonl", "w") as fh:
        for r in failed:
            fh.write(json.dumps({"pair": list(r.pair), "cell": r.cell_key, "error": r.error}, sort_keys=True) + "\n")
    manifest = {"cells": len(cells), "dropped_invalid_hop": n_dropped, "pairs": len(config.pairs),
                "alignments": len(results), "failed": len(failed),
                "dtw": {"method": config.dtw.method, "radius": config.dtw.radius},
                "threshold_ms": config.threshold_ms, "top_k": config.top_k,
                "aliases": sorted({c.key for c in cells if c.feature.alias})}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")

    code = EXIT_ALL_FAILED if results and len(failed) == len(results) else EXIT_OK
    return ExperimentResult(code, len(cells), n_dropped, len(failed), rankings, out)


def write_annotation_reports(out: Path, config, truths) -> None:
    for rec in config.recordings:
        if rec.id not in truths or len(truths[rec.id][1]) < 2:
            continue
        anns = truths[rec.id][1]
        try:
            reports, med = analyse_recording(anns)
        except PerfAlignError as exc:
            log.warning("annotation statistics skipped for %s: %s", rec.id, exc)
            continue
        d = out / "annotations" / rec.id
        d.mkdir(parents=True, exist_ok=True)
        write_pair_summary(d / "pairs.csv", reports, med)
        write_block_curve(d / "block_sd.csv", reports)
        write_qq(d / "qq.csv", reports)
        write_event_sd(d / "event_sd.csv", anns)


def annotate_transfer(reference_audio, reference_annotations, target_audio, cell: Cell, out_path,
                      method: str = "fast", radius: int = 10, store: FeatureStore | None = None):
    """Transfer a reference's markers onto a target recording and write them.

    Returns the transferred times.  Nothing is written if any step fails.
    """
    store = store or FeatureStore(use_cache=False)
    for p in [reference_audio, target_audio, *reference_annotations]:
        if not Path(p).is_file():
            raise FileNotFoundError(f"no such file: {p}")
    gt = ground_truth_from([parse_annotation_file(p) for p in reference_annotations])
    fx = store.features(reference_audio, cell.feature)
    fy = store.features(target_audio, cell.feature)
    path = align(fx, fy, cell.metric, method, radius)
    times = transfer_annotations(gt, path, fx.times, fy.times)
    write_annotation_file(out_path, times)
    return times


def single_alignment(x_audio, y_audio, cell: Cell, out_dir, x_annotations=(), y_annotations=(),
                     method: str = "fast", radius: int = 10, x_id="X", y_id="Y"):
    """Align one pair with one cell; write the path and, with annotations, the errors."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    store = FeatureStore(use_cache=False)
    fx = store.features(x_audio, cell.feature)
    fy = store.features(y_audio, cell.feature)
    path = align(fx, fy, cell.metric, method, radius)
    write_path_csv(out_dir / "path.csv", path, x_id, y_id, cell.key)
    seqs = []
    if x_annotations and y_annotations:
        gx = ground_truth_from([parse_annotation_file(p) for p in x_annotations])
        gy = ground_truth_from([parse_annotation_file(p) for p in y_annotations])
        label = f"{x_id}__{y_id}"
        seqs = [error_sequence(gx, gy, path, fx.times, fy.times, d, (x_id, y_id), cell.key) for d in (X_TO_Y, Y_TO_X)]
        rows = [_cell_row(label, cell, s.direction, "OK", s.errors) for s in seqs]
        write_rows(out_dir / "summary.csv", SUMMARY_COLUMNS, rows)
        for s in seqs:
            write_rows(out_dir / f"errors_{s.direction.lower()}.csv", ["event", "error_ms"],
                       [{"event": k, "error_ms": float(v)} for k, v in enumerate(s.errors)])
    return path, seqs
