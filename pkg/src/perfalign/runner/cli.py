"""``perfalign`` command line.

Exit codes: 0 success, 1 configuration error, 2 I/O error, 3 every grid
cell failed.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .. import annot_stats
from ..annotation import parse_annotation_file, write_annotation_file
from ..dtw import DEFAULT_RADIUS, DistanceMetric
from ..errors import AnnotationError, AudioError, InvalidConfig, PerfAlignError
from ..evaluation import write_rows
from ..features import Family, FeatureConfig, write_feature_cache
from .config import load_config
from .experiment import (EXIT_CONFIG, EXIT_IO, EXIT_OK, FeatureStore, annotate_transfer,
                         run_experiment, single_alignment)
from .grid import CQT_WINDOW_FACTOR, Cell, build_grid, mfcc_hop

log = logging.getLogger("perfalign")


def _feature_args(p):
    g = p.add_argument_group("feature cell")
    g.add_argument("--family", default="MFCC_MOD", type=str.upper,
                   choices=["MFCC", "MFCC_MOD", "CHROMA_STFT", "CHROMA_CENS", "CHROMA_CQT"])
    g.add_argument("--fft", type=int, default=2048, help="analysis window in samples")
    g.add_argument("--hop", type=int, default=None, help="default: half the window (4096 for 16384)")
    g.add_argument("--n-mfcc", type=int, default=50)
    g.add_argument("--n-skip", type=int, default=20)
    g.add_argument("--metric", default="L1", type=str.upper, choices=[m.value for m in DistanceMetric])


def _dtw_args(p):
    p.add_argument("--radius", type=int, default=None, help=f"FastDTW radius (default {DEFAULT_RADIUS})")
    p.add_argument("--exact", action="store_true", help="use exact DTW instead of FastDTW")


def _common(p):
    p.add_argument("--config", type=Path, help="experiment config (YAML)")
    p.add_argument("--out", type=Path, help="output directory or file")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)


def cell_from_args(args) -> Cell:
    fam = args.family
    hop = args.hop or (mfcc_hop(args.fft) if fam in ("MFCC", "MFCC_MOD") else args.fft // 2)
    if fam == "MFCC":
        feat = FeatureConfig(Family.MFCC, args.fft, hop, n_mfcc=args.n_mfcc)
    elif fam == "MFCC_MOD":
        feat = FeatureConfig(Family.MFCC_MOD, args.fft, hop, n_skip=args.n_skip)
    elif fam == "CHROMA_CQT":
        feat = FeatureConfig(Family.CHROMA_STFT, args.fft * CQT_WINDOW_FACTOR, hop, alias="CHROMA_CQT")
    else:
        feat = FeatureConfig(Family(fam), args.fft, hop)
    feat.validate()
    return Cell(feat, DistanceMetric(args.metric))


def _dtw_choice(args):
    return ("exact" if args.exact else "fast"), (DEFAULT_RADIUS if args.radius is None else args.radius)


def cmd_features(args):
    out = args.out or Path("features")
    out.mkdir(parents=True, exist_ok=True)
    if args.config:
        cfg = load_config(args.config)
        jobs = [(r.id, r.audio, c.feature) for r in cfg.recordings for c in build_grid(cfg)]
    else:
        if not args.audio:
            raise InvalidConfig("give audio files or --config")
        feat = cell_from_args(args).feature
        jobs = [(Path(a).stem, Path(a), feat) for a in args.audio]
    store = FeatureStore(use_cache=False)
    rows, seen = [], set()
    for rid, audio, feat in jobs:
        if (rid, feat.key) in seen:
            continue
        seen.add((rid, feat.key))
        seq = store.features(audio, feat)
        fname = f"{rid}__{feat.key.replace('/', '_')}.feat"
        write_feature_cache(out / fname, seq)
        rows.append({"recording": rid, "cell": feat.key, "digest": feat.digest, "frames": len(seq),
                     "dim": seq.frames.shape[1], "sample_rate": seq.sample_rate, "file": fname})
    write_rows(out / "features.csv", ["recording", "cell", "digest", "frames", "dim", "sample_rate", "file"], rows)
    return EXIT_OK


def cmd_align(args):
    method, radius = _dtw_choice(args)
    path, seqs = single_alignment(args.x, args.y, cell_from_args(args), args.out or Path("align_out"),
                                  args.annotations_x or (), args.annotations_y or (), method, radius,
                                  Path(args.x).stem, Path(args.y).stem)
    print(f"path: {len(path)} pairs, cost {path.cost:.6g}")
    for s in seqs:
        a = np.abs(s.errors)
        print(f"{s.direction}: mean {a.mean():.1f} ms, max {a.max():.1f} ms")
    return EXIT_OK


def cmd_grid(args):
    if not args.config:
        raise InvalidConfig("grid needs --config")
    cfg = load_config(args.config).with_overrides(out=args.out, workers=args.workers, seed=args.seed,
                                                  radius=args.radius, exact=args.exact, no_cache=args.no_cache)
    res = run_experiment(cfg)
    print(f"{res.n_cells} cells ({res.n_dropped} dropped for hop > fft), {res.n_failed} failed alignments; "
          f"reports in {res.output_dir}")
    for label, rep in sorted(res.rankings.items()):
        if rep.entries:
            best = rep.entries[0]
            print(f"{label}: best {best.config_digest} mean {best.mean_abs_ms:.1f} ms max {best.max_abs_ms:.1f} ms")
        else:
            print(f"{label}: no configuration below {rep.threshold_ms:g} ms")
    return res.exit_code


def cmd_transfer(args):
    if args.out is None:
        raise InvalidConfig("transfer needs --out FILE")
    method, radius = _dtw_choice(args)
    times = annotate_transfer(args.reference, args.annotations, args.target, cell_from_args(args), args.out,
                              method, radius)
    print(f"wrote {len(times)} markers to {args.out}")
    return EXIT_OK


def cmd_annstats(args):
    out = args.out or Path("annstats")
    out.mkdir(parents=True, exist_ok=True)
    anns = [parse_annotation_file(p) for p in args.markers]
    if len(anns) < 2:
        raise InvalidConfig("annstats needs at least two marker files")
    reports, med = annot_stats.analyse_recording(anns, args.block_len, args.block_hop)
    annot_stats.write_pair_summary(out / "pairs.csv", reports, med)
    annot_stats.write_block_curve(out / "block_sd.csv", reports)
    annot_stats.write_qq(out / "qq.csv", reports)
    annot_stats.write_event_sd(out / "event_sd.csv", anns)
    for r in reports:
        print(f"{r.pair[0]} vs {r.pair[1]}: offset {r.offset_ms:.1f} ms, sigma {r.sigma_ms:.1f} ms, "
              f"median block SD {r.median_sd_ms:.1f} ms, Shapiro-Wilk W={r.w:.4f} p={r.p:.3g}")
    print(f"recording median SD: {med:.1f} ms")
    return EXIT_OK


def cmd_simulate(args):
    out = args.out or Path("simulated")
    out.mkdir(parents=True, exist_ok=True)
    sigma = np.full(args.events, args.sigma)
    if args.sigma2 is not None:
        sigma[args.events // 2:] = args.sigma2
    seed = 0 if args.seed is None else args.seed
    truth, anns = annot_stats.simulate_annotators(args.events, sigma, args.annotators, seed, args.spacing)
    write_annotation_file(out / "truth.txt", truth)
    for a in anns:
        write_annotation_file(out / f"{a.annotator}.txt", a.times)
    print(f"wrote truth.txt and {len(anns)} annotator files to {out}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="perfalign", description="Performance alignment and annotation statistics.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("features", help="extract and cache feature matrices")
    p.add_argument("audio", nargs="*", type=Path)
    _common(p)
    _feature_args(p)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("align", help="align one pair with one feature cell")
    p.add_argument("x", type=Path)
    p.add_argument("y", type=Path)
    p.add_argument("--annotations-x", nargs="+", type=Path)
    p.add_argument("--annotations-y", nargs="+", type=Path)
    _common(p)
    _feature_args(p)
    _dtw_args(p)
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("grid", help="run the full experiment grid from a config")
    _common(p)
    _dtw_args(p)
    p.add_argument("--no-cache", action="store_true", help="recompute features, ignore the cache")
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("transfer", help="transfer markers from a reference to a target recording")
    p.add_argument("reference", type=Path)
    p.add_argument("target", type=Path)
    p.add_argument("--annotations", nargs="+", type=Path, required=True)
    _common(p)
    _feature_args(p)
    _dtw_args(p)
    p.set_defaults(func=cmd_transfer)

    p = sub.add_parser("annstats", help="annotation precision statistics from marker files")
    p.add_argument("markers", nargs="+", type=Path)
    p.add_argument("--block-len", type=int, default=annot_stats.BLOCK_LEN)
    p.add_argument("--block-hop", type=int, default=annot_stats.BLOCK_HOP)
    _common(p)
    p.set_defaults(func=cmd_annstats)

    p = sub.add_parser("simulate", help="simulate annotators around known event times")
    p.add_argument("--events", type=int, default=1000)
    p.add_argument("--sigma", type=float, default=30.0, help="marker SD in ms")
    p.add_argument("--sigma2", type=float, default=None, help="SD for the second half of the events")
    p.add_argument("--annotators", type=int, default=3)
    p.add_argument("--spacing", type=float, default=0.5, help="mean inter-event interval in seconds")
    _common(p)
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except InvalidConfig as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, AudioError, AnnotationError) as exc:
        # unreadable or malformed input files
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (PerfAlignError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

if __name__ == "__main__":
    sys.exit(main())
