"""Monte-Carlo study of the two-annotator precision estimator.

Part 1: bias and spread of the global estimate against the number of events.
Part 2: block-pooled SD curve for a piece whose marker noise steps from one
level to another half way through (written as CSV for plotting).
Part 3: Shapiro-Wilk rejection rate for Gaussian against heavy-tailed
(Student t, 3 dof) marker noise at block and piece length.

    python3 scripts/annotation_model_simulation.py --out sim_results
"""

import argparse
import csv
from pathlib import Path

import numpy as np

from perfalign import annot_stats as A


def estimator_study(sigma, sizes, reps, rng):
    rows = []
    for n in sizes:
        est = []
        for _ in range(reps):
            _, (a, b) = A.simulate_annotators(n, sigma, 2, seed=int(rng.integers(2**31)))
            est.append(A.estimate_sigma(A.diff_sequences(a, b)).sigma)
        est = np.array(est)
        rows.append({"n_events": n, "true_sigma_ms": sigma, "mean_ms": est.mean(), "sd_ms": est.std(ddof=1),
                     "p05_ms": np.quantile(est, 0.05), "p95_ms": np.quantile(est, 0.95)})
    return rows


def step_curve(n, lo, hi, seed):
    sd = np.where(np.arange(n) < n // 2, lo, hi)
    _, (a, b) = A.simulate_annotators(n, sd, 2, seed=seed)
    blocks = A.blockwise_sigma(A.diff_sequences(a, b))
    return [{"event_start": b.start, "n": b.n, "sigma_ms": b.sigma,
             "true_ms": float(np.sqrt(np.mean(sd[b.start:b.start + b.n] ** 2)))} for b in blocks]


def rejection_study(sizes, reps, rng, sigma_ms=30.0):
    rows = []
    for noise in ("gaussian", "student_t3"):
        for n in sizes:
            rejected = 0
            for _ in range(reps):
                t = np.arange(1, n + 1) * 0.5
                if noise == "gaussian":
                    e = rng.standard_normal((2, n))
                else:
                    e = rng.standard_t(3, (2, n)) / np.sqrt(3.0)
                # plain arrays: heavy tails can reorder neighbouring markers
                d = A.diff_sequences(t + sigma_ms / 1000 * e[0], t + sigma_ms / 1000 * e[1])
                _, p = A.shapiro_wilk(d.deltas)
                rejected += p < 0.05
            rows.append({"noise": noise, "n_events": n, "rejection_rate": rejected / reps})
    return rows


def write(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("sim_results"))
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--reps", type=int, default=400)
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)

    est = estimator_study(30.0, [24, 50, 100, 300, 1000], args.reps, rng)
    write(args.out / "estimator.csv", est)
    for r in est:
        print(f"N={r['n_events']:>5}: mean {r['mean_ms']:.2f} ms, sd {r['sd_ms']:.2f} ms "
              f"(90% in [{r['p05_ms']:.1f}, {r['p95_ms']:.1f}])")

    curve = step_curve(600, 20.0, 80.0, args.seed)
    write(args.out / "step_curve.csv", curve)
    half = 300
    print("block median, first half: %.1f ms; second half: %.1f ms" % (
        np.median([c["sigma_ms"] for c in curve if c["event_start"] + c["n"] <= half]),
        np.median([c["sigma_ms"] for c in curve if c["event_start"] >= half])))

    rej = rejection_study([24, 100, 500], args.reps // 4, rng)
    write(args.out / "normality_rejection.csv", rej)
    for r in rej:
        print(f"{r['noise']:>10} N={r['n_events']:>4}: Shapiro-Wilk rejects at 5% in {100 * r['rejection_rate']:.0f}%")


if __name__ == "__main__":
    main()
