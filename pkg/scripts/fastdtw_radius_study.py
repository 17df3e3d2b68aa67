"""How FastDTW's cost depends on the search radius.

For random sequence pairs, records the approximation ratio against exact DTW
for each radius and counts pairs where a larger radius gives a higher cost
(the multiscale windows for different radii are not nested, so this happens).

    python3 scripts/fastdtw_radius_study.py --pairs 500
"""

import argparse

import numpy as np

from perfalign.dtw import DistanceMetric, dtw_exact, fastdtw

RADII = (0, 1, 2, 4, 8, 16, 64)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--pairs", type=int, default=500)
    ap.add_argument("--max-len", type=int, default=64)
    ap.add_argument("--dim", type=int, default=3)
    args = ap.parse_args()

    ratios = {r: [] for r in RADII}
    increases = 0
    examples = []
    for seed in range(args.pairs):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((rng.integers(2, args.max_len + 1), args.dim))
        y = rng.standard_normal((rng.integers(2, args.max_len + 1), args.dim))
        exact = dtw_exact(x, y, DistanceMetric.L2).cost
        costs = [fastdtw(x, y, DistanceMetric.L2, r).cost for r in RADII]
        for r, c in zip(RADII, costs):
            ratios[r].append(c / exact if exact > 0 else 1.0)
        if any(b > a + 1e-12 for a, b in zip(costs, costs[1:])):
            increases += 1
            if len(examples) < 5:
                examples.append((seed, len(x), len(y), np.round(costs, 4).tolist()))

    for r in RADII:
        a = np.array(ratios[r])
        print(f"radius {r:>3}: mean cost/exact {a.mean():.4f}, worst {a.max():.4f}, exact in {np.mean(a == 1):.0%}")
    print(f"pairs where some larger radius costs more: {increases}/{args.pairs}")
    for seed, L, M, costs in examples:
        print(f"  seed {seed} ({L}x{M}): {costs}")


if __name__ == "__main__":
    main()
