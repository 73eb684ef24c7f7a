"""Tracker runtime against problem size, with and without the exact prune.

    python scripts/tracker_timing.py --sizes 50,100,200,400,800
"""

import argparse
import time

import numpy as np

from touchmap.preprocess import Detection
from touchmap.tracking import TrackingParams, map_log_posterior, solve_tracking


def instance(rng, n, frames, extent=300.0, tracks=4):
    """``tracks`` planted moving contacts plus uniform clutter up to ``n`` detections."""
    dets = []
    for _ in range(tracks):
        x = rng.uniform(0, extent, 2)
        v = rng.normal(0, 5.0, 2)
        for t in range(frames):
            pos = x + v * t + rng.normal(0, 1.0, 2)
            dets.append(Detection(t, (float(pos[0]), float(pos[1])), 1.0, float(rng.uniform(0.7, 0.98))))
    while len(dets) < n:
        dets.append(Detection(int(rng.integers(0, frames)), tuple(rng.uniform(0, extent, 2).tolist()),
                              0.5, float(rng.uniform(0.01, 0.6))))
    return dets


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="50,100,200,400,800")
    ap.add_argument("--frames", type=int, default=20)
    ap.add_argument("--reps", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    prm = TrackingParams()
    print(f"{'n':>5} {'pruned s':>9} {'full s':>8} {'trajs':>6} {'same MAP':>9}")
    for n in (int(s) for s in args.sizes.split(",")):
        t_p = t_f = 0.0
        same = True
        for _ in range(args.reps):
            dets = instance(rng, n, args.frames)
            t0 = time.perf_counter()
            a = solve_tracking(dets, prm, prune=True)
            t1 = time.perf_counter()
            b = solve_tracking(dets, prm, prune=False)
            t2 = time.perf_counter()
            t_p += t1 - t0
            t_f += t2 - t1
            same &= abs(map_log_posterior(dets, a, prm) - map_log_posterior(dets, b, prm)) < 1e-9
        print(f"{n:>5} {t_p / args.reps:>9.4f} {t_f / args.reps:>8.4f} {len(a):>6} {str(same):>9}")


if __name__ == "__main__":
    main()
