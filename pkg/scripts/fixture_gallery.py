"""Run the full pipeline on every synthetic gesture and write SVG views.

    python scripts/fixture_gallery.py --out gallery
"""

import argparse
import json
import time
from pathlib import Path

from touchmap.config import PipelineConfig
from touchmap.frames import save_sequence
from touchmap.pipeline import run_pipeline
from touchmap.plot import plot_artifact
from touchmap.render import onset_times
from touchmap.synth import KINDS, SynthParams, synthesize


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="gallery")
    ap.add_argument("--noise", type=float, default=0.0)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()

    root = Path(args.out)
    root.mkdir(parents=True, exist_ok=True)
    print(f"{'kind':<8} {'dets':>5} {'trajs':>5} {'chosen':>7} {'score':>9} {'secs':>5}  row-0 onsets (s)")
    for kind in KINDS:
        d = root / kind
        d.mkdir(exist_ok=True)
        seq = synthesize(kind, SynthParams(noise=args.noise), seed=args.seed)
        save_sequence(seq, d / "frames.csv")
        cfg = PipelineConfig(input=str(d / "frames.csv"), jobs=args.jobs)
        t0 = time.perf_counter()
        res = run_pipeline(cfg, d)
        secs = time.perf_counter() - t0
        for name in ("trajectories.csv", "selection.json", "signal.csv"):
            plot_artifact(d / name, d / (name.split(".")[0] + ".svg"), frames=d / "frames.csv")
        on = onset_times(res.signal.channels, res.signal.sample_rate)[0]
        onsets = " ".join("-" if x != x else f"{x:.3f}" for x in on)
        print(f"{kind:<8} {len(res.detections):>5} {len(res.trajectories):>5} "
              f"{len(res.selection.chosen):>7} {res.selection.total_score:>9.3f} {secs:>5.2f}  {onsets}")
        (d / "summary.json").write_text(json.dumps({
            "detections": len(res.detections),
            "trajectories": len(res.trajectories),
            "chosen": list(res.selection.chosen),
            "translation": list(res.selection.transform.translation),
            "seconds": round(secs, 3),
        }, indent=1) + "\n")


if __name__ == "__main__":
    main()
