"""Per-stage latency statistics from a run's latency.csv, or from the model.

    python scripts/latency_profile.py runs/demo
    python scripts/latency_profile.py --frames 1000
"""
import argparse
import csv
from pathlib import Path

import numpy as np

from geoloc.scenario import PipelineModel, pipeline_latency
from geoloc.scenario.pipeline import STAGES

if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("run_dir", nargs="?")
    ap.add_argument("--frames", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    a = ap.parse_args()

    cols = list(STAGES) + ["end_to_end"]
    if a.run_dir:
        with (Path(a.run_dir) / "latency.csv").open() as f:
            rows = list(csv.DictReader(f))
        data = {c: np.array([float(r[c]) for r in rows]) for c in cols}
        print(f"{len(rows)} frames from {a.run_dir}")
    else:
        m = PipelineModel()
        samples = [pipeline_latency(m, a.seed, k) for k in range(a.frames)]
        data = {c: np.array([s[0][c] for s in samples]) for c in STAGES}
        data["end_to_end"] = np.array([s[1] for s in samples])
        print(f"{a.frames} frames from the default stage model")
    print(f"{'stage':<20}{'mean ms':>10}{'p95 ms':>10}{'max ms':>10}")
    for c in cols:
        v = 1e3 * data[c]
        print(f"{c:<20}{v.mean():10.1f}{np.percentile(v, 95):10.1f}{v.max():10.1f}")
