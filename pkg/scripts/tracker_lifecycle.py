"""Trace the track lifecycle on scripted match streams.

    python scripts/tracker_lifecycle.py 0 40 50 60 --end 200
"""
import argparse

import numpy as np

from geoloc.fusion import ClassLabel, Contact
from geoloc.tracker import LifecycleParams, TrackDatabase, lifecycle_step

if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("times", nargs="*", type=float, default=[0, 10, 20])
    ap.add_argument("--n-confirm", type=int, default=3)
    ap.add_argument("--max-gap", type=float, default=30.0)
    ap.add_argument("--death", type=float, default=120.0)
    ap.add_argument("--end", type=float)
    a = ap.parse_args()

    db = TrackDatabase(LifecycleParams(a.n_confirm, a.max_gap, a.death))
    for t in a.times:
        db, ev = lifecycle_step(db, [Contact(np.zeros(3), np.eye(3), ClassLabel.PERSON, 0.9, 0, t)], t)
        tr = db.tracks[max(db.tracks)]
        print(f"t={t:7.2f}  " + ", ".join(f"{e.kind} #{e.track_id}" for e in ev)
              + f"  (chain {tr.chain_length}, {tr.status.name.lower()})")
    if a.end is not None:
        db, ev = lifecycle_step(db, [], a.end)
        print(f"t={a.end:7.2f}  " + (", ".join(f"{e.kind} #{e.track_id}" for e in ev) or "no events"))
