"""Run the bundled demo scenario and print the report table.

    python scripts/run_demo.py [--config configs/demo.yaml] [--out runs/demo] [--seed N]
"""
import argparse
import sys
from pathlib import Path

from geoloc.cli import main

ROOT = Path(__file__).resolve().parents[1]

if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default=str(ROOT / "configs" / "demo.yaml"))
    ap.add_argument("--out", default=str(ROOT / "runs" / "demo"))
    ap.add_argument("--seed", type=int)
    a = ap.parse_args()
    argv = ["run", "--config", a.config, "--out", a.out] + (["--seed", str(a.seed)] if a.seed is not None else [])
    rc = main(argv)
    if rc == 0:
        rc = main(["report", a.out])
    sys.exit(rc)
