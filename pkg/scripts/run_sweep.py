"""Desk-scale rho x r sweep: mean JS per filter, % change vs EnKF, paired t-tests.

Usage: python3 scripts/run_sweep.py [--config configs/sweep.json] [--out DIR] [--seed S] [--threads N]
"""
import sys
from pathlib import Path

from ctfilter.cli import main

DEFAULT_CONFIG = Path(__file__).resolve().parent.parent / "configs" / "sweep.json"

if __name__ == "__main__":
    argv = sys.argv[1:]
    if "--config" not in argv:
        argv = ["--config", str(DEFAULT_CONFIG), *argv]
    sys.exit(main(["sweep", *argv]))
