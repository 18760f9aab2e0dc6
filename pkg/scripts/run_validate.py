"""Invariant suite: round trips, Jacobians, product-form agreement, KF equivalence, consistency limit.

Usage: python3 scripts/run_validate.py [--config configs/validate.json] [--out DIR] [--seed S] [--threads N]
"""
import sys
from pathlib import Path

from ctfilter.cli import main

DEFAULT_CONFIG = Path(__file__).resolve().parent.parent / "configs" / "validate.json"

if __name__ == "__main__":
    argv = sys.argv[1:]
    if "--config" not in argv:
        argv = ["--config", str(DEFAULT_CONFIG), *argv]
    sys.exit(main(["validate", *argv]))
