"""Single illustrative trial (rho=0.99, r=0.05, y=0.5) with raw ensembles and grid marginals.

Usage: python3 scripts/run_example.py [--config configs/example.json] [--out DIR] [--seed S] [--threads N]
"""
import sys
from pathlib import Path

from ctfilter.cli import main

DEFAULT_CONFIG = Path(__file__).resolve().parent.parent / "configs" / "example.json"

if __name__ == "__main__":
    argv = sys.argv[1:]
    if "--config" not in argv:
        argv = ["--config", str(DEFAULT_CONFIG), *argv]
    sys.exit(main(["example", *argv]))
