"""Innovation study at rho=0.99, r=0.01: binned medians and IQRs of every metric.

Usage: python3 scripts/run_innovation.py [--config configs/innovation.json] [--out DIR] [--seed S] [--threads N]
"""
import sys
from pathlib import Path

from ctfilter.cli import main

DEFAULT_CONFIG = Path(__file__).resolve().parent.parent / "configs" / "innovation.json"

if __name__ == "__main__":
    argv = sys.argv[1:]
    if "--config" not in argv:
        argv = ["--config", str(DEFAULT_CONFIG), *argv]
    sys.exit(main(["innovation", *argv]))
