"""
Main entry point for roadspread runs.

    python run_spread.py config.json --out output/run1 --threads 4
"""

import sys

from core.cli import run

if __name__ == "__main__":
    sys.exit(run())
