#!/usr/bin/env python3
"""Run a pooling-method comparison from an INI config.

Defaults to the heterogeneity comparison shipped in configs/; pass another
config path to override:  python3 scripts/run_experiment.py configs/toy.ini
"""

import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from lacuna.cli import main  # noqa: E402

if __name__ == "__main__":
    args = sys.argv[1:] or [
        os.path.join(os.path.dirname(__file__), "..", "configs",
                     "heterogeneity.ini")
    ]
    raise SystemExit(main(["experiment", *args]))
