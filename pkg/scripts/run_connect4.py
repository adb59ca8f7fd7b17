"""Connect-4: 5-fold CV with architecture 256, ungated baseline versus L0 at lambda 1e-3.

Expect hours of CPU time.  The data must first be written with
``scripts/prepare_datasets.py --connect4-uci connect-4.data``.
"""
from _common import run

if __name__ == "__main__":
    run("connect-4", ["256"], [0.0, 1e-3], __doc__)
