"""Mushroom: 5-fold CV with architecture 64, ungated baseline versus L0 at lambda 1e-3."""
from _common import run

if __name__ == "__main__":
    run("mushroom", ["64"], [0.0, 1e-3], __doc__)
