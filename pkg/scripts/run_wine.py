"""Wine: 5-fold CV over architectures 64 and 128, ungated baseline versus L0 at lambda 1e-3."""
from _common import run

if __name__ == "__main__":
    run("wine", ["64", "128"], [0.0, 1e-3], __doc__)
