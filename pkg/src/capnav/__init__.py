"""capnav: grid-world simulation, datasets, baselines and metrics for
navigate-then-describe agents."""

__version__ = "0.1.0"
