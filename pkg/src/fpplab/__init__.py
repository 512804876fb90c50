"""First-passage percolation laboratory: canonical geodesics, derived constants, Monte Carlo checks."""

__version__ = "0.1.0"
