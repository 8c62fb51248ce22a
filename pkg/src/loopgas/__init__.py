"""Monte Carlo laboratory for random loop representations of quantum spin chains."""

__version__ = "0.1.0"
