"""Small-noise periodic-solution approximations for stochastic systems."""

__version__ = "0.1.0"
