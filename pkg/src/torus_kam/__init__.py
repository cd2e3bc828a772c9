"""Small-divisor problems on the n-torus at truncated-Fourier scale."""

__version__ = "0.1.0"
