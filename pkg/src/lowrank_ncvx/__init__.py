"""Nonconvex low-rank matrix factorization toolbox.

Problem generators, spectral initializers, gradient-descent-family and
alternating/projection solvers, landscape analysis, and a reproducible
experiment harness.
"""

__version__ = "0.1.0"
