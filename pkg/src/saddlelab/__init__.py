"""Nonsmooth stochastic subgradient descent laboratory.

Piecewise-smooth test functions with exact subdifferential oracles,
numerical certifiers for the geometric conditions around critical points,
escape experiments for sharp saddles, and the center-stable two-block toy.
"""

__version__ = "0.1.0"

from . import (center_stable, conditions, config, dynamics, functions,
               geometry, minnorm, sgd)

__all__ = ["center_stable", "conditions", "config", "dynamics", "functions",
           "geometry", "minnorm", "sgd", "__version__"]
