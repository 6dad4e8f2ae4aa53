"""Gibbsian T-tessellations: simulation by split/merge/flip MCMC and
pseudolikelihood fitting, with a companion point-process module."""

__version__ = "0.1.0"
