"""Upscaling toolkit for viscous flow through thin heterogeneous layers.

Solves the local cell problems of the three permeability regimes, assembles
the effective permeability matrices, solves the limiting lower-dimensional
Darcy model, and verifies the upscaling against direct simulation of the
thin-layer Brinkmann flow and its two-scale convergence functionals.
"""

__version__ = "0.1.0"
