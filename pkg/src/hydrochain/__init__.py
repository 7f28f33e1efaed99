"""Harmonic chain with velocity-flip noise and its diffusive hydrodynamic limit.

Subpackages cover the microscopic model and stochastic integrator, the
closed-form averaged dynamics, deterministic covariance evolution and its
algebraic resolution, the boundary work constants, and finite-difference
solvers for the limiting stretch/energy/temperature equations.  The ``hydro``
CLI orchestrates cross-solver convergence studies.
"""

__version__ = "0.1.0"
