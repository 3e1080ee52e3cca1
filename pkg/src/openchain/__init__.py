"""Matrix-product simulation of dissipative spin-1/2 chains.

Two engines evolve the same master equation: a matrix-product density
operator under superoperator TEBD (finite or infinite chain), and stochastic
quantum-trajectory MPS. A dense solver provides the exact reference at small
sizes, and closed-form benchmarks cover the strong-dissipation plateau and
growth-law fits.
"""

__version__ = "0.1.0"

from .models import ModelParams, OperatorBasis, linearized_basis, pauli_basis

__all__ = [
    "__version__",
    "ModelParams",
    "OperatorBasis",
    "pauli_basis",
    "linearized_basis",
]
