"""Desk-scale numerical toolkit for matrix-weighted Hardy space machinery.

Subpackages: hermitian linear algebra, exact dyadic geometry, matrix
Muckenhoupt weights and reducing operators, weighted maximal functions,
the weighted Calderon-Zygmund decomposition, atomic decomposition, and
singular-integral boundedness harnesses, plus the `mwhardy` CLI.
"""

__version__ = "0.1.0"
