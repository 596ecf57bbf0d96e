"""Dense Hermitian m x m linear algebra (m <= 8).

Thin wrappers over numpy.linalg that enforce the contracts the rest of the
toolkit relies on: conjugate symmetry on input, ascending eigenvalues,
rejection of numerically singular matrices before fractional powers.
"""

from __future__ import annotations

import numpy as np

from .errors import NonHermitianError, SingularWeightError

HERMITIAN_TOL = 1e-12
# eigenvalues below this times ||A|| are treated as singular: fractional
# negative powers amplify noise catastrophically below that floor
SINGULAR_FLOOR = 1e-13
MAX_DIM = 8


def check_hermitian(a, tol=HERMITIAN_TOL):
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise NonHermitianError(f"expected a square matrix, got shape {a.shape}")
    if a.shape[0] > MAX_DIM:
        raise NonHermitianError(f"dimension {a.shape[0]} exceeds bound {MAX_DIM}")
    dev = np.max(np.abs(a - a.conj().T))
    if dev > tol * (1.0 + np.max(np.abs(a))):
        raise NonHermitianError(f"conjugate-symmetry deviation {dev:.3e}")
    return a


def eig_decompose(a):
    """Eigenvalues (ascending) and a unitary eigenvector matrix of Hermitian a."""
    a = check_hermitian(a)
    lam, u = np.linalg.eigh(a)
    return lam, u


def frac_power(a, alpha):
    """A^alpha for positive-definite Hermitian A via the spectral calculus."""
    lam, u = eig_decompose(a)
    scale = float(np.max(np.abs(lam))) if lam.size else 0.0
    if scale == 0.0 or np.min(lam) <= SINGULAR_FLOOR * scale:
        raise SingularWeightError(
            f"eigenvalue {np.min(lam) if lam.size else 0.0:.3e} below singular floor")
    out = (u * lam ** float(alpha)) @ u.conj().T
    return 0.5 * (out + out.conj().T)


def frac_power_batch(mats, alpha):
    """Batched A^alpha over an array (..., m, m) of Hermitian PD matrices."""
    mats = np.asarray(mats, dtype=complex)
    lam, u = np.linalg.eigh(mats)
    scale = np.max(np.abs(lam), axis=-1)
    if np.any(scale == 0.0) or np.any(lam.min(axis=-1) <= SINGULAR_FLOOR * scale):
        raise SingularWeightError("singular sample in batched fractional power")
    out = np.einsum("...ij,...j,...kj->...ik", u, lam ** float(alpha), u.conj())
    return 0.5 * (out + np.swapaxes(out, -1, -2).conj())


def op_norm(a):
    """Operator norm sup_{|z|=1} |Az| (largest singular value)."""
    a = np.asarray(a, dtype=complex)
    return float(np.linalg.norm(a, 2))


def op_norm_batch(mats):
    """Largest singular value per matrix over an array (..., m, m)."""
    mats = np.asarray(mats, dtype=complex)
    return np.linalg.norm(mats, 2, axis=(-2, -1))


def is_positive_definite(a, tol=0.0):
    lam, _ = eig_decompose(a)
    return bool(lam.size and lam[0] > tol)
