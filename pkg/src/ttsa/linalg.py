"""Dense kernels for small real matrices.

Everything downstream works on plain float64 numpy arrays; these helpers add
the operations the simulation needs beyond numpy itself: spectral-gap
queries, stability tests, a scaling-and-squaring matrix exponential, and a
Lyapunov solver for stationary covariances. All functions are pure and all
inputs are validated to be finite.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, InfeasibleError, SingularMatrixError

# Inverses feed covariance formulas where noise amplification is quadratic,
# so reject anything past this conditioning.
COND_LIMIT = 1e12

_EXP_ORDER = 16
_EXP_THETA = 0.25


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce to a finite 2-d float64 array."""
    m = np.asarray(a, dtype=float)
    if m.ndim != 2:
        raise DimensionError(f"{name} must be 2-dimensional, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains non-finite entries")
    return m


def as_square(a, name: str = "matrix") -> np.ndarray:
    m = as_matrix(a, name)
    if m.shape[0] != m.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {m.shape}")
    return m


def frobenius(a) -> float:
    return float(np.linalg.norm(np.asarray(a, dtype=float), "fro"))


@dataclass(frozen=True)
class SpectralSummary:
    """Real parts of a spectrum, its maximum, and the stability gap.

    ``gap`` is the negated spectral abscissa: positive exactly when every
    eigenvalue has negative real part.
    """

    real_parts: np.ndarray
    abscissa: float
    gap: float


def spectral_summary(a) -> SpectralSummary:
    """Eigenvalue real parts of a square matrix, sorted descending.

    Complex conjugate pairs contribute their real part twice.
    """
    m = as_square(a)
    parts = np.sort(np.linalg.eigvals(m).real)[::-1]
    abscissa = float(parts[0])
    return SpectralSummary(real_parts=parts, abscissa=abscissa, gap=-abscissa)


def stability_gap(a) -> float:
    """Negated spectral abscissa; positive iff the matrix is Hurwitz."""
    return spectral_summary(a).gap


def is_hurwitz(a, margin: float = 0.0) -> bool:
    """True iff every eigenvalue real part is below ``-margin``."""
    if margin < 0:
        raise ValueError("margin must be nonnegative")
    return stability_gap(a) > margin


def mat_exp(a) -> np.ndarray:
    """Matrix exponential by scaling and squaring with a Taylor core.

    The argument is scaled down to 1-norm <= 0.25, a degree-16 Taylor
    polynomial is evaluated in Horner form, and the result is repeatedly
    squared. At that scaled norm the series truncation error is far below
    double precision.
    """
    m = as_square(a)
    n = m.shape[0]
    norm = np.linalg.norm(m, 1)
    squarings = 0 if norm <= _EXP_THETA else int(np.ceil(np.log2(norm / _EXP_THETA)))
    s = m / (2.0**squarings)
    eye = np.eye(n)
    out = eye.copy()
    for k in range(_EXP_ORDER, 0, -1):
        out = eye + (s / k) @ out
    for _ in range(squarings):
        out = out @ out
    return out


def invert(a) -> np.ndarray:
    """Inverse of a square matrix, rejecting near-singular inputs."""
    m = as_square(a)
    cond = np.linalg.cond(m)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SingularMatrixError(
            f"matrix is singular to working precision (condition estimate {cond:.3e})"
        )
    return np.linalg.inv(m)


def solve_lyapunov(a, q) -> np.ndarray:
    """Solve ``A S + S A^T = -Q`` for the stationary covariance ``S``.

    ``A`` must be Hurwitz, otherwise the defining integral of ``S`` diverges
    and the equation has no positive semidefinite solution. ``Q`` must be
    symmetric and of matching dimension. Solved densely through the
    Kronecker-vectorized linear system, which is transparent and exact at the
    small dimensions used here.
    """
    m = as_square(a, "A")
    qm = as_square(q, "Q")
    if qm.shape != m.shape:
        raise DimensionError(f"A has shape {m.shape} but Q has shape {qm.shape}")
    if frobenius(qm - qm.T) > 1e-8 * max(1.0, frobenius(qm)):
        raise ValueError("Q must be symmetric")
    if not is_hurwitz(m):
        raise InfeasibleError(
            "A is not Hurwitz (stability gap "
            f"{stability_gap(m):.6g} <= 0); stationary covariance does not exist"
        )
    n = m.shape[0]
    eye = np.eye(n)
    system = np.kron(eye, m) + np.kron(m, eye)
    sol = np.linalg.solve(system, -qm.reshape(-1)).reshape(n, n)
    sol = 0.5 * (sol + sol.T)
    residual = frobenius(m @ sol + sol @ m.T + qm)
    if residual > 1e-10 * max(1.0, frobenius(qm)):
        raise SingularMatrixError(
            f"Lyapunov system too ill-conditioned (residual {residual:.3e})"
        )
    return sol


def min_eigenvalue_sym(a) -> float:
    """Smallest eigenvalue of a symmetric matrix."""
    return float(np.linalg.eigvalsh(as_square(a))[0])


def is_psd(a, tol: float = 1e-10) -> bool:
    m = as_square(a)
    if frobenius(m - m.T) > tol * max(1.0, frobenius(m)):
        return False
    return min_eigenvalue_sym(0.5 * (m + m.T)) >= -tol
