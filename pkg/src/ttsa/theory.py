"""Predicted asymptotic covariances, computed from first principles.

Every integral formula is evaluated through its Lyapunov-equation
characterization; quadrature exists only as a test oracle. The b = 1
indicator on the fast schedule is taken exactly from the schedule, with no
tolerance around b = 1.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg
from .errors import InfeasibleError
from .problems import ProblemSpec
from .schedules import StepSchedule


def fast_error_cov(problem: ProblemSpec, schedule: StepSchedule) -> np.ndarray:
    """Asymptotic covariance of the beta-scaled fast error.

    Solves [H + shift I] S + S [H + shift I]^T = -Gamma_fast with
    shift = 1/(2 beta0) when b = 1 and zero otherwise. The shifted matrix
    must be Hurwitz; for b = 1 that is exactly the beta0 > 1/(2 Lambda(H))
    admissibility condition.
    """
    h = problem.fast_matrix()
    gap = linalg.stability_gap(h)
    if gap <= 0.0:
        raise InfeasibleError(
            f"A2(ii) violated: fast matrix is not Hurwitz (Lambda(H) = {gap:.6g})"
        )
    shift = 1.0 / (2.0 * schedule.beta0) if schedule.b == 1.0 else 0.0
    if shift >= gap:
        raise InfeasibleError(
            "A3(ii) violated: b = 1 requires beta0 > 1/(2*Lambda(H)) "
            f"= {1.0 / (2.0 * gap):.6g} (beta0 = {schedule.beta0}, "
            f"Lambda(H) = {gap:.6g})"
        )
    shifted = h + shift * np.eye(problem.d)
    return linalg.solve_lyapunov(shifted, problem.fast_noise_cov())


def slow_error_cov(problem: ProblemSpec) -> np.ndarray:
    """Asymptotic covariance of the gamma-scaled slow error.

    Solves Q22 S + S Q22^T = -Gamma22; Q22 must be Hurwitz.
    """
    if not linalg.is_hurwitz(problem.q22):
        raise InfeasibleError(
            "A2(ii) violated: Q22 is not Hurwitz "
            f"(Lambda(Q22) = {linalg.stability_gap(problem.q22):.6g})"
        )
    return linalg.solve_lyapunov(problem.q22, problem.noise_block(1, 1))


def gain_fast_cov(problem: ProblemSpec, gain: np.ndarray) -> np.ndarray:
    """Asymptotic covariance of sqrt(n) times the fast error under a 1/n gain.

    Solves [A H + I/2] S + S [A H + I/2]^T = -A Gamma_fast A^T for the gain
    matrix A; A H + I/2 must be Hurwitz.
    """
    h = problem.fast_matrix()
    a = linalg.as_square(gain, "fast gain")
    m = a @ h + 0.5 * np.eye(problem.d)
    if not linalg.is_hurwitz(m):
        raise InfeasibleError("fast gain does not stabilize: A*H + I/2 is not Hurwitz")
    rhs = a @ problem.fast_noise_cov() @ a.T
    return linalg.solve_lyapunov(m, 0.5 * (rhs + rhs.T))


def gain_slow_cov(problem: ProblemSpec, gain: np.ndarray) -> np.ndarray:
    """Asymptotic covariance of the gamma-scaled slow error under a slow gain.

    Solves (A Q22) S + S (A Q22)^T = -A Gamma22 A^T; A Q22 must be Hurwitz.
    """
    a = linalg.as_square(gain, "slow gain")
    m = a @ problem.q22
    if not linalg.is_hurwitz(m):
        raise InfeasibleError("slow gain does not stabilize: A*Q22 is not Hurwitz")
    rhs = a @ problem.noise_block(1, 1) @ a.T
    return linalg.solve_lyapunov(m, 0.5 * (rhs + rhs.T))


def optimal_covariances(problem: ProblemSpec) -> tuple[np.ndarray, np.ndarray]:
    """The efficiency targets (H^-1 Gf H^-T, G^-1 Gs G^-T).

    These are the best achievable sqrt(n)-CLT covariances for the fast and
    slow components respectively.
    """
    h_inv = linalg.invert(problem.fast_matrix())
    g_inv = linalg.invert(problem.slow_matrix())
    fast = h_inv @ problem.fast_noise_cov() @ h_inv.T
    slow = g_inv @ problem.slow_noise_cov() @ g_inv.T
    return 0.5 * (fast + fast.T), 0.5 * (slow + slow.T)


def coupling_blocks(problem: ProblemSpec) -> tuple[np.ndarray, np.ndarray]:
    """The block matrices D = diag(H^-1, G^-1) and P = [[I, -Q12 Q22^-1],
    [-Q21 Q11^-1, I]] entering the averaged covariance."""
    d, dp = problem.d, problem.d_prime
    h_inv = linalg.invert(problem.fast_matrix())
    g_inv = linalg.invert(problem.slow_matrix())
    dmat = np.zeros((d + dp, d + dp))
    dmat[:d, :d] = h_inv
    dmat[d:, d:] = g_inv
    pmat = np.eye(d + dp)
    pmat[:d, d:] = -problem.q12 @ linalg.invert(problem.q22)
    pmat[d:, :d] = -problem.q21 @ linalg.invert(problem.q11)
    return dmat, pmat


def averaged_covariance(problem: ProblemSpec) -> np.ndarray:
    """Joint sqrt(n)-CLT covariance D P Gamma P^T D^T of the averaged pair.

    Its diagonal blocks coincide with the optimal covariances, which is the
    asymptotic-efficiency statement for the averaged algorithm.
    """
    dmat, pmat = coupling_blocks(problem)
    out = dmat @ pmat @ problem.noise.cov @ pmat.T @ dmat.T
    return 0.5 * (out + out.T)


@dataclass(frozen=True)
class TheoryReport:
    """Every covariance the theory predicts for a validated problem/schedule."""

    fast_matrix: np.ndarray          # H
    slow_matrix: np.ndarray          # G
    fast_noise_cov: np.ndarray       # Gamma of V - Q12 Q22^-1 W
    slow_noise_cov: np.ndarray       # Gamma of W - Q21 Q11^-1 V
    fast_cov: np.ndarray             # beta-scaled fast error covariance
    slow_cov: np.ndarray             # gamma-scaled slow error covariance
    optimal_fast_cov: np.ndarray
    optimal_slow_cov: np.ndarray
    averaged_cov: np.ndarray
    d_block: np.ndarray
    p_block: np.ndarray

    def as_dict(self) -> dict:
        return {
            "fast_matrix": self.fast_matrix.tolist(),
            "slow_matrix": self.slow_matrix.tolist(),
            "fast_noise_cov": self.fast_noise_cov.tolist(),
            "slow_noise_cov": self.slow_noise_cov.tolist(),
            "fast_cov": self.fast_cov.tolist(),
            "slow_cov": self.slow_cov.tolist(),
            "optimal_fast_cov": self.optimal_fast_cov.tolist(),
            "optimal_slow_cov": self.optimal_slow_cov.tolist(),
            "averaged_cov": self.averaged_cov.tolist(),
            "d_block": self.d_block.tolist(),
            "p_block": self.p_block.tolist(),
        }


def theory_report(problem: ProblemSpec, schedule: StepSchedule) -> TheoryReport:
    opt_fast, opt_slow = optimal_covariances(problem)
    dmat, pmat = coupling_blocks(problem)
    return TheoryReport(
        fast_matrix=problem.fast_matrix(),
        slow_matrix=problem.slow_matrix(),
        fast_noise_cov=problem.fast_noise_cov(),
        slow_noise_cov=problem.slow_noise_cov(),
        fast_cov=fast_error_cov(problem, schedule),
        slow_cov=slow_error_cov(problem),
        optimal_fast_cov=opt_fast,
        optimal_slow_cov=opt_slow,
        averaged_cov=averaged_covariance(problem),
        d_block=dmat,
        p_block=pmat,
    )
