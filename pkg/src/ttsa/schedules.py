"""Power-law step-size schedules and their admissibility checks.

A schedule is the pair of sequences beta_n = beta0 * n^(-b) for the fast
iterate and gamma_n = gamma0 * n^(-a) for the slow one, with
1/2 < a < b <= 1. Iteration indices start at n = 1 (n = 0 would make the
power law singular; the state before any step is labelled n = 1).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .validation import ValidationReport

PLAIN = "plain"  # 1/2 < a < b <= 1
AVERAGING = "averaging"  # 1/2 < a < b < 1, required by the averaged CLT
REGIMES = (PLAIN, AVERAGING)

_CHUNK = 65536


def _comp_cumsum(x: np.ndarray) -> np.ndarray:
    """Chunked cumulative sum with exactly accumulated chunk offsets.

    Within a chunk numpy's pairwise summation is used; chunk totals are
    carried with math.fsum so the running sums stay accurate over 1e7 terms.
    """
    out = np.empty_like(x)
    totals: list[float] = []
    offset = 0.0
    for i in range(0, x.size, _CHUNK):
        seg = np.cumsum(x[i : i + _CHUNK])
        out[i : i + _CHUNK] = seg + offset
        totals.append(float(seg[-1]))
        offset = math.fsum(totals)
    return out


@dataclass(frozen=True)
class StepSchedule:
    beta0: float
    b: float
    gamma0: float
    a: float
    regime: str = PLAIN

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ValueError(f"unknown regime {self.regime!r}, expected one of {REGIMES}")
        if not (self.beta0 > 0 and self.gamma0 > 0):
            raise ValueError("beta0 and gamma0 must be positive (A3)")
        if not (0.5 < self.a < self.b <= 1.0):
            raise ValueError(
                "step exponents must satisfy 1/2 < a < b <= 1 (A3); "
                f"got a={self.a}, b={self.b}"
            )

    def beta(self, n: int) -> float:
        """Fast step beta0 * n^(-b).

        Evaluated through numpy's power kernel so scalar queries agree
        bitwise with the vectorized arrays the engine consumes.
        """
        if n < 1:
            raise ValueError("iteration index starts at 1")
        return float((self.beta0 * np.asarray([float(n)]) ** (-self.b))[0])

    def gamma(self, n: int) -> float:
        """Slow step gamma0 * n^(-a)."""
        if n < 1:
            raise ValueError("iteration index starts at 1")
        return float((self.gamma0 * np.asarray([float(n)]) ** (-self.a))[0])

    def beta_array(self, n: int) -> np.ndarray:
        """beta_1 .. beta_n as a vector."""
        if n < 1:
            raise ValueError("iteration index starts at 1")
        return self.beta0 * np.arange(1, n + 1, dtype=float) ** (-self.b)

    def gamma_array(self, n: int) -> np.ndarray:
        if n < 1:
            raise ValueError("iteration index starts at 1")
        return self.gamma0 * np.arange(1, n + 1, dtype=float) ** (-self.a)

    def partial_sum_arrays(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Running sums u_k = sum(beta_1..beta_k) and s_k analogously, k = 1..n."""
        return _comp_cumsum(self.beta_array(n)), _comp_cumsum(self.gamma_array(n))

    def partial_sums(self, n: int) -> tuple[float, float]:
        """(u_n, s_n), the step sums up to and including index n."""
        u, s = self.partial_sum_arrays(n)
        return float(u[-1]), float(s[-1])


def validate_schedule(schedule: StepSchedule, lambda_h: float) -> ValidationReport:
    """Check the schedule against the stability gap of the fast matrix.

    ``lambda_h`` is the stability gap of H (positive when H is Hurwitz).
    Structural constraints are enforced at construction and re-reported here;
    the b = 1 case additionally requires beta0 > 1 / (2 * lambda_h), and the
    averaging regime requires b strictly below 1.
    """
    report = ValidationReport()
    report.add(
        "A3(i) exponents",
        True,
        f"1/2 < a={schedule.a} < b={schedule.b} <= 1, beta0={schedule.beta0}, "
        f"gamma0={schedule.gamma0}",
    )
    if schedule.b == 1.0:
        threshold = 1.0 / (2.0 * lambda_h)
        report.add(
            "A3(ii) beta0 condition",
            schedule.beta0 > threshold,
            f"b = 1 requires beta0 > 1/(2*Lambda(H)) = {threshold:.6g}; "
            f"beta0 = {schedule.beta0}",
        )
    else:
        report.add("A3(ii) beta0 condition", True, "not applicable (b < 1)")
    if schedule.regime == AVERAGING:
        report.add(
            "A'3 averaging regime",
            schedule.b < 1.0,
            f"averaging requires b < 1; b = {schedule.b}",
        )
    return report
