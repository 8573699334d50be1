"""Coupled two-time-scale iteration engine.

Runs the plain fast/slow recursion, the matricial-gain variant, and the
running averages, optionally tracking the martingale / coupling / remainder
decomposition of each error component alongside the main path.

The same vectorized kernel drives single trajectories and replication
batches: a batch holds its replications in the leading axis and every
replication owns an independent counter-based random stream, so a single run
is exactly replication 0 of the batch with the same seed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import linalg
from .errors import ConfigError, DimensionError, DivergenceError
from .problems import ProblemSpec
from .schedules import StepSchedule

DIVERGENCE_GUARD = 1e9
_CHUNK = 512

STANDARD = "standard"
AVERAGED = "averaged"
MATRICIAL = "matricial"
ALGORITHMS = (STANDARD, AVERAGED, MATRICIAL)


def replication_rng(base_seed: int, replication: int) -> np.random.Generator:
    """Independent counter-based stream for one replication.

    Philox keyed through SeedSequence(entropy, spawn_key) gives injectively
    derived, splittable streams: replication r of a given base seed always
    sees the same noise regardless of batch size or chunking.
    """
    seq = np.random.SeedSequence(entropy=base_seed, spawn_key=(replication,))
    return np.random.Generator(np.random.Philox(seq))


def checkpoint_indices(n_final: int, per_decade: int = 8) -> np.ndarray:
    """Geometric checkpoint grid from 1 to n_final, final index included."""
    if n_final < 1:
        raise ValueError("n_final must be >= 1")
    exps = np.arange(0, per_decade * math.ceil(math.log10(max(n_final, 2))) + 1)
    grid = np.unique(np.rint(10.0 ** (exps / per_decade)).astype(int))
    grid = grid[(grid >= 1) & (grid <= n_final)]
    if grid.size == 0 or grid[-1] != n_final:
        grid = np.append(grid, n_final)
    return grid


def default_offsets(problem: ProblemSpec) -> tuple[np.ndarray, np.ndarray]:
    """Unit-norm initial offsets from the root."""
    d, dp = problem.d, problem.d_prime
    return np.ones(d) / math.sqrt(d), np.ones(dp) / math.sqrt(dp)


@dataclass(frozen=True)
class GainMatrices:
    """Premultiplier gains for the matricial 1/n-fast variant."""

    fast: np.ndarray
    slow: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "fast", linalg.as_square(self.fast, "fast gain"))
        object.__setattr__(self, "slow", linalg.as_square(self.slow, "slow gain"))


def validate_gains(problem: ProblemSpec, gains: GainMatrices) -> None:
    """Raise unless the gains stabilize the matricial iteration."""
    if gains.fast.shape[0] != problem.d or gains.slow.shape[0] != problem.d_prime:
        raise DimensionError("gain dimensions do not match the problem")
    m = gains.fast @ problem.fast_matrix() + 0.5 * np.eye(problem.d)
    if not linalg.is_hurwitz(m):
        raise ConfigError("fast gain does not stabilize: A*H + I/2 is not Hurwitz")
    if not linalg.is_hurwitz(gains.slow @ problem.q22):
        raise ConfigError("slow gain does not stabilize: A*Q22 is not Hurwitz")


def optimal_gains(problem: ProblemSpec) -> GainMatrices:
    """The efficiency-optimal gains (-H^-1, -G^-1)."""
    gains = GainMatrices(
        fast=-linalg.invert(problem.fast_matrix()),
        slow=-linalg.invert(problem.slow_matrix()),
    )
    validate_gains(problem, gains)
    return gains


def matricial_schedule(a: float) -> StepSchedule:
    """The step schedule implied by the matricial variant: 1/n fast, n^-a slow."""
    return StepSchedule(beta0=1.0, b=1.0, gamma0=1.0, a=a)


@dataclass
class SAState:
    """One trajectory's state at iteration index n (indices start at 1).

    Running averages are maintained as compensated sums so theta_bar stays
    accurate over long runs; ``u_n`` and ``s_n`` are the step sums up to and
    including index n.
    """

    n: int
    theta: np.ndarray
    mu: np.ndarray
    theta_sum: np.ndarray
    theta_comp: np.ndarray
    mu_sum: np.ndarray
    mu_comp: np.ndarray
    u_n: float
    s_n: float

    @property
    def theta_bar(self) -> np.ndarray:
        return self.theta_sum / self.n

    @property
    def mu_bar(self) -> np.ndarray:
        return self.mu_sum / self.n


def initial_state(
    problem: ProblemSpec,
    schedule: StepSchedule,
    theta0=None,
    mu0=None,
) -> SAState:
    off_f, off_s = default_offsets(problem)
    theta = np.asarray(theta0, dtype=float) if theta0 is not None else problem.theta_star + off_f
    mu = np.asarray(mu0, dtype=float) if mu0 is not None else problem.mu_star + off_s
    if theta.shape != (problem.d,) or mu.shape != (problem.d_prime,):
        raise DimensionError("initial iterates do not match the problem dimensions")
    return SAState(
        n=1,
        theta=theta.copy(),
        mu=mu.copy(),
        theta_sum=theta.copy(),
        theta_comp=np.zeros_like(theta),
        mu_sum=mu.copy(),
        mu_comp=np.zeros_like(mu),
        u_n=schedule.beta(1),
        s_n=schedule.gamma(1),
    )


@dataclass
class DecompositionState:
    """Error decomposition companions at index n.

    ``martingale_*`` carries the CLT (the noise-driven leading part),
    ``coupling_*`` the averaged cross-component part. The remainders are
    never stored; they are the differences error - martingale - coupling.
    All four start at zero at n = 1.
    """

    n: int
    martingale_fast: np.ndarray
    coupling_fast: np.ndarray
    martingale_slow: np.ndarray
    coupling_slow: np.ndarray
    last_v: np.ndarray | None = None
    last_w: np.ndarray | None = None

    def remainders(self, theta_err: np.ndarray, mu_err: np.ndarray):
        delta_f = theta_err - self.martingale_fast - self.coupling_fast
        delta_s = mu_err - self.martingale_slow - self.coupling_slow
        return delta_f, delta_s


def initial_decomposition(problem: ProblemSpec) -> DecompositionState:
    return DecompositionState(
        n=1,
        martingale_fast=np.zeros(problem.d),
        coupling_fast=np.zeros(problem.d),
        martingale_slow=np.zeros(problem.d_prime),
        coupling_slow=np.zeros(problem.d_prime),
    )


class _Kernel:
    """Precomputed pieces of one advance of the coupled recursion."""

    def __init__(self, problem: ProblemSpec, gains: GainMatrices | None = None):
        self.problem = problem
        self.q11T = problem.q11.T.copy()
        self.q12T = problem.q12.T.copy()
        self.q21T = problem.q21.T.copy()
        self.q22T = problem.q22.T.copy()
        self.theta_star = problem.theta_star
        self.mu_star = problem.mu_star
        self.residual = problem.residual
        self.bias = problem.bias
        self.gain_fast_T = gains.fast.T.copy() if gains is not None else None
        self.gain_slow_T = gains.slow.T.copy() if gains is not None else None
        self.d = problem.d
        self.dp = problem.d_prime

    def observe(self, theta, mu, v, w, n):
        """Noisy observations (X, Y) of the drift at the current state."""
        ef = theta - self.theta_star
        es = mu - self.mu_star
        x = ef @ self.q11T + es @ self.q12T + v
        y = ef @ self.q21T + es @ self.q22T + w
        if self.residual.kind != "none":
            rho_f, rho_g = self.residual.evaluate(ef, es)
            x = x + rho_f
            y = y + rho_g
        if not self.bias.is_zero():
            r_f, r_g = self.bias.values(n, self.d, self.dp)
            x = x + r_f
            y = y + r_g
        return x, y

    def advance(self, theta, mu, v, w, n, beta_n, gamma_n):
        x, y = self.observe(theta, mu, v, w, n)
        if self.gain_fast_T is not None:
            x = x @ self.gain_fast_T
            y = y @ self.gain_slow_T
        return theta + beta_n * x, mu + gamma_n * y


class _DecompKernel:
    """Recursive updates of the decomposition sequences."""

    def __init__(self, problem: ProblemSpec):
        self.h = problem.fast_matrix()
        self.q22 = problem.q22
        self.q21T = problem.q21.T.copy()
        # K = Q12 Q22^-1, the fast component's sensitivity to slow innovations
        self.kT = (problem.q12 @ linalg.invert(problem.q22)).T.copy()

    def advance(self, lf, cf, ls, cs, v, w, mu_delta, beta_n, gamma_n):
        """One update; coupling_slow consumes the pre-update fast parts."""
        e_fast = linalg.mat_exp(beta_n * self.h)
        e_slow = linalg.mat_exp(gamma_n * self.q22)
        cs_new = cs @ e_slow.T + gamma_n * ((lf + cf) @ self.q21T)
        ls_new = ls @ e_slow.T + gamma_n * w
        cf_new = cf @ e_fast.T + (beta_n / gamma_n) * (mu_delta @ self.kT)
        lf_new = lf @ e_fast.T + beta_n * (v - w @ self.kT)
        return lf_new, cf_new, ls_new, cs_new


def step(
    problem: ProblemSpec,
    schedule: StepSchedule,
    state: SAState,
    noise: tuple[np.ndarray, np.ndarray],
    bias_values: tuple[np.ndarray, np.ndarray] | None = None,
) -> SAState:
    """Advance one trajectory by a single iteration.

    ``noise`` is the freshly drawn innovation pair (V, W); drawing it fresh
    per call is the martingale-difference contract. Raises DivergenceError if
    the new iterate is non-finite or beyond the guard.
    """
    return _single_advance(problem, schedule, state, noise, bias_values, gains=None)


def matricial_step(
    problem: ProblemSpec,
    state: SAState,
    gains: GainMatrices,
    a: float,
    noise: tuple[np.ndarray, np.ndarray],
    bias_values=None,
) -> SAState:
    """Advance the matricial variant: gain/n fast step, gain/n^a slow step."""
    return _single_advance(
        problem, matricial_schedule(a), state, noise, bias_values, gains=gains
    )


def _single_advance(problem, schedule, state, noise, bias_values, gains):
    kernel = _Kernel(problem, gains)
    v = np.atleast_2d(np.asarray(noise[0], dtype=float))
    w = np.atleast_2d(np.asarray(noise[1], dtype=float))
    if v.shape[-1] != problem.d or w.shape[-1] != problem.d_prime:
        raise DimensionError("noise dimensions do not match the problem")
    n = state.n
    beta_n = schedule.beta(n)
    gamma_n = schedule.gamma(n)
    x, y = kernel.observe(state.theta[None, :], state.mu[None, :], v, w, n)
    if bias_values is not None:
        x = x + np.asarray(bias_values[0], dtype=float)
        y = y + np.asarray(bias_values[1], dtype=float)
    if gains is not None:
        x = x @ kernel.gain_fast_T
        y = y @ kernel.gain_slow_T
    theta = (state.theta[None, :] + beta_n * x)[0]
    mu = (state.mu[None, :] + gamma_n * y)[0]
    if not (np.all(np.isfinite(theta)) and np.all(np.isfinite(mu))) or (
        np.abs(theta).max() + np.abs(mu).max() > DIVERGENCE_GUARD
    ):
        raise DivergenceError(
            f"iterate diverged at index {n + 1}", step=n + 1, replication=0
        )
    tsum, tcomp = _kahan_add(state.theta_sum, state.theta_comp, theta)
    msum, mcomp = _kahan_add(state.mu_sum, state.mu_comp, mu)
    return SAState(
        n=n + 1,
        theta=theta,
        mu=mu,
        theta_sum=tsum,
        theta_comp=tcomp,
        mu_sum=msum,
        mu_comp=mcomp,
        u_n=state.u_n + schedule.beta(n + 1),
        s_n=state.s_n + schedule.gamma(n + 1),
    )


def decompose_step(
    problem: ProblemSpec,
    schedule: StepSchedule,
    dstate: DecompositionState,
    noise: tuple[np.ndarray, np.ndarray],
    mu_delta: np.ndarray,
) -> DecompositionState:
    """Advance the decomposition with the same (V, W) the main step used.

    ``mu_delta`` is the realized slow increment mu_{n+1} - mu_n.
    """
    kernel = _DecompKernel(problem)
    n = dstate.n
    v = np.asarray(noise[0], dtype=float)
    w = np.asarray(noise[1], dtype=float)
    md = np.asarray(mu_delta, dtype=float)
    if v.shape != (problem.d,) or w.shape != (problem.d_prime,) or md.shape != (problem.d_prime,):
        raise DimensionError("decomposition inputs do not match the problem dimensions")
    lf, cf, ls, cs = kernel.advance(
        dstate.martingale_fast[None, :],
        dstate.coupling_fast[None, :],
        dstate.martingale_slow[None, :],
        dstate.coupling_slow[None, :],
        v[None, :],
        w[None, :],
        md[None, :],
        schedule.beta(n),
        schedule.gamma(n),
    )
    return DecompositionState(
        n=n + 1,
        martingale_fast=lf[0],
        coupling_fast=cf[0],
        martingale_slow=ls[0],
        coupling_slow=cs[0],
        last_v=v.copy(),
        last_w=w.copy(),
    )


def _kahan_add(total, comp, term):
    y = term - comp
    t = total + y
    comp_new = (t - total) - y
    return t, comp_new


DECOMP_KEYS = (
    "martingale_fast",
    "coupling_fast",
    "remainder_fast",
    "martingale_slow",
    "coupling_slow",
    "remainder_slow",
)


@dataclass
class BatchTrace:
    """Checkpointed paths of a replication batch.

    Arrays are indexed (checkpoint, replication, component); norms of the
    decomposition parts are (checkpoint, replication). ``full`` holds the
    complete per-step paths when step recording was requested.
    """

    ns: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    u: np.ndarray
    s: np.ndarray
    theta: np.ndarray
    mu: np.ndarray
    theta_bar: np.ndarray
    mu_bar: np.ndarray
    decomposition: dict[str, np.ndarray] | None = None
    full: dict[str, np.ndarray] | None = None

    @property
    def replications(self) -> int:
        return self.theta.shape[1]


@dataclass
class TrajectoryTrace:
    """Single-trajectory view of a batch trace (replication axis dropped)."""

    ns: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    u: np.ndarray
    s: np.ndarray
    theta: np.ndarray
    mu: np.ndarray
    theta_bar: np.ndarray
    mu_bar: np.ndarray
    decomposition: dict[str, np.ndarray] | None = None
    full: dict[str, np.ndarray] | None = None


def simulate_batch(
    problem: ProblemSpec,
    schedule: StepSchedule,
    n_final: int,
    *,
    base_seed: int,
    replications: int,
    gains: GainMatrices | None = None,
    theta0=None,
    mu0=None,
    track_decomposition: bool = False,
    checkpoints=None,
    record_steps: bool = False,
    chunk: int = _CHUNK,
) -> BatchTrace:
    """Run ``replications`` independent trajectories in lockstep.

    Deterministic for a fixed (base_seed, replications, n_final) triple;
    replication r draws from stream (base_seed, r) regardless of how many
    others run alongside it.
    """
    if n_final < 1:
        raise ValueError("n_final must be >= 1")
    if replications < 1:
        raise ValueError("replications must be >= 1")
    if gains is not None:
        validate_gains(problem, gains)
        if track_decomposition:
            raise ConfigError("decomposition tracking applies to the plain iteration only")

    d, dp, dim = problem.d, problem.d_prime, problem.dim
    b = replications
    kernel = _Kernel(problem, gains)
    dkernel = _DecompKernel(problem) if track_decomposition else None

    beta_arr = schedule.beta_array(n_final)
    gamma_arr = schedule.gamma_array(n_final)
    u_arr, s_arr = schedule.partial_sum_arrays(n_final)

    grid = np.asarray(checkpoints, dtype=int) if checkpoints is not None else checkpoint_indices(n_final)
    if grid.size == 0 or np.any(np.diff(grid) <= 0) or grid[0] < 1 or grid[-1] != n_final:
        raise ValueError("checkpoints must be strictly increasing and end at n_final")
    ckpt_pos = {int(n): i for i, n in enumerate(grid)}
    k = grid.size

    off_f, off_s = default_offsets(problem)
    t0 = np.asarray(theta0, dtype=float) if theta0 is not None else problem.theta_star + off_f
    m0 = np.asarray(mu0, dtype=float) if mu0 is not None else problem.mu_star + off_s
    if t0.shape != (d,) or m0.shape != (dp,):
        raise DimensionError("initial iterates do not match the problem dimensions")

    theta = np.tile(t0, (b, 1))
    mu = np.tile(m0, (b, 1))
    tsum, tcomp = theta.copy(), np.zeros_like(theta)
    msum, mcomp = mu.copy(), np.zeros_like(mu)

    if track_decomposition:
        lf = np.zeros((b, d))
        cf = np.zeros((b, d))
        ls = np.zeros((b, dp))
        cs = np.zeros((b, dp))

    out_theta = np.empty((k, b, d))
    out_mu = np.empty((k, b, dp))
    out_tbar = np.empty((k, b, d))
    out_mbar = np.empty((k, b, dp))
    out_decomp = (
        {key: np.empty((k, b)) for key in DECOMP_KEYS} if track_decomposition else None
    )

    full = None
    if record_steps:
        full = {
            "theta": np.empty((n_final, b, d)),
            "mu": np.empty((n_final, b, dp)),
            "v": np.empty((max(n_final - 1, 0), b, d)),
            "w": np.empty((max(n_final - 1, 0), b, dp)),
        }

    def record(n: int) -> None:
        i = ckpt_pos.get(n)
        if i is None:
            return
        out_theta[i] = theta
        out_mu[i] = mu
        out_tbar[i] = tsum / n
        out_mbar[i] = msum / n
        if track_decomposition:
            ef = theta - problem.theta_star
            es = mu - problem.mu_star
            out_decomp["martingale_fast"][i] = np.linalg.norm(lf, axis=1)
            out_decomp["coupling_fast"][i] = np.linalg.norm(cf, axis=1)
            out_decomp["remainder_fast"][i] = np.linalg.norm(ef - lf - cf, axis=1)
            out_decomp["martingale_slow"][i] = np.linalg.norm(ls, axis=1)
            out_decomp["coupling_slow"][i] = np.linalg.norm(cs, axis=1)
            out_decomp["remainder_slow"][i] = np.linalg.norm(es - ls - cs, axis=1)

    rngs = [replication_rng(base_seed, r) for r in range(b)]
    record(1)
    if record_steps:
        full["theta"][0] = theta
        full["mu"][0] = mu

    n = 1
    noise_block = np.empty((b, chunk, dim))
    while n < n_final:
        span = min(chunk, n_final - n)
        for r in range(b):
            noise_block[r, :span] = problem.noise.draw(rngs[r], (span,))
        for j in range(span):
            i = n - 1
            beta_n = beta_arr[i]
            gamma_n = gamma_arr[i]
            v = noise_block[:, j, :d]
            w = noise_block[:, j, d:]
            theta_new, mu_new = kernel.advance(theta, mu, v, w, n, beta_n, gamma_n)
            if track_decomposition:
                lf, cf, ls, cs = dkernel.advance(
                    lf, cf, ls, cs, v, w, mu_new - mu, beta_n, gamma_n
                )
            theta, mu = theta_new, mu_new
            tsum, tcomp = _kahan_add(tsum, tcomp, theta)
            msum, mcomp = _kahan_add(msum, mcomp, mu)
            n += 1
            peak_f = np.abs(theta).max()
            peak_s = np.abs(mu).max()
            if not (np.isfinite(peak_f) and np.isfinite(peak_s)) or (
                peak_f + peak_s > DIVERGENCE_GUARD
            ):
                per_rep = np.abs(theta).max(axis=1) + np.abs(mu).max(axis=1)
                bad = int(np.argmax(~np.isfinite(per_rep) | (per_rep > DIVERGENCE_GUARD)))
                raise DivergenceError(
                    f"replication {bad} diverged at index {n}",
                    step=n,
                    replication=bad,
                    trace=_partial_trace(
                        grid, ckpt_pos, n, beta_arr, gamma_arr, u_arr, s_arr,
                        out_theta, out_mu, out_tbar, out_mbar, out_decomp,
                    ),
                )
            if record_steps:
                full["theta"][n - 1] = theta
                full["mu"][n - 1] = mu
                full["v"][n - 2] = v
                full["w"][n - 2] = w
            record(n)

    return BatchTrace(
        ns=grid.copy(),
        beta=beta_arr[grid - 1],
        gamma=gamma_arr[grid - 1],
        u=u_arr[grid - 1],
        s=s_arr[grid - 1],
        theta=out_theta,
        mu=out_mu,
        theta_bar=out_tbar,
        mu_bar=out_mbar,
        decomposition=out_decomp,
        full=full,
    )


def _partial_trace(grid, ckpt_pos, n, beta_arr, gamma_arr, u_arr, s_arr,
                   out_theta, out_mu, out_tbar, out_mbar, out_decomp):
    done = grid[grid < n]
    m = done.size
    decomp = None
    if out_decomp is not None:
        decomp = {key: val[:m].copy() for key, val in out_decomp.items()}
    return BatchTrace(
        ns=done.copy(),
        beta=beta_arr[done - 1],
        gamma=gamma_arr[done - 1],
        u=u_arr[done - 1],
        s=s_arr[done - 1],
        theta=out_theta[:m].copy(),
        mu=out_mu[:m].copy(),
        theta_bar=out_tbar[:m].copy(),
        mu_bar=out_mbar[:m].copy(),
        decomposition=decomp,
    )


def run(
    problem: ProblemSpec,
    schedule: StepSchedule,
    n_final: int,
    seed: int,
    *,
    algorithm: str = STANDARD,
    gains: GainMatrices | None = None,
    theta0=None,
    mu0=None,
    track_decomposition: bool = False,
    checkpoints=None,
    record_steps: bool = False,
) -> TrajectoryTrace:
    """Run one trajectory and return its checkpointed trace.

    Traces are pure functions of (problem, schedule, n_final, seed) and the
    options; the trajectory is identical to replication 0 of a batch with the
    same seed.
    """
    if algorithm not in ALGORITHMS:
        raise ConfigError(f"unknown algorithm {algorithm!r}")
    if algorithm == MATRICIAL:
        if gains is None:
            gains = optimal_gains(problem)
        schedule = matricial_schedule(schedule.a)
    batch = simulate_batch(
        problem,
        schedule,
        n_final,
        base_seed=seed,
        replications=1,
        gains=gains if algorithm == MATRICIAL else None,
        theta0=theta0,
        mu0=mu0,
        track_decomposition=track_decomposition,
        checkpoints=checkpoints,
        record_steps=record_steps,
    )
    decomp = None
    if batch.decomposition is not None:
        decomp = {key: val[:, 0] for key, val in batch.decomposition.items()}
    full = None
    if batch.full is not None:
        full = {key: val[:, 0] for key, val in batch.full.items()}
    return TrajectoryTrace(
        ns=batch.ns,
        beta=batch.beta,
        gamma=batch.gamma,
        u=batch.u,
        s=batch.s,
        theta=batch.theta[:, 0],
        mu=batch.mu[:, 0],
        theta_bar=batch.theta_bar[:, 0],
        mu_bar=batch.mu_bar[:, 0],
        decomposition=decomp,
        full=full,
    )
