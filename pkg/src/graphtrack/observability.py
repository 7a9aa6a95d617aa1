"""Recovering the initial state from sampled trajectories.

Stacks the per-step sampled measurement maps into one tall operator, tests
whether its rank covers the band, and quantifies the estimation error for
deterministic and random sampling.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, logsumexp

from .errors import (
    BadSchedule,
    DimensionMismatch,
    GraphTrackError,
    NotObservable,
    SingularExpectedGram,
)
from .models import BandlimitedModel
from .numerics import default_rank_rtol, pseudo_inverse, spectral_norm
from .schedules import SamplingSchedule

GRAM_FLOOR = 1e-13


@dataclass(eq=False)
class ObservabilityReport:
    """Summary of one deterministic schedule's reconstruction ability."""

    rank: int
    bandwidth: int
    sample_count: int
    necessary_count_met: bool
    norm_ratio_lhs: float
    norm_ratio_rhs: float
    condition_number: float
    theoretical_mse: float | None

    @property
    def observable(self) -> bool:
        return self.rank == self.bandwidth

    @property
    def sufficient_condition_holds(self) -> bool:
        return self.norm_ratio_lhs < self.norm_ratio_rhs

    def to_payload(self) -> dict:
        return {
            "rank": self.rank,
            "bandwidth": self.bandwidth,
            "sample_count": self.sample_count,
            "necessary_count_met": self.necessary_count_met,
            "observable": self.observable,
            "norm_ratio_lhs": self.norm_ratio_lhs,
            "norm_ratio_rhs": self.norm_ratio_rhs,
            "sufficient_condition_holds": self.sufficient_condition_holds,
            "condition_number": self.condition_number,
            "theoretical_mse": self.theoretical_mse,
        }


def _require_deterministic(sched: SamplingSchedule, steps: int) -> None:
    if sched.mode != "deterministic":
        raise BadSchedule("this operation needs a deterministic schedule; realize it first")
    sched.check_steps(steps)


def _transition_stack(m: BandlimitedModel, horizon: int) -> list[np.ndarray]:
    """Products mapping step 0 to each step t, built incrementally."""
    d = m.state_dim
    phis = [np.eye(d)]
    for t in range(1, horizon + 1):
        phis.append(m.a_at(t - 1) @ phis[-1])
    return phis


def observability_matrix(m: BandlimitedModel, sched: SamplingSchedule, horizon: int) -> np.ndarray:
    """Stacked sampled measurement maps, shape (n_nodes*(horizon+1), state_dim).

    Rows belonging to unsampled nodes are exactly zero.
    """
    steps = horizon + 1
    _require_deterministic(sched, steps)
    H = m.obs_matrix
    phis = _transition_stack(m, horizon)
    n, d = H.shape
    out = np.zeros((n * steps, d))
    for t in range(steps):
        idx = sched.set_at(t).as_array()
        if idx.size:
            out[t * n + idx] = H[idx] @ phis[t]
    return out


def _gram(m: BandlimitedModel, sched: SamplingSchedule, horizon: int) -> np.ndarray:
    H = m.obs_matrix
    phis = _transition_stack(m, horizon)
    G = np.zeros((m.state_dim, m.state_dim))
    for t in range(horizon + 1):
        idx = sched.set_at(t).as_array()
        if idx.size:
            blk = H[idx] @ phis[t]
            G += blk.T @ blk
    return G


def observability_test(
    m: BandlimitedModel,
    sched: SamplingSchedule,
    horizon: int,
    rtol: float | None = None,
    sigma_v2: float | None = None,
) -> ObservabilityReport:
    """Rank test plus the sufficient norm condition and the error formula.

    The norm condition (lhs < rhs) is sufficient for observability, not
    necessary: rank can be full while the condition fails.
    """
    steps = horizon + 1
    _require_deterministic(sched, steps)
    d = m.state_dim
    n = m.n_nodes
    if rtol is None:
        rtol = default_rank_rtol((n * steps, d))
    sigma2 = m.measurement_noise_var if sigma_v2 is None else float(sigma_v2)

    G = _gram(m, sched, horizon)
    vals = np.linalg.eigvalsh(G)
    lam_max = float(vals[-1]) if vals.size else 0.0
    rank = int(np.sum(vals > rtol * max(lam_max, GRAM_FLOOR)))

    H = m.obs_matrix
    lhs = 0.0
    for t in range(steps):
        comp = sched.set_at(t).complement(n).as_array()
        if comp.size:
            lhs = max(lhs, spectral_norm(H[comp]))
    phis = np.vstack(_transition_stack(m, horizon))
    sv = np.linalg.svd(phis, compute_uv=False)
    rhs = float((sv[-1] / sv[0]) ** 2) if sv[0] > 0 else 0.0

    sample_count = sched.sample_count()
    if rank == d and vals[0] > 0:
        cond = float(math.sqrt(lam_max / vals[0]))
        theo = sigma2 * float(np.sum(1.0 / vals))
    else:
        cond = float("inf")
        theo = None
    return ObservabilityReport(
        rank=rank,
        bandwidth=d,
        sample_count=sample_count,
        necessary_count_met=sample_count >= d,
        norm_ratio_lhs=float(lhs),
        norm_ratio_rhs=rhs,
        condition_number=cond,
        theoretical_mse=theo,
    )


def input_response(
    m: BandlimitedModel,
    inputs: np.ndarray | None,
    sched: SamplingSchedule,
    horizon: int,
) -> np.ndarray:
    """Sampled measurement contribution of the known inputs, stacked.

    Runs the forward recursion with a zero initial state instead of forming
    the full input-to-output block matrix.
    """
    steps = horizon + 1
    _require_deterministic(sched, steps)
    d, n = m.state_dim, m.n_nodes
    if inputs is None:
        return np.zeros(n * steps)
    u = np.atleast_2d(np.asarray(inputs, dtype=float))
    if u.shape != (horizon, d):
        raise DimensionMismatch(f"inputs must be ({horizon},{d}), got {u.shape}")
    H = m.obs_matrix
    out = np.zeros(n * steps)
    z = np.zeros(d)
    for t in range(1, steps):
        z = m.a_at(t - 1) @ z + m.b_at(t - 1) @ u[t - 1]
        idx = sched.set_at(t).as_array()
        if idx.size:
            out[t * n + idx] = H[idx] @ z
    return out


def ls_observe(
    measurements: np.ndarray,
    inputs: np.ndarray | None,
    m: BandlimitedModel,
    sched: SamplingSchedule,
    horizon: int,
    rtol: float | None = None,
) -> np.ndarray:
    """Least-squares estimate of the initial spectral state.

    measurements is (horizon+1, n_nodes); entries outside each step's set are
    ignored. Raises NotObservable when the schedule's rank is deficient.
    """
    steps = horizon + 1
    _require_deterministic(sched, steps)
    n = m.n_nodes
    y = np.asarray(measurements, dtype=float)
    if y.shape != (steps, n):
        raise DimensionMismatch(f"measurements must be ({steps},{n}), got {y.shape}")

    report = observability_test(m, sched, horizon, rtol=rtol)
    if not report.observable:
        raise NotObservable(f"rank {report.rank} < bandwidth {report.bandwidth}")

    stacked = np.zeros(n * steps)
    for t in range(steps):
        idx = sched.set_at(t).as_array()
        stacked[t * n + idx] = y[t, idx]
    z = stacked - input_response(m, inputs, sched, horizon)
    O = observability_matrix(m, sched, horizon)
    return pseudo_inverse(O, rtol=rtol) @ z


def mse_deterministic(
    m: BandlimitedModel,
    sched: SamplingSchedule,
    horizon: int,
    sigma_v2: float | None = None,
) -> float:
    """Exact mean squared error of the least-squares initial-state estimate
    under i.i.d. measurement noise on the sampled entries."""
    _require_deterministic(sched, horizon + 1)
    sigma2 = m.measurement_noise_var if sigma_v2 is None else float(sigma_v2)
    G = _gram(m, sched, horizon)
    vals = np.linalg.eigvalsh(G)
    if vals.size == 0 or vals[0] <= GRAM_FLOOR * max(vals[-1], GRAM_FLOOR):
        raise NotObservable("schedule does not span the band; error formula undefined")
    return sigma2 * float(np.sum(1.0 / vals))


def mse_lower_bound_random(
    m: BandlimitedModel,
    rates: np.ndarray,
    horizon: int,
    sigma_v2: float | None = None,
) -> float:
    """Lower bound on the expected estimation error under Bernoulli sampling,
    obtained by moving the expectation inside the matrix inverse."""
    r = np.asarray(rates, dtype=float)
    n = m.n_nodes
    if r.shape != (n,):
        raise DimensionMismatch(f"rates must have length {n}")
    if np.any(r < 0) or np.any(r > 1):
        raise BadSchedule("rates must lie in [0, 1]")
    sigma2 = m.measurement_noise_var if sigma_v2 is None else float(sigma_v2)
    H = m.obs_matrix
    M = H.T @ (r[:, None] * H)
    G = np.zeros((m.state_dim, m.state_dim))
    for phi in _transition_stack(m, horizon):
        G += phi.T @ M @ phi
    vals = np.linalg.eigvalsh(G)
    if vals.size == 0 or vals[0] <= GRAM_FLOOR * max(vals[-1], GRAM_FLOOR):
        raise SingularExpectedGram("expected Gram matrix is singular at these rates")
    return sigma2 * float(np.sum(1.0 / vals))


def undersampling_probability(
    rates: np.ndarray,
    horizon: int,
    bandwidth: int,
    method: str = "poisson",
) -> float:
    """Probability that Bernoulli sampling collects fewer graph-time samples
    than the bandwidth over steps 0..horizon.

    method "poisson": closed-form tail of a Poisson with the matching mean
    (an approximation; evaluated in the log domain so large means are safe).
    method "exact": dynamic-programming convolution of the underlying
    independent Bernoulli draws.
    """
    r = np.asarray(rates, dtype=float)
    if r.ndim != 1 or np.any(r < 0) or np.any(r > 1):
        raise BadSchedule("rates must be a 1-D vector in [0, 1]")
    if bandwidth < 1:
        raise GraphTrackError("bandwidth must be at least 1")
    if horizon < 0:
        raise GraphTrackError("horizon must be nonnegative")
    steps = horizon + 1

    if method == "poisson":
        alpha = steps * float(r.sum())
        if alpha == 0.0:
            return 1.0
        k = np.arange(bandwidth)
        log_terms = k * np.log(alpha) - alpha - gammaln(k + 1)
        return float(min(1.0, np.exp(logsumexp(log_terms))))
    if method == "exact":
        # distribution of the sample count, truncated at bandwidth entries
        dp = np.zeros(bandwidth)
        dp[0] = 1.0
        for p in r:
            if p == 0.0:
                continue
            for _ in range(steps):
                dp[1:] = dp[1:] * (1.0 - p) + dp[:-1] * p
                dp[0] *= 1.0 - p
        return float(dp.sum())
    raise GraphTrackError(f"unknown method {method!r}")


def poisson_gap_bound(rates: np.ndarray, horizon: int) -> float:
    """Upper bound on |poisson - exact| undersampling probabilities."""
    r = np.asarray(rates, dtype=float)
    return (horizon + 1) * float(np.sum(r**2))


def necessary_count_random(bandwidth: int, horizon: int) -> int:
    """Minimum expected per-step support needed for observability to be
    possible at all: ceil(bandwidth / steps)."""
    if bandwidth < 1 or horizon < 0:
        raise GraphTrackError("bandwidth >= 1 and horizon >= 0 required")
    return -(-bandwidth // (horizon + 1))
