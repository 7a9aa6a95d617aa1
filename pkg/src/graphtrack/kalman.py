"""Kalman tracking of bandlimited graph processes.

Covers the per-step filter (batch and sequential measurement processing),
the Fisher-information recursion that mirrors it, the steady-state gain via
fixed-point iteration of the prediction Riccati map, and detectability
diagnostics for a fixed sampling set.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatch,
    Divergent,
    GraphTrackError,
    NotConverged,
)
from .graphs import VertexSet
from .models import BandlimitedModel
from .numerics import check_psd, pseudo_inverse, spectral_norm, symmetrize
from .schedules import SamplingSchedule

DIVERGENCE_GUARD = 1e12
MARGINAL_TOL = 1e-9


@dataclass(eq=False)
class FilterState:
    """One filter step: prior and posterior moments plus the information matrix.

    The gain has one column per node; columns outside the step's sampling set
    are zero. Sequential updates do not form the batch gain and leave it None.
    """

    t: int
    x_prior: np.ndarray
    p_prior: np.ndarray
    x_post: np.ndarray
    p_post: np.ndarray
    gain: np.ndarray | None
    fim: np.ndarray


@dataclass(eq=False)
class SteadyState:
    """Fixed point of the prediction Riccati map and its gain."""

    p_inf: np.ndarray  # prediction covariance
    k_inf: np.ndarray  # (state_dim, n_nodes), zero off the sampling set
    residual: float
    iterations: int

    @property
    def trace(self) -> float:
        return float(np.trace(self.p_inf))


@dataclass(eq=False)
class DetectabilityReport:
    """Eigenvector test on the marginally/un-stable modes plus a finite-horizon
    rank diagnostic for a constant sampling set."""

    detectable: bool
    stabilizable: bool
    marginal_modes: list[complex]
    horizon: int
    horizon_rank: int
    bandwidth: int
    horizon_lhs: float
    horizon_rhs: float

    def to_payload(self) -> dict:
        return {
            "detectable": self.detectable,
            "stabilizable": self.stabilizable,
            "marginal_modes": [[z.real, z.imag] for z in self.marginal_modes],
            "horizon": self.horizon,
            "horizon_rank": self.horizon_rank,
            "bandwidth": self.bandwidth,
            "horizon_lhs": self.horizon_lhs,
            "horizon_rhs": self.horizon_rhs,
        }


def _as_set(nodes: VertexSet | np.ndarray | list) -> VertexSet:
    return nodes if isinstance(nodes, VertexSet) else VertexSet.of(nodes)


def kf_init(m: BandlimitedModel, x0_guess: np.ndarray, p0: np.ndarray) -> FilterState:
    """Start the filter at step 0 with a prior guess; no measurement applied."""
    d = m.state_dim
    x0 = np.asarray(x0_guess, dtype=float)
    if x0.shape != (d,):
        raise DimensionMismatch(f"x0_guess must have length {d}")
    p0 = check_psd(np.asarray(p0, dtype=float), "p0")
    if p0.shape != (d, d):
        raise DimensionMismatch(f"p0 must be ({d},{d})")
    return FilterState(
        t=0,
        x_prior=x0.copy(),
        p_prior=p0.copy(),
        x_post=x0.copy(),
        p_post=p0.copy(),
        gain=None,
        fim=pseudo_inverse(p0),
    )


def _predict(state: FilterState, m: BandlimitedModel, u_prev: np.ndarray | None):
    t = state.t + 1
    A = m.a_at(t - 1)
    B = m.b_at(t - 1)
    d = m.state_dim
    if u_prev is None:
        u_prev = np.zeros(d)
    u_prev = np.asarray(u_prev, dtype=float)
    if u_prev.shape != (d,):
        raise DimensionMismatch(f"input must have length {d}")
    x_prior = A @ state.x_post + B @ u_prev
    p_prior = symmetrize(A @ state.p_post @ A.T + m.process_noise_cov)
    return t, A, x_prior, p_prior


def _fim_advance(fim_prev: np.ndarray, A: np.ndarray, Q: np.ndarray,
                 H_s: np.ndarray, sigma2: float) -> np.ndarray:
    prior_info = pseudo_inverse(A @ pseudo_inverse(fim_prev) @ A.T + Q)
    if H_s.shape[0]:
        prior_info = prior_info + (H_s.T @ H_s) / sigma2
    return symmetrize(prior_info)


def kf_step(
    state: FilterState,
    m: BandlimitedModel,
    u_prev: np.ndarray | None,
    y: np.ndarray,
    nodes: VertexSet | np.ndarray | list,
) -> FilterState:
    """Advance one step: predict, then correct with the sampled measurements.

    y is the full-length measurement vector; only entries inside `nodes` are
    read. An empty set degrades to a pure prediction (zero gain).
    """
    t, A, x_prior, p_prior = _predict(state, m, u_prev)
    n, d = m.n_nodes, m.state_dim
    y = np.asarray(y, dtype=float)
    if y.shape != (n,):
        raise DimensionMismatch(f"measurement must have length {n}")
    vs = _as_set(nodes)
    idx = vs.as_array()
    if idx.size and idx[-1] >= n:
        raise DimensionMismatch(f"node {idx[-1]} outside [0,{n})")
    H = m.obs_matrix
    sigma2 = m.measurement_noise_var
    gain = np.zeros((d, n))

    if idx.size == 0:
        x_post, p_post = x_prior.copy(), p_prior.copy()
    else:
        H_s = H[idx]
        innov_cov = H_s @ p_prior @ H_s.T + sigma2 * np.eye(idx.size)
        k_s = p_prior @ H_s.T @ pseudo_inverse(innov_cov)
        gain[:, idx] = k_s
        x_post = x_prior + k_s @ (y[idx] - H_s @ x_prior)
        # five-term covariance update, kept in the exact algebraic form
        phpk = p_prior @ H_s.T @ k_s.T
        khp = k_s @ H_s @ p_prior
        p_post = (
            p_prior
            - phpk
            - khp
            + sigma2 * (k_s @ k_s.T)
            + k_s @ H_s @ p_prior @ H_s.T @ k_s.T
        )
        p_post = symmetrize(p_post)

    fim = _fim_advance(state.fim, A, m.process_noise_cov, H[idx] if idx.size else H[:0], sigma2)
    return FilterState(
        t=t, x_prior=x_prior, p_prior=p_prior, x_post=x_post, p_post=p_post,
        gain=gain, fim=fim,
    )


def kf_step_sequential(
    state: FilterState,
    m: BandlimitedModel,
    u_prev: np.ndarray | None,
    y: np.ndarray,
    nodes: VertexSet | np.ndarray | list,
) -> FilterState:
    """Same step as kf_step but folding in the sampled nodes one scalar at a
    time (valid because the measurement noise is diagonal)."""
    t, A, x_prior, p_prior = _predict(state, m, u_prev)
    n = m.n_nodes
    y = np.asarray(y, dtype=float)
    if y.shape != (n,):
        raise DimensionMismatch(f"measurement must have length {n}")
    vs = _as_set(nodes)
    idx = vs.as_array()
    H = m.obs_matrix
    sigma2 = m.measurement_noise_var

    x = x_prior.copy()
    P = p_prior.copy()
    for node in idx:
        h = H[node]
        s = float(h @ P @ h) + sigma2
        k = (P @ h) / s
        x = x + k * (y[node] - float(h @ x))
        P = symmetrize(P - np.outer(k, h @ P))

    fim = _fim_advance(state.fim, A, m.process_noise_cov, H[idx] if idx.size else H[:0], sigma2)
    return FilterState(
        t=t, x_prior=x_prior, p_prior=p_prior, x_post=x, p_post=P,
        gain=None, fim=fim,
    )


def fim_step(
    fim_prev: np.ndarray,
    m: BandlimitedModel,
    nodes: VertexSet | np.ndarray | list,
    t: int | None = None,
) -> np.ndarray:
    """Fisher-information recursion matching the filter step.

    For time-varying models pass the step index t being entered; the
    transition used is then the one mapping t-1 to t, which is what makes
    the inverse information equal the posterior covariance exactly.
    """
    fim_prev = check_psd(np.asarray(fim_prev, dtype=float), "fim_prev")
    A = m.a_tilde if m.time_invariant else m.a_at((t or 1) - 1)
    idx = _as_set(nodes).as_array()
    H = m.obs_matrix
    return _fim_advance(fim_prev, A, m.process_noise_cov,
                        H[idx] if idx.size else H[:0], m.measurement_noise_var)


def kf_run(
    m: BandlimitedModel,
    sched: SamplingSchedule,
    measurements: np.ndarray,
    inputs: np.ndarray | None = None,
    x0_guess: np.ndarray | None = None,
    p0: np.ndarray | None = None,
    sequential: bool = False,
) -> list[FilterState]:
    """Filter a whole trajectory; measurements is (T+1, n_nodes).

    Step 0 is the prior initialization; the measurement at step 0 is not
    used (the initial guess plays that role). Returns T+1 filter states.
    """
    y = np.asarray(measurements, dtype=float)
    steps = y.shape[0]
    sched.check_steps(steps)
    if sched.mode != "deterministic":
        raise GraphTrackError("kf_run needs a realized (deterministic) schedule")
    d = m.state_dim
    if x0_guess is None:
        x0_guess = np.zeros(d)
    if p0 is None:
        p0 = m.process_noise_cov if np.any(m.process_noise_cov) else np.eye(d)
    if inputs is not None:
        inputs = np.asarray(inputs, dtype=float)
        if inputs.shape != (steps - 1, d):
            raise DimensionMismatch(f"inputs must be ({steps - 1},{d})")
    step_fn = kf_step_sequential if sequential else kf_step
    states = [kf_init(m, x0_guess, p0)]
    for t in range(1, steps):
        u_prev = None if inputs is None else inputs[t - 1]
        states.append(step_fn(states[-1], m, u_prev, y[t], sched.set_at(t)))
    return states


# -- steady state ---------------------------------------------------------

def _riccati_map(P: np.ndarray, A: np.ndarray, Q: np.ndarray,
                 H_s: np.ndarray, sigma2: float) -> np.ndarray:
    """One application of the prediction Riccati map for a fixed set."""
    if H_s.shape[0] == 0:
        return symmetrize(A @ P @ A.T + Q)
    innov = H_s @ P @ H_s.T + sigma2 * np.eye(H_s.shape[0])
    gain_core = P @ H_s.T @ pseudo_inverse(innov)
    updated = P - gain_core @ H_s @ P
    return symmetrize(A @ updated @ A.T + Q)


def _steady_gain(P: np.ndarray, m: BandlimitedModel, idx: np.ndarray) -> np.ndarray:
    d, n = m.state_dim, m.n_nodes
    K = np.zeros((d, n))
    if idx.size:
        H_s = m.obs_matrix[idx]
        innov = H_s @ P @ H_s.T + m.measurement_noise_var * np.eye(idx.size)
        K[:, idx] = P @ H_s.T @ pseudo_inverse(innov)
    return K


def solve_dare(
    m: BandlimitedModel,
    nodes: VertexSet | np.ndarray | list,
    tol: float = 1e-10,
    max_iter: int = 100_000,
) -> SteadyState:
    """Steady-state prediction covariance by fixed-point iteration.

    Starts from the process-noise covariance; stops when successive iterates
    differ by at most tol in Frobenius norm (which upper-bounds the spectral
    norm). Warns when the detectability test fails but still attempts the
    iteration; raises Divergent past the norm guard and NotConverged at the
    iteration cap.
    """
    if not m.time_invariant:
        raise GraphTrackError("steady state defined for time-invariant models only")
    vs = _as_set(nodes)
    report = detectability_check(m, vs)
    if not (report.detectable and report.stabilizable):
        warnings.warn("mode test failed; steady-state iteration may diverge")

    A, Q = m.a_tilde, m.process_noise_cov
    idx = vs.as_array()
    H_s = m.obs_matrix[idx] if idx.size else m.obs_matrix[:0]
    sigma2 = m.measurement_noise_var

    P = Q.copy()
    for it in range(1, max_iter + 1):
        P_next = _riccati_map(P, A, Q, H_s, sigma2)
        if not np.all(np.isfinite(P_next)) or np.linalg.norm(P_next, 2) > DIVERGENCE_GUARD:
            raise Divergent(f"iterate norm exceeded {DIVERGENCE_GUARD:g} at iteration {it}")
        diff = float(np.linalg.norm(P_next - P, "fro"))
        P = P_next
        if diff <= tol:
            residual = spectral_norm(_riccati_map(P, A, Q, H_s, sigma2) - P)
            return SteadyState(p_inf=P, k_inf=_steady_gain(P, m, idx), residual=residual, iterations=it)
    residual = spectral_norm(_riccati_map(P, A, Q, H_s, sigma2) - P)
    raise NotConverged(f"no fixed point after {max_iter} iterations (residual {residual:.3e})")


def steady_state_for_sets(
    m: BandlimitedModel,
    sets: list[VertexSet],
    tol: float = 1e-10,
    max_iter: int = 100_000,
) -> list[SteadyState | None]:
    """Fixed-point iteration run for many equal-size sets at once.

    Same map and stopping rule as solve_dare, vectorized over candidates.
    Divergent or non-converged candidates come back as None instead of
    raising, so a caller ranking candidates can skip them.
    """
    if not m.time_invariant:
        raise GraphTrackError("steady state defined for time-invariant models only")
    if not sets:
        return []
    sets = [_as_set(vs) for vs in sets]
    sizes = {len(s) for s in sets}
    if len(sizes) != 1:
        raise GraphTrackError("steady_state_for_sets needs equal-size sets")
    s = sizes.pop()
    A, Q = m.a_tilde, m.process_noise_cov
    H = m.obs_matrix
    sigma2 = m.measurement_noise_var
    d = m.state_dim
    m_c = len(sets)

    Hs = np.stack([H[vs.as_array()] if s else H[:0] for vs in sets])  # (m_c, s, d)
    P = np.broadcast_to(Q, (m_c, d, d)).copy()
    eye_s = np.eye(s)
    alive = np.ones(m_c, dtype=bool)
    done = np.zeros(m_c, dtype=bool)
    iters = np.zeros(m_c, dtype=int)

    for it in range(1, max_iter + 1):
        if s:
            PHt = P @ np.transpose(Hs, (0, 2, 1))  # (m_c, d, s)
            innov = Hs @ PHt + sigma2 * eye_s
            gain = PHt @ np.linalg.inv(innov)
            updated = P - gain @ (np.transpose(PHt, (0, 2, 1)))
        else:
            updated = P
        P_next = A @ updated @ A.T + Q
        P_next = 0.5 * (P_next + np.transpose(P_next, (0, 2, 1)))
        diff = np.linalg.norm((P_next - P).reshape(m_c, -1), axis=1)
        P = P_next
        norms = np.linalg.norm(P.reshape(m_c, -1), axis=1)
        bad = alive & (~np.isfinite(norms) | (norms > DIVERGENCE_GUARD))
        if np.any(bad):
            alive &= ~bad
            P[bad] = np.eye(d)  # park dead candidates on a benign value
        newly = alive & ~done & (diff <= tol)
        iters[newly] = it
        done |= newly
        if np.all(done | ~alive):
            break

    out: list[SteadyState | None] = []
    for c, vs in enumerate(sets):
        if not alive[c] or not done[c]:
            out.append(None)
            continue
        idx = vs.as_array()
        H_s = H[idx] if idx.size else H[:0]
        residual = spectral_norm(_riccati_map(P[c], A, Q, H_s, sigma2) - P[c])
        out.append(SteadyState(p_inf=P[c], k_inf=_steady_gain(P[c], m, idx),
                               residual=residual, iterations=int(iters[c])))
    return out


def ss_kf_run(
    m: BandlimitedModel,
    nodes: VertexSet | np.ndarray | list,
    x0_guess: np.ndarray,
    measurements: np.ndarray,
    steady: SteadyState | None = None,
    inputs: np.ndarray | None = None,
) -> tuple[np.ndarray, SteadyState]:
    """Constant-gain tracking with the steady-state gain.

    Returns the (T+1, state_dim) posterior estimates and the steady state
    used. Step 0 is the initial guess.
    """
    vs = _as_set(nodes)
    if steady is None:
        steady = solve_dare(m, vs)
    y = np.asarray(measurements, dtype=float)
    steps, n = y.shape
    if n != m.n_nodes:
        raise DimensionMismatch(f"measurements must have {m.n_nodes} columns")
    d = m.state_dim
    x0 = np.asarray(x0_guess, dtype=float)
    if x0.shape != (d,):
        raise DimensionMismatch(f"x0_guess must have length {d}")
    if inputs is not None:
        inputs = np.asarray(inputs, dtype=float)
        if inputs.shape != (steps - 1, d):
            raise DimensionMismatch(f"inputs must be ({steps - 1},{d})")

    K = steady.k_inf
    H = m.obs_matrix
    idx = vs.as_array()
    est = np.zeros((steps, d))
    est[0] = x0
    for t in range(1, steps):
        x_pred = m.a_at(t - 1) @ est[t - 1]
        if inputs is not None:
            x_pred = x_pred + m.b_at(t - 1) @ inputs[t - 1]
        innov = np.zeros(n)
        innov[idx] = y[t, idx] - (H[idx] @ x_pred)
        est[t] = x_pred + K @ innov
    return est, steady


def detectability_check(
    m: BandlimitedModel,
    nodes: VertexSet | np.ndarray | list,
    horizon: int | None = None,
) -> DetectabilityReport:
    """Eigenvector rank test on every mode with magnitude >= 1 - 1e-9.

    A mode passes when stacking (A - mu I) over the sampled measurement rows
    has full column rank; stabilizability runs the mirrored test against the
    input map. Also reports a finite-horizon rank diagnostic for the constant
    set (full-rank stack plus the norm-ratio pair at that horizon).
    """
    if not m.time_invariant:
        raise GraphTrackError("detectability defined for time-invariant models")
    vs = _as_set(nodes)
    idx = vs.as_array()
    A = m.a_tilde
    B = m.b_tilde
    d = m.state_dim
    H_s = m.obs_matrix[idx] if idx.size else m.obs_matrix[:0]

    eigvals = np.linalg.eigvals(A)
    marginal = [complex(z) for z in eigvals if abs(z) >= 1.0 - MARGINAL_TOL]
    detectable = True
    stabilizable = True
    eye = np.eye(d)
    for mu in marginal:
        pencil = np.vstack([A - mu * eye, H_s.astype(complex)])
        sv = np.linalg.svd(pencil, compute_uv=False)
        rank = int(np.sum(sv > max(pencil.shape) * np.finfo(float).eps * sv[0])) if sv.size else 0
        if rank < d:
            detectable = False
        pencil_b = np.hstack([A - mu * eye, B.astype(complex)])
        sv_b = np.linalg.svd(pencil_b, compute_uv=False)
        rank_b = int(np.sum(sv_b > max(pencil_b.shape) * np.finfo(float).eps * sv_b[0])) if sv_b.size else 0
        if rank_b < d:
            stabilizable = False

    if horizon is None:
        horizon = 2 * d
    sched = SamplingSchedule.constant(vs, horizon + 1)
    from .observability import observability_test  # local import avoids a cycle

    rep = observability_test(m, sched, horizon)
    comp = vs.complement(m.n_nodes).as_array()
    H_c = m.obs_matrix[comp] if comp.size else m.obs_matrix[:0]
    lhs = spectral_norm(H_c.T @ H_c)
    return DetectabilityReport(
        detectable=detectable,
        stabilizable=stabilizable,
        marginal_modes=marginal,
        horizon=horizon,
        horizon_rank=rep.rank,
        bandwidth=d,
        horizon_lhs=float(lhs),
        horizon_rhs=rep.norm_ratio_rhs,
    )
