"""Sampling-set design: where (and when, or how often) to place sensors.

Three design problems share one continuous core: minimize the trace of the
inverse weighted Gram matrix over box-constrained weights. On top of it sit
the deterministic graph-time design (binary rounding), the Bernoulli rate
design (weights tied across steps), a per-step information design driven by
the smallest eigenvalue, and a greedy steady-state design ranked by the
fixed-point covariance trace.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DetectabilityFailure, GraphTrackError, Infeasible, NotConverged
from .graphs import FrequencySet, SpectralBasis, VertexSet, band_selector
from .kalman import solve_dare, steady_state_for_sets
from .models import BandlimitedModel
from .observability import _transition_stack
from .schedules import SamplingSchedule

TIE_RTOL = 1e-9
TIE_ATOL = 1e-12


@dataclass(eq=False)
class DesignResult:
    """Outcome of one design solve.

    relaxed is the box-constrained solution; rounded is the deliverable
    (binary for deterministic designs, probabilities for rate designs,
    indicator for greedy selections). achieved_constraint is the exact
    constraint value re-evaluated at `rounded`.
    """

    mode: str
    relaxed: np.ndarray
    rounded: np.ndarray
    achieved_constraint: float
    target: float | None
    iterations: int
    feasible: bool
    converged: bool

    def selected(self) -> VertexSet:
        return VertexSet.of(np.nonzero(self.rounded > 0.5)[0])

    def to_payload(self) -> dict:
        return {
            "mode": self.mode,
            "relaxed": [float(v) for v in self.relaxed],
            "rounded": [float(v) for v in self.rounded],
            "achieved_constraint": float(self.achieved_constraint),
            "target": None if self.target is None else float(self.target),
            "iterations": int(self.iterations),
            "feasible": bool(self.feasible),
            "converged": bool(self.converged),
        }


# -- continuous core --------------------------------------------------------

def _project_capped_simplex(v: np.ndarray, lo: float, hi: float, total: float) -> np.ndarray:
    """Euclidean projection onto {lo <= c <= hi, sum(c) = total}."""
    d = v.size
    if not (lo * d - 1e-12 <= total <= hi * d + 1e-12):
        raise GraphTrackError(f"budget {total} incompatible with box [{lo},{hi}]^{d}")
    theta_lo = float(np.min(v) - hi)
    theta_hi = float(np.max(v) - lo)
    for _ in range(100):
        theta = 0.5 * (theta_lo + theta_hi)
        s = float(np.clip(v - theta, lo, hi).sum())
        if s > total:
            theta_lo = theta
        else:
            theta_hi = theta
    return np.clip(v - 0.5 * (theta_lo + theta_hi), lo, hi)


def _gram_trace_and_grad(psi: np.ndarray, weights: np.ndarray, want_grad: bool):
    """f = trace inverse of the weighted Gram; gradient w.r.t. each weight."""
    G = psi.T @ (weights[:, None] * psi)
    vals = np.linalg.eigvalsh(G)
    if vals[0] <= 1e-13 * max(vals[-1], 1e-300):
        return np.inf, None
    f = float(np.sum(1.0 / vals))
    if not want_grad:
        return f, None
    X = np.linalg.solve(G, psi.T)  # columns are G^{-1} psi_r
    return f, -np.sum(X * X, axis=0)


def _objective(psi, groups, c, want_grad=False):
    f, grad_rows = _gram_trace_and_grad(psi, c[groups], want_grad)
    if grad_rows is None:
        return f, None
    return f, np.bincount(groups, weights=grad_rows, minlength=c.size)


def _pgd_at_budget(
    psi: np.ndarray,
    groups: np.ndarray,
    lo: float,
    hi: float,
    budget: float,
    c0: np.ndarray | None,
    max_iter: int,
    ftol: float,
) -> tuple[np.ndarray, float, int, bool]:
    """Projected gradient descent with backtracking on the capped simplex."""
    nvar = int(groups.max()) + 1
    if c0 is None:
        c = _project_capped_simplex(np.full(nvar, budget / nvar), lo, hi, budget)
    else:
        c = _project_capped_simplex(c0, lo, hi, budget)
    f, g = _objective(psi, groups, c, want_grad=True)
    if not np.isfinite(f):
        # nudge towards uniform until the Gram is invertible
        uniform = _project_capped_simplex(np.full(nvar, budget / nvar), lo, hi, budget)
        for blend in np.linspace(0.1, 1.0, 10):
            c = (1 - blend) * c + blend * uniform
            f, g = _objective(psi, groups, c, want_grad=True)
            if np.isfinite(f):
                break
        if not np.isfinite(f):
            return c, np.inf, 0, False
    step = 1.0 / max(float(np.max(np.abs(g))), 1e-12)
    it = 0
    for it in range(1, max_iter + 1):
        accepted = False
        for _ in range(60):
            cand = _project_capped_simplex(c - step * g, lo, hi, budget)
            f_new, _ = _objective(psi, groups, cand, want_grad=False)
            dec = float(g @ (cand - c))
            if np.isfinite(f_new) and f_new <= f + 1e-4 * dec:
                accepted = True
                break
            step *= 0.5
            if step < 1e-18:
                break
        if not accepted:
            return c, f, it, True  # no descent direction left: stationary
        moved = float(np.linalg.norm(cand - c))
        delta = f - f_new
        c = cand
        f = f_new
        _, g = _objective(psi, groups, c, want_grad=True)
        step *= 1.8
        if delta <= ftol * max(1.0, abs(f)) and moved <= 1e-9 * max(1.0, float(np.linalg.norm(c))):
            return c, f, it, True
        if delta <= ftol * max(1.0, abs(f)):
            return c, f, it, True
    return c, f, max_iter, False


def trace_inverse_minimize(
    psi: np.ndarray,
    gamma: float | None = None,
    box: tuple[float, float] = (0.0, 1.0),
    budget: float | None = None,
    groups: np.ndarray | None = None,
    max_iter: int = 10_000,
    ftol: float = 1e-8,
    budget_resolution: float = 1.0,
    binary_round: bool = True,
) -> DesignResult:
    """Minimize trace of the inverse weighted Gram over box weights.

    Two modes. With `budget` set: minimize the objective subject to the
    weights summing to the budget (gamma optional, only used for the
    feasibility flag). Without `budget`: find the smallest total weight whose
    optimum meets gamma, by bisection on the budget, then round when
    binary_round is set (threshold at 0.5, then add remaining entries by
    relaxed value until the exact constraint holds).

    groups ties several rows of psi to one shared weight (row -> variable).
    """
    psi = np.asarray(psi, dtype=float)
    if psi.ndim != 2:
        raise GraphTrackError("psi must be 2-D")
    n_rows, k = psi.shape
    if groups is None:
        groups = np.arange(n_rows)
    groups = np.asarray(groups, dtype=int)
    if groups.shape != (n_rows,):
        raise GraphTrackError("groups must map each psi row to a variable")
    nvar = int(groups.max()) + 1
    lo, hi = float(box[0]), float(box[1])
    if not (0.0 <= lo < hi <= 1.0):
        raise GraphTrackError(f"box [{lo},{hi}] must sit inside [0,1] with lo < hi")

    if budget is not None:
        c, f, iters, conv = _pgd_at_budget(psi, groups, lo, hi, float(budget), None, max_iter, ftol)
        if binary_round and lo == 0.0 and hi == 1.0 and abs(budget - round(budget)) < 1e-9:
            b = int(round(budget))
            order = np.lexsort((np.arange(nvar), -c))
            rounded = np.zeros(nvar)
            rounded[order[:b]] = 1.0
        else:
            rounded = c.copy()
        achieved, _ = _objective(psi, groups, rounded)
        feasible = bool(achieved <= gamma) if gamma is not None else bool(np.isfinite(achieved))
        if not conv:
            warnings.warn(f"design solver hit the {max_iter}-iteration cap")
        return DesignResult("min_mse_for_budget", c, rounded, achieved, gamma,
                            iters, feasible, conv)

    if gamma is None:
        raise GraphTrackError("need gamma (constraint mode) or budget (budget mode)")
    full = np.full(nvar, hi)
    f_full, _ = _objective(psi, groups, full)
    if not (f_full <= gamma):
        raise Infeasible(f"even full weights give {f_full:.6g} > {gamma:.6g}")

    lo_budget, hi_budget = lo * nvar, hi * nvar
    best_c, best_f = full, f_full
    total_iters = 0
    all_conv = True
    warm = full.copy()
    while hi_budget - lo_budget > budget_resolution:
        mid = 0.5 * (lo_budget + hi_budget)
        c, f, iters, conv = _pgd_at_budget(psi, groups, lo, hi, mid, warm, max_iter, ftol)
        total_iters += iters
        all_conv &= conv
        if f <= gamma:
            hi_budget = mid
            best_c, best_f = c, f
            warm = c.copy()
        else:
            lo_budget = mid

    relaxed = best_c
    if binary_round and lo == 0.0 and hi == 1.0:
        rounded = (relaxed > 0.5).astype(float)
        achieved, _ = _objective(psi, groups, rounded)
        remaining = [int(i) for i in np.lexsort((np.arange(nvar), -relaxed)) if rounded[i] == 0.0]
        for i in remaining:
            if achieved <= gamma:
                break
            rounded[i] = 1.0
            achieved, _ = _objective(psi, groups, rounded)
    else:
        rounded = relaxed.copy()
        achieved = best_f
    feasible = bool(achieved <= gamma)
    if not all_conv:
        warnings.warn(f"design solver hit the {max_iter}-iteration cap at least once")
    return DesignResult("min_samples_for_gamma", relaxed, rounded, achieved, gamma,
                        total_iters, feasible, all_conv)


# -- concrete designs -------------------------------------------------------

def _stacked_psi(m: BandlimitedModel, horizon: int) -> np.ndarray:
    H = m.obs_matrix
    return np.vstack([H @ phi for phi in _transition_stack(m, horizon)])


def graph_time_schedule(mask: np.ndarray, n_nodes: int, n_steps: int) -> SamplingSchedule:
    """Turn a binary graph-time vector (step-major) into a schedule."""
    mask = np.asarray(mask)
    if mask.size != n_nodes * n_steps:
        raise GraphTrackError(f"mask length {mask.size} != {n_nodes * n_steps}")
    sets = [np.nonzero(mask[t * n_nodes : (t + 1) * n_nodes] > 0.5)[0] for t in range(n_steps)]
    return SamplingSchedule.deterministic(sets)


def design_deterministic(
    m: BandlimitedModel,
    horizon: int,
    sigma_v2: float | None,
    gamma: float,
    max_iter: int = 10_000,
    ftol: float = 1e-8,
) -> DesignResult:
    """Fewest graph-time samples whose exact reconstruction error meets gamma.

    The rounded vector is binary over steps-major graph-time locations; the
    reported constraint value is the exact error at the rounded design.
    """
    sigma2 = m.measurement_noise_var if sigma_v2 is None else float(sigma_v2)
    psi = _stacked_psi(m, horizon)
    res = trace_inverse_minimize(
        psi, gamma=gamma / sigma2, box=(0.0, 1.0),
        max_iter=max_iter, ftol=ftol, budget_resolution=1.0, binary_round=True,
    )
    return DesignResult(
        "deterministic", res.relaxed, res.rounded,
        res.achieved_constraint * sigma2, gamma,
        res.iterations, res.feasible, res.converged,
    )


def design_random_rates(
    m: BandlimitedModel,
    horizon: int,
    sigma_v2: float | None,
    gamma: float,
    c_min: float = 0.0,
    c_max: float = 1.0,
    max_iter: int = 10_000,
    ftol: float = 1e-8,
) -> DesignResult:
    """Smallest total Bernoulli rate whose error lower bound meets gamma.

    One rate per node, shared across steps 0..horizon; no rounding (the
    result is a probability vector).
    """
    sigma2 = m.measurement_noise_var if sigma_v2 is None else float(sigma_v2)
    if not (0.0 <= c_min < c_max <= 1.0):
        raise GraphTrackError(f"need 0 <= c_min < c_max <= 1, got [{c_min},{c_max}]")
    n = m.n_nodes
    psi = _stacked_psi(m, horizon)
    groups = np.tile(np.arange(n), horizon + 1)
    res = trace_inverse_minimize(
        psi, gamma=gamma / sigma2, box=(c_min, c_max), groups=groups,
        max_iter=max_iter, ftol=ftol,
        budget_resolution=max(1e-3, 1e-3 * n * (c_max - c_min)),
        binary_round=False,
    )
    return DesignResult(
        "random_rates", res.relaxed, res.rounded,
        res.achieved_constraint * sigma2, gamma,
        res.iterations, res.feasible, res.converged,
    )


def design_kf_step(
    fim_prior: np.ndarray,
    basis: SpectralBasis,
    freqs: FrequencySet,
    sigma_v2: float,
    gamma: float,
    mode: str = "greedy",
    obs: np.ndarray | None = None,
    rate_step: float = 0.05,
) -> DesignResult:
    """Choose this step's sampling set so the information matrix clears gamma.

    Greedy mode adds, one at a time, the node whose rank-one information
    increment lifts the smallest eigenvalue the most (ties to the lowest
    index). Relaxed mode instead raises fractional rates along the current
    weakest eigenvector; it is retained for comparison and returns a box
    vector. Raises Infeasible when even sampling everything falls short.
    """
    fim_prior = np.asarray(fim_prior, dtype=float)
    U = band_selector(basis, freqs) if obs is None else np.asarray(obs, dtype=float)
    n, d = U.shape
    if fim_prior.shape != (d, d):
        raise GraphTrackError(f"fim_prior must be ({d},{d})")
    if not (sigma_v2 > 0):
        raise GraphTrackError("sigma_v2 must be positive")

    def lam_min(F: np.ndarray) -> float:
        return float(np.linalg.eigvalsh(F)[0])

    base = lam_min(fim_prior)
    if base >= gamma:
        achieved = base
        zeros = np.zeros(n)
        return DesignResult(f"kf_step_{mode}", zeros, zeros.copy(), achieved, gamma, 0, True, True)

    full = fim_prior + (U.T @ U) / sigma_v2
    if lam_min(full) < gamma:
        raise Infeasible(f"full sampling reaches lambda_min {lam_min(full):.6g} < {gamma:.6g}")

    if mode == "greedy":
        chosen: list[int] = []
        F = fim_prior.copy()
        it = 0
        while lam_min(F) < gamma:
            it += 1
            best_val, best_n = -np.inf, None
            for cand in range(n):
                if cand in chosen:
                    continue
                val = lam_min(F + np.outer(U[cand], U[cand]) / sigma_v2)
                if val > best_val and not np.isclose(val, best_val, rtol=TIE_RTOL, atol=TIE_ATOL):
                    best_val, best_n = val, cand
            if best_n is None:
                raise Infeasible("no candidate nodes left below gamma")
            chosen.append(best_n)
            F = F + np.outer(U[best_n], U[best_n]) / sigma_v2
        indicator = np.zeros(n)
        indicator[chosen] = 1.0
        return DesignResult("kf_step_greedy", indicator, indicator.copy(),
                            lam_min(F), gamma, it, True, True)

    if mode == "relaxed":
        c = np.zeros(n)
        it = 0
        while True:
            F = fim_prior + U.T @ (c[:, None] * U) / sigma_v2
            vals, vecs = np.linalg.eigh(F)
            if vals[0] >= gamma:
                break
            it += 1
            scores = (U @ vecs[:, 0]) ** 2
            scores[c >= 1.0] = -np.inf
            c[int(np.argmax(scores))] = min(1.0, c[int(np.argmax(scores))] + rate_step)
            if it > n * int(np.ceil(1.0 / rate_step)) + 1:
                raise Infeasible("relaxed ascent exhausted the box below gamma")
        return DesignResult("kf_step_relaxed", c, c.copy(), float(vals[0]), gamma, it, True, True)

    raise GraphTrackError(f"unknown mode {mode!r}")


def greedy_steady_state(
    m: BandlimitedModel,
    budget: int,
    tol: float = 1e-10,
    max_iter: int = 100_000,
    return_history: bool = False,
):
    """Grow a constant sampling set one node at a time, each round keeping the
    candidate whose steady-state covariance trace is smallest (ties to the
    lowest node index).

    Diverging candidates are skipped; if the very first round has no
    convergent candidate and the dynamics have non-contracting modes, that is
    a detectability failure.
    """
    n = m.n_nodes
    if not (1 <= budget <= n):
        raise GraphTrackError(f"budget must lie in [1, {n}]")
    chosen: list[int] = []
    history: list[tuple[int, float]] = []
    for _ in range(budget):
        cands = [i for i in range(n) if i not in chosen]
        sets = [VertexSet.of(chosen + [c]) for c in cands]
        states = steady_state_for_sets(m, sets, tol=tol, max_iter=max_iter)
        traces = np.array([s.trace if s is not None else np.inf for s in states])
        if not np.any(np.isfinite(traces)):
            modes = np.abs(np.linalg.eigvals(m.a_tilde))
            if not chosen and np.any(modes >= 1.0 - 1e-9):
                raise DetectabilityFailure("no single node stabilizes the non-contracting modes")
            raise NotConverged("no candidate steady state converged this round")
        best = float(np.min(traces))
        pick = None
        for c, tr in zip(cands, traces):
            if tr <= best * (1.0 + TIE_RTOL) + TIE_ATOL:
                pick = c
                break
        chosen.append(pick)
        history.append((pick, best))
    result = VertexSet.of(chosen)
    if return_history:
        return result, history
    return result
