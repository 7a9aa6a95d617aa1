"""Bandlimited linear state-space models on graphs and their simulator.

States live in the spectral domain of the active band; the vertex-domain
signal is recovered through the band's basis columns. Transitions must be
frequency-decoupled: a plain model has a diagonal transition, a stacked
(two-step) model couples only the two copies of the same frequency.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import BadSchedule, DimensionMismatch, GraphTrackError, NonFinite
from .graphs import FrequencySet, SpectralBasis, band_selector, gft_basis
from .numerics import check_psd, check_symmetric
from .schedules import SamplingSchedule

DECOUPLING_TOL = 1e-10


def _noise_factor(cov: np.ndarray) -> np.ndarray:
    """Square root factor of a PSD matrix via its spectrum (handles singular)."""
    vals, vecs = np.linalg.eigh(cov)
    vals = np.clip(vals, 0.0, None)
    return vecs * np.sqrt(vals)


@dataclass(eq=False)
class BandlimitedModel:
    """Linear evolution of spectral coefficients plus sampled noisy measurements.

    a_tilde / b_tilde are (d, d) for time-invariant models or (steps, d, d)
    for time-varying ones, d being the state dimension (band size, doubled
    for stacked two-step models).
    """

    basis: SpectralBasis
    freqs: FrequencySet
    a_tilde: np.ndarray
    b_tilde: np.ndarray
    process_noise_cov: np.ndarray
    measurement_noise_var: float
    stacked: bool = False

    def __post_init__(self):
        band = len(self.freqs)
        d = 2 * band if self.stacked else band
        self.a_tilde = np.asarray(self.a_tilde, dtype=float)
        self.b_tilde = np.asarray(self.b_tilde, dtype=float)
        for name, arr in (("a_tilde", self.a_tilde), ("b_tilde", self.b_tilde)):
            if not np.all(np.isfinite(arr)):
                raise NonFinite(f"{name} contains NaN or Inf")
            if arr.ndim == 2:
                shape = arr.shape
            elif arr.ndim == 3:
                shape = arr.shape[1:]
            else:
                raise DimensionMismatch(f"{name} must be (d,d) or (steps,d,d)")
            if shape != (d, d):
                raise DimensionMismatch(f"{name} blocks must be ({d},{d}), got {shape}")
            self._check_decoupled(name, arr, band)
        if self.a_tilde.ndim != self.b_tilde.ndim or (
            self.a_tilde.ndim == 3 and len(self.a_tilde) != len(self.b_tilde)
        ):
            raise DimensionMismatch("a_tilde and b_tilde must cover the same steps")
        self.process_noise_cov = check_psd(
            np.asarray(self.process_noise_cov, dtype=float), "process_noise_cov"
        )
        if self.process_noise_cov.shape != (d, d):
            raise DimensionMismatch(
                f"process_noise_cov must be ({d},{d}), got {self.process_noise_cov.shape}"
            )
        if not (self.measurement_noise_var > 0.0 and np.isfinite(self.measurement_noise_var)):
            raise GraphTrackError("measurement_noise_var must be positive and finite")
        if max(self.freqs) >= self.basis.n_nodes:
            raise DimensionMismatch("frequency index outside the basis")

    def _check_decoupled(self, name: str, arr: np.ndarray, band: int) -> None:
        blocks = arr if arr.ndim == 3 else arr[None]
        d = blocks.shape[1]
        r, c = np.indices((d, d))
        off = (r % band) != (c % band) if self.stacked else (r != c)
        worst = float(np.max(np.abs(blocks[:, off]))) if off.any() else 0.0
        if worst > DECOUPLING_TOL:
            raise GraphTrackError(
                f"{name} couples distinct frequencies (max off-band entry {worst:.2e})"
            )

    # -- shapes -----------------------------------------------------------
    @property
    def band_size(self) -> int:
        return len(self.freqs)

    @property
    def state_dim(self) -> int:
        return 2 * self.band_size if self.stacked else self.band_size

    @property
    def bandwidth(self) -> int:
        """Effective bandwidth: the state dimension downstream modules see."""
        return self.state_dim

    @property
    def n_nodes(self) -> int:
        return self.basis.n_nodes

    @property
    def time_invariant(self) -> bool:
        return self.a_tilde.ndim == 2

    @property
    def n_defined_steps(self) -> int | None:
        return None if self.time_invariant else len(self.a_tilde)

    # -- pieces -----------------------------------------------------------
    @property
    def band_basis(self) -> np.ndarray:
        """n_nodes x band_size columns of the Fourier basis."""
        return band_selector(self.basis, self.freqs)

    @property
    def obs_matrix(self) -> np.ndarray:
        """Maps the state to the vertex-domain signal (n_nodes x state_dim)."""
        U_f = self.band_basis
        if not self.stacked:
            return U_f
        out = np.zeros((self.n_nodes, self.state_dim))
        out[:, self.band_size :] = U_f
        return out

    def a_at(self, t: int) -> np.ndarray:
        if self.time_invariant:
            return self.a_tilde
        if not (0 <= t < len(self.a_tilde)):
            raise GraphTrackError(f"transition at step {t} undefined (model has {len(self.a_tilde)})")
        return self.a_tilde[t]

    def b_at(self, t: int) -> np.ndarray:
        if self.time_invariant:
            return self.b_tilde
        if not (0 <= t < len(self.b_tilde)):
            raise GraphTrackError(f"input map at step {t} undefined (model has {len(self.b_tilde)})")
        return self.b_tilde[t]

    # -- conversions ------------------------------------------------------
    def spectral_from_vertex(self, x: np.ndarray) -> np.ndarray:
        """Band coefficients of a vertex signal; stacked models start at rest."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n_nodes,):
            raise DimensionMismatch(f"vertex signal must have length {self.n_nodes}")
        coeff = self.band_basis.T @ x
        if not self.stacked:
            return coeff
        return np.concatenate([np.zeros(self.band_size), coeff])

    def vertex_from_spectral(self, state: np.ndarray) -> np.ndarray:
        state = np.asarray(state, dtype=float)
        if state.shape[-1] != self.state_dim:
            raise DimensionMismatch(f"state must have length {self.state_dim}")
        return state @ self.obs_matrix.T

    # -- serialization ----------------------------------------------------
    def to_payload(self) -> dict:
        def encode(arr: np.ndarray) -> dict:
            blocks = arr if arr.ndim == 3 else arr[None]
            if not self.stacked:
                return {"diag": [list(np.diagonal(b)) for b in blocks]}
            return {"full": [b.tolist() for b in blocks]}

        return {
            "shift_kind": self.basis.shift_kind,
            "frequencies": list(self.freqs.indices),
            "stacked": self.stacked,
            "time_invariant": self.time_invariant,
            "a": encode(self.a_tilde),
            "b": encode(self.b_tilde),
            "process_noise_cov": self.process_noise_cov.tolist(),
            "measurement_noise_var": float(self.measurement_noise_var),
        }

    @classmethod
    def from_payload(cls, payload: dict, basis: SpectralBasis) -> "BandlimitedModel":
        if payload["shift_kind"] != basis.shift_kind:
            raise GraphTrackError(
                f"model built on {payload['shift_kind']} shift, basis is {basis.shift_kind}"
            )

        def decode(entry: dict) -> np.ndarray:
            if "diag" in entry:
                blocks = np.array([np.diag(np.asarray(d, dtype=float)) for d in entry["diag"]])
            else:
                blocks = np.array(entry["full"], dtype=float)
            return blocks[0] if (payload["time_invariant"] and len(blocks) == 1) else blocks

        return cls(
            basis=basis,
            freqs=FrequencySet.of(payload["frequencies"]),
            a_tilde=decode(payload["a"]),
            b_tilde=decode(payload["b"]),
            process_noise_cov=np.array(payload["process_noise_cov"], dtype=float),
            measurement_noise_var=float(payload["measurement_noise_var"]),
            stacked=bool(payload["stacked"]),
        )


def spectral_noise_cov(basis: SpectralBasis, freqs: FrequencySet, vertex_cov: np.ndarray) -> np.ndarray:
    """Reduce a vertex-domain noise covariance to the band: U_F^T Sigma U_F."""
    cov = check_psd(np.asarray(vertex_cov, dtype=float), "vertex_cov")
    if cov.shape != (basis.n_nodes, basis.n_nodes):
        raise DimensionMismatch("vertex covariance shape does not match the graph")
    U_f = band_selector(basis, freqs)
    return U_f.T @ cov @ U_f


def _normalize_process_noise(noise, band: int, stacked: bool) -> np.ndarray:
    """Accept None, a scalar, a band-sized matrix, or a full state-sized matrix."""
    d = 2 * band if stacked else band
    if noise is None:
        return np.zeros((d, d))
    if np.isscalar(noise):
        s = float(noise)
        if s < 0:
            raise GraphTrackError("process noise scale must be nonnegative")
        core = s * np.eye(band)
    else:
        core = np.asarray(noise, dtype=float)
        if core.shape == (d, d):
            return core
        if core.shape != (band, band):
            raise DimensionMismatch(f"process noise must be ({band},{band}) or ({d},{d})")
    if not stacked:
        return core
    out = np.zeros((d, d))
    out[band:, band:] = core  # noise drives the newest sample only
    return out


def diffusion_model(
    lap: np.ndarray,
    w: float,
    freqs: FrequencySet,
    sigma_v2: float,
    process_noise=None,
) -> BandlimitedModel:
    """Heat-diffusion dynamics: per-frequency decay exp(-w * lambda_i)."""
    if not (w > 0):
        raise GraphTrackError("diffusion rate w must be positive")
    lap = check_psd(lap, "laplacian")
    basis = gft_basis(lap, "laplacian")
    lam = basis.values[freqs.as_array()]
    a = np.diag(np.exp(-w * lam))
    noise = _normalize_process_noise(process_noise, len(freqs), stacked=False)
    return BandlimitedModel(basis, freqs, a, np.eye(len(freqs)), noise, float(sigma_v2))


def wave_model(
    lap: np.ndarray,
    c: float,
    freqs: FrequencySet,
    sigma_v2: float,
    process_noise=None,
) -> BandlimitedModel:
    """Two-step wave recursion stacked into a first-order model.

    The state holds [previous coefficients; current coefficients]; the current
    block advances via 2 - c^2 * lambda_i and the previous block shifts up.
    """
    if not (c > 0):
        raise GraphTrackError("wave speed c must be positive")
    lap = check_psd(lap, "laplacian")
    basis = gft_basis(lap, "laplacian")
    band = len(freqs)
    lam = basis.values[freqs.as_array()]
    diag = 2.0 - c**2 * lam
    if np.any(np.abs(diag) > 2.0 + 1e-12):
        warnings.warn("wave recursion unstable: |2 - c^2 lambda| exceeds 2 on the band")
    a = np.zeros((2 * band, 2 * band))
    a[:band, band:] = np.eye(band)
    a[band:, :band] = -np.eye(band)
    a[band:, band:] = np.diag(diag)
    noise = _normalize_process_noise(process_noise, band, stacked=True)
    return BandlimitedModel(basis, freqs, a, np.eye(2 * band), noise, float(sigma_v2), stacked=True)


def arma1_model(
    shift: np.ndarray,
    w: float,
    freqs: FrequencySet,
    sigma_v2: float,
    process_noise=None,
    shift_kind: str = "laplacian",
) -> BandlimitedModel:
    """First-order autoregressive recursion: per-frequency factor -w * lambda_i.

    With a constant input it converges to the filtered input when
    w < 1 / max|lambda|; a larger w only triggers a warning, not an error.
    """
    shift = check_symmetric(shift, "shift")
    basis = gft_basis(shift, shift_kind)
    lam_max = float(np.max(np.abs(basis.values)))
    if lam_max > 0 and not (0 < w < 1.0 / lam_max):
        warnings.warn(f"recursion may diverge: w={w} outside (0, {1.0 / lam_max:.4g})")
    lam = basis.values[freqs.as_array()]
    a = np.diag(-w * lam)
    noise = _normalize_process_noise(process_noise, len(freqs), stacked=False)
    return BandlimitedModel(basis, freqs, a, np.eye(len(freqs)), noise, float(sigma_v2))


def transition_product(m: BandlimitedModel, t: int, tau: int) -> np.ndarray:
    """State transition from step tau to step t: A_{t-1} ... A_tau.

    Identity when t == tau, zero when t < tau.
    """
    if t < 0 or tau < 0:
        raise GraphTrackError("step indices must be nonnegative")
    d = m.state_dim
    if t < tau:
        return np.zeros((d, d))
    out = np.eye(d)
    for s in range(tau, t):
        out = m.a_at(s) @ out
    return out


@dataclass(eq=False)
class Trajectory:
    """Simulated run: vertex states, spectral states, masked measurements,
    and the (realized) deterministic schedule that produced them."""

    states: np.ndarray  # (T+1, n_nodes)
    spectral_states: np.ndarray  # (T+1, state_dim)
    measurements: np.ndarray  # (T+1, n_nodes), zero off the sampled sets
    schedule: SamplingSchedule


def simulate(
    m: BandlimitedModel,
    x0_spectral: np.ndarray,
    inputs: np.ndarray | None,
    horizon: int,
    schedule: SamplingSchedule,
    rng_seed: int | np.random.Generator = 0,
) -> Trajectory:
    """Run the spectral recursion for `horizon` steps and sample measurements.

    Draw order per step: process noise (steps 1..T, when the covariance is
    nonzero), then the Bernoulli set realization (random schedules only),
    then the full-length measurement noise vector, masked to the step's set.
    """
    d, n = m.state_dim, m.n_nodes
    x0 = np.asarray(x0_spectral, dtype=float)
    if x0.shape != (d,):
        raise DimensionMismatch(f"x0_spectral must have length {d}")
    if horizon < 0:
        raise GraphTrackError("horizon must be nonnegative")
    steps = horizon + 1
    if inputs is None:
        u = np.zeros((max(horizon, 0), d))
    else:
        u = np.atleast_2d(np.asarray(inputs, dtype=float))
        if u.shape != (horizon, d):
            raise DimensionMismatch(f"inputs must be ({horizon},{d}), got {u.shape}")
    if schedule.mode == "bernoulli" and schedule.rates.size != n:
        raise BadSchedule(f"rates length {schedule.rates.size} vs {n} nodes")
    schedule.check_steps(steps) if schedule.mode == "deterministic" else None

    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    noisy_process = bool(np.any(m.process_noise_cov))
    noise_fac = _noise_factor(m.process_noise_cov) if noisy_process else None
    sigma_v = float(np.sqrt(m.measurement_noise_var))
    H = m.obs_matrix

    spectral = np.zeros((steps, d))
    spectral[0] = x0
    states = np.zeros((steps, n))
    measurements = np.zeros((steps, n))
    realized: list[VertexSetLike] = []

    for t in range(steps):
        if t > 0:
            spectral[t] = m.a_at(t - 1) @ spectral[t - 1] + m.b_at(t - 1) @ u[t - 1]
            if noisy_process:
                spectral[t] += noise_fac @ rng.standard_normal(d)
        states[t] = H @ spectral[t]
        if schedule.mode == "bernoulli":
            mask = np.nonzero(rng.random(n) < schedule.rates)[0]
        else:
            mask = schedule.set_at(t).as_array()
        v = sigma_v * rng.standard_normal(n)
        y = np.zeros(n)
        y[mask] = states[t][mask] + v[mask]
        measurements[t] = y
        realized.append(mask)

    return Trajectory(
        states=states,
        spectral_states=spectral,
        measurements=measurements,
        schedule=SamplingSchedule.deterministic(realized),
    )


VertexSetLike = np.ndarray
