"""End-to-end experiment pipeline: config in, report out.

A single JSON-mirrored config describes the graph, the dynamics, the band,
the noise, the sampling schedule (fixed, random, or designed), and the task
(observe the initial state, track with a filter, or just simulate). run()
is pure: it returns the report and artifacts; the CLI does the file writing.

Seeding: stream for design-stage randomness is spawn_key (0,); trial i uses
spawn_key (1, i) off the root seed, so trial streams never depend on worker
count or execution order.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .dataio import load_coords_csv, load_edges_csv, load_schedule_json, load_signals_csv
from .design import (
    DesignResult,
    design_deterministic,
    design_kf_step,
    design_random_rates,
    graph_time_schedule,
    greedy_steady_state,
)
from .errors import GraphTrackError, NotObservable, ParseError, SingularExpectedGram
from .graphs import (
    FrequencySet,
    Graph,
    SpectralBasis,
    VertexSet,
    adjacency,
    build_grid_graph,
    build_knn_graph,
    gft_basis,
    laplacian,
    select_frequencies,
)
from .kalman import kf_run, solve_dare, ss_kf_run
from .metrics import average_snr, nmse, to_db
from .models import BandlimitedModel, Trajectory, arma1_model, diffusion_model, simulate, wave_model
from .numerics import pseudo_inverse, symmetrize
from .observability import (
    ls_observe,
    mse_deterministic,
    mse_lower_bound_random,
    necessary_count_random,
    undersampling_probability,
)
from .schedules import SamplingSchedule

TAIL_FRACTION = 0.2


# -- config -----------------------------------------------------------------

@dataclass
class GraphSpec:
    kind: str  # "grid" | "edges_csv" | "coords_csv"
    rows: int | None = None
    cols: int | None = None
    path: str | None = None
    k: int | None = None
    weighting: str = "binary"
    sigma: float | None = None


@dataclass
class ModelSpec:
    kind: str  # "diffusion" | "wave" | "arma"
    rate: float  # diffusion w, wave speed c, or recursion weight


@dataclass
class FrequencySpec:
    policy: str  # "lowest" | "energy_fraction"
    k: int | None = None
    fraction: float | None = None
    reference: str = "initial_state"  # or a CSV path


@dataclass
class NoiseSpec:
    sigma_v2: float
    sigma_w2: float = 0.0  # vertex-domain white scale; reduces to the band unchanged


@dataclass
class InitialStateSpec:
    kind: str = "ones"  # "ones" | "left_column" | "csv" | "spectral_gaussian"
    path: str | None = None
    scale: float = 1.0


@dataclass
class ScheduleSpec:
    kind: str
    # designed_deterministic | designed_random | designed_kf_step |
    # designed_greedy_ss | random_uniform | bernoulli | explicit | full
    gamma: float | None = None
    budget: int | None = None
    size: int | None = None
    rates: Any = None  # scalar or list for "bernoulli"
    c_min: float = 0.0
    c_max: float = 1.0
    path: str | None = None


@dataclass
class KfInitSpec:
    state: str = "zeros"  # "zeros" | "ones" | "truth"
    cov: Any = "process_noise"  # "process_noise" | positive scalar


@dataclass
class ExperimentConfig:
    graph: GraphSpec
    model: ModelSpec
    frequencies: FrequencySpec
    noise: NoiseSpec
    schedule: ScheduleSpec
    task: str  # "observe" | "track_kf" | "track_ss_kf" | "simulate"
    horizon: int
    trials: int = 1
    seed: int = 0
    shift_kind: str = "laplacian"
    initial_state: InitialStateSpec = field(default_factory=InitialStateSpec)
    kf_init: KfInitSpec = field(default_factory=KfInitSpec)

    def __post_init__(self):
        if self.task not in ("observe", "track_kf", "track_ss_kf", "simulate"):
            raise GraphTrackError(f"unknown task {self.task!r}")
        if self.horizon < 0:
            raise GraphTrackError("horizon must be nonnegative")
        if self.trials < 1:
            raise GraphTrackError("trials must be at least 1")
        if self.seed < 0:
            raise GraphTrackError("seed must be a nonnegative integer")

    def to_payload(self) -> dict:
        def plain(obj):
            if hasattr(obj, "__dataclass_fields__"):
                return {k: plain(getattr(obj, k)) for k in obj.__dataclass_fields__}
            if isinstance(obj, (list, tuple)):
                return [plain(v) for v in obj]
            return obj

        return plain(self)

    @classmethod
    def from_payload(cls, payload: dict) -> "ExperimentConfig":
        try:
            return cls(
                graph=GraphSpec(**payload["graph"]),
                model=ModelSpec(**payload["model"]),
                frequencies=FrequencySpec(**payload["frequencies"]),
                noise=NoiseSpec(**payload["noise"]),
                schedule=ScheduleSpec(**payload["schedule"]),
                task=payload["task"],
                horizon=int(payload["horizon"]),
                trials=int(payload.get("trials", 1)),
                seed=int(payload.get("seed", 0)),
                shift_kind=payload.get("shift_kind", "laplacian"),
                initial_state=InitialStateSpec(**payload.get("initial_state", {})),
                kf_init=KfInitSpec(**payload.get("kf_init", {})),
            )
        except (KeyError, TypeError) as exc:
            raise ParseError(f"bad config: {exc}") from exc


@dataclass(eq=False)
class RunReport:
    """Everything a run asserts about itself, JSON-ready via to_payload."""

    task: str
    n_nodes: int
    band: list[int]
    bandwidth: int
    horizon: int
    trials: int
    seed: int
    schedule: dict
    nmse: float | None
    nmse_db: float | None
    nmse_series: list[float] | None
    steady_state_nmse: float | None
    theoretical: dict
    design: dict | None
    failed_trials: int
    average_snr_db: float | None
    wall_clock_s: float
    config: dict

    def to_payload(self) -> dict:
        return {
            "task": self.task,
            "n_nodes": self.n_nodes,
            "band": self.band,
            "bandwidth": self.bandwidth,
            "horizon": self.horizon,
            "trials": self.trials,
            "seed": self.seed,
            "schedule": self.schedule,
            "nmse": self.nmse,
            "nmse_db": self.nmse_db,
            "nmse_series": self.nmse_series,
            "steady_state_nmse": self.steady_state_nmse,
            "steady_state_nmse_db": None if self.steady_state_nmse is None else to_db(self.steady_state_nmse),
            "theoretical": self.theoretical,
            "design": self.design,
            "failed_trials": self.failed_trials,
            "average_snr_db": self.average_snr_db,
            "wall_clock_s": self.wall_clock_s,
            "config": self.config,
        }


@dataclass(eq=False)
class RunOutput:
    report: RunReport
    schedule: SamplingSchedule
    trace: list[dict] | None = None  # rows t, nmse_db, tr_p_post, samples
    trajectory: Trajectory | None = None
    design: DesignResult | None = None


# -- pipeline pieces ----------------------------------------------------------

def _trial_rng(seed: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(1, trial)))


def _design_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(0,)))


def build_graph(spec: GraphSpec) -> Graph:
    if spec.kind == "grid":
        if not spec.rows or not spec.cols:
            raise GraphTrackError("grid graph needs rows and cols")
        return build_grid_graph(spec.rows, spec.cols)
    if spec.kind == "edges_csv":
        if not spec.path:
            raise GraphTrackError("edges_csv graph needs a path")
        return load_edges_csv(spec.path)
    if spec.kind == "coords_csv":
        if not spec.path or not spec.k:
            raise GraphTrackError("coords_csv graph needs a path and k")
        return build_knn_graph(load_coords_csv(spec.path), spec.k, spec.weighting, spec.sigma)
    raise GraphTrackError(f"unknown graph kind {spec.kind!r}")


def _initial_vertex_state(cfg: ExperimentConfig, g: Graph, basis: SpectralBasis,
                          rng: np.random.Generator) -> np.ndarray:
    spec = cfg.initial_state
    n = g.n_nodes
    if spec.kind == "ones":
        return spec.scale * np.ones(n)
    if spec.kind == "left_column":
        if cfg.graph.kind != "grid":
            raise GraphTrackError("left_column initial state needs a grid graph")
        x = np.zeros(n)
        x[[r * cfg.graph.cols for r in range(cfg.graph.rows)]] = spec.scale
        return x
    if spec.kind == "csv":
        if not spec.path:
            raise GraphTrackError("csv initial state needs a path")
        sig = load_signals_csv(spec.path, expected_nodes=n)
        return sig[0]
    if spec.kind == "spectral_gaussian":
        coeffs = spec.scale * rng.standard_normal(n)
        return basis.vectors @ coeffs
    raise GraphTrackError(f"unknown initial state kind {spec.kind!r}")


def _select_band(cfg: ExperimentConfig, basis: SpectralBasis, x0: np.ndarray) -> FrequencySet:
    spec = cfg.frequencies
    if spec.policy == "lowest":
        return select_frequencies(basis, "lowest", k=spec.k)
    if spec.reference == "initial_state":
        ref = x0[None, :]
    else:
        ref = load_signals_csv(spec.reference, expected_nodes=basis.n_nodes)
    return select_frequencies(basis, "energy_fraction", fraction=spec.fraction, reference_signals=ref)


def build_model(cfg: ExperimentConfig, shift: np.ndarray, freqs: FrequencySet) -> BandlimitedModel:
    kind = cfg.model.kind
    noise = cfg.noise.sigma_w2 if cfg.noise.sigma_w2 > 0 else None
    if kind == "diffusion":
        return diffusion_model(shift, cfg.model.rate, freqs, cfg.noise.sigma_v2, noise)
    if kind == "wave":
        return wave_model(shift, cfg.model.rate, freqs, cfg.noise.sigma_v2, noise)
    if kind == "arma":
        return arma1_model(shift, cfg.model.rate, freqs, cfg.noise.sigma_v2, noise,
                           shift_kind=cfg.shift_kind)
    raise GraphTrackError(f"unknown model kind {kind!r}")


def _kf_step_schedule(m: BandlimitedModel, cfg: ExperimentConfig, p0: np.ndarray) -> tuple[SamplingSchedule, None]:
    """Closed-loop per-step design: each step's set lifts the information
    matrix past gamma given everything selected so far."""
    gamma = cfg.schedule.gamma
    if gamma is None:
        raise GraphTrackError("designed_kf_step schedule needs gamma")
    steps = cfg.horizon + 1
    # step 0 is the filter's initialization: no measurement update, no samples
    sets: list[np.ndarray] = [np.empty(0, dtype=int)]
    fim = pseudo_inverse(p0)
    A, Q = m.a_tilde, m.process_noise_cov
    for t in range(1, steps):
        prior_term = pseudo_inverse(A @ pseudo_inverse(fim) @ A.T + Q)
        res = design_kf_step(prior_term, m.basis, m.freqs, m.measurement_noise_var, gamma,
                             obs=m.obs_matrix)
        idx = np.nonzero(res.rounded > 0.5)[0]
        sets.append(idx)
        H_s = m.obs_matrix[idx] if idx.size else m.obs_matrix[:0]
        fim = prior_term + (H_s.T @ H_s) / m.measurement_noise_var if idx.size else prior_term
    return SamplingSchedule.deterministic(sets), None


def build_schedule(
    cfg: ExperimentConfig, m: BandlimitedModel, p0: np.ndarray | None = None,
) -> tuple[SamplingSchedule, DesignResult | None]:
    spec = cfg.schedule
    n = m.n_nodes
    steps = cfg.horizon + 1
    rng = _design_rng(cfg.seed)
    if spec.kind == "full":
        return SamplingSchedule.full(n, steps), None
    if spec.kind == "bernoulli":
        rates = np.full(n, float(spec.rates)) if np.isscalar(spec.rates) else np.asarray(spec.rates, dtype=float)
        return SamplingSchedule.bernoulli(rates), None
    if spec.kind == "random_uniform":
        if not spec.size or not (1 <= spec.size <= n):
            raise GraphTrackError(f"random_uniform schedule needs size in [1,{n}]")
        sets = [rng.choice(n, size=spec.size, replace=False) for _ in range(steps)]
        return SamplingSchedule.deterministic(sets), None
    if spec.kind == "explicit":
        if not spec.path:
            raise GraphTrackError("explicit schedule needs a path")
        sched = load_schedule_json(spec.path)
        return sched, None
    if spec.kind == "designed_deterministic":
        if spec.gamma is None:
            raise GraphTrackError("designed_deterministic schedule needs gamma")
        res = design_deterministic(m, cfg.horizon, cfg.noise.sigma_v2, spec.gamma)
        return graph_time_schedule(res.rounded, n, steps), res
    if spec.kind == "designed_random":
        if spec.gamma is None:
            raise GraphTrackError("designed_random schedule needs gamma")
        res = design_random_rates(m, cfg.horizon, cfg.noise.sigma_v2, spec.gamma,
                                  spec.c_min, spec.c_max)
        return SamplingSchedule.bernoulli(res.rounded), res
    if spec.kind == "designed_greedy_ss":
        if not spec.budget:
            raise GraphTrackError("designed_greedy_ss schedule needs budget")
        nodes = greedy_steady_state(m, spec.budget)
        return SamplingSchedule.constant(nodes, steps), None
    if spec.kind == "designed_kf_step":
        if p0 is None:
            raise GraphTrackError("kf-step design needs the filter prior covariance")
        return _kf_step_schedule(m, cfg, p0)
    raise GraphTrackError(f"unknown schedule kind {spec.kind!r}")


def _kf_prior(cfg: ExperimentConfig, m: BandlimitedModel, x0_true: np.ndarray):
    d = m.state_dim
    spec = cfg.kf_init
    if spec.state == "zeros":
        x0 = np.zeros(d)
    elif spec.state == "ones":
        x0 = np.ones(d)
    elif spec.state == "truth":
        x0 = x0_true.copy()
    else:
        raise GraphTrackError(f"unknown kf_init state {spec.state!r}")
    if spec.cov == "process_noise":
        p0 = m.process_noise_cov if np.any(m.process_noise_cov) else np.eye(d)
    else:
        p0 = float(spec.cov) * np.eye(d)
    return x0, p0


# -- the runner ---------------------------------------------------------------

def run(cfg: ExperimentConfig) -> RunOutput:
    start = time.perf_counter()
    g = build_graph(cfg.graph)
    shift = laplacian(g) if cfg.shift_kind == "laplacian" else adjacency(g)
    basis = gft_basis(shift, cfg.shift_kind)
    x0_vertex = _initial_vertex_state(cfg, g, basis, _design_rng(cfg.seed))
    freqs = _select_band(cfg, basis, x0_vertex)
    m = build_model(cfg, shift, freqs)
    x0_spectral = m.spectral_from_vertex(x0_vertex)
    kf_x0, kf_p0 = _kf_prior(cfg, m, x0_spectral)
    sched, design = build_schedule(cfg, m, p0=kf_p0)

    theoretical: dict[str, float | None] = {}
    if sched.mode == "deterministic":
        try:
            theoretical["ls_mse"] = mse_deterministic(m, sched, cfg.horizon)
        except (NotObservable, GraphTrackError):
            theoretical["ls_mse"] = None
    else:
        try:
            theoretical["ls_mse_lower_bound"] = mse_lower_bound_random(m, sched.rates, cfg.horizon)
        except SingularExpectedGram:
            theoretical["ls_mse_lower_bound"] = None
        theoretical["undersampling_probability_poisson"] = undersampling_probability(
            sched.rates, cfg.horizon, m.state_dim, method="poisson")
        theoretical["undersampling_probability_exact"] = undersampling_probability(
            sched.rates, cfg.horizon, m.state_dim, method="exact")
        theoretical["necessary_count"] = necessary_count_random(m.state_dim, cfg.horizon)

    if cfg.task == "simulate":
        traj = simulate(m, x0_spectral, None, cfg.horizon, sched, _trial_rng(cfg.seed, 0))
        out = _finish(cfg, m, sched, design, theoretical, None, None, None, None, 0, traj, start)
        return out

    if cfg.task == "observe":
        return _run_observe(cfg, m, x0_spectral, sched, design, theoretical, start)
    if cfg.task == "track_kf":
        return _run_track_kf(cfg, m, x0_spectral, kf_x0, kf_p0, sched, design, theoretical, start)
    if cfg.task == "track_ss_kf":
        return _run_track_ss(cfg, m, x0_spectral, kf_x0, sched, design, theoretical, start)
    raise GraphTrackError(f"unknown task {cfg.task!r}")


def _run_observe(cfg, m, x0_spectral, sched, design, theoretical, start) -> RunOutput:
    truth_vertex = m.vertex_from_spectral(x0_spectral)
    estimates = []
    failed = 0
    for trial in range(cfg.trials):
        rng = _trial_rng(cfg.seed, trial)
        traj = simulate(m, x0_spectral, None, cfg.horizon, sched, rng)
        try:
            xhat = ls_observe(traj.measurements, None, m, traj.schedule, cfg.horizon)
        except NotObservable:
            failed += 1
            continue
        estimates.append(m.vertex_from_spectral(xhat))
    if estimates:
        est = np.array(estimates)
        ref = np.tile(truth_vertex, (len(estimates), 1))
        value = nmse(est, ref)
        spectral_mse = float(np.mean([np.sum((m.spectral_from_vertex(e) - x0_spectral) ** 2)
                                      for e in est])) if not m.stacked else None
    else:
        value = None
        spectral_mse = None
    theoretical["empirical_initial_state_mse"] = spectral_mse
    snr = average_snr(truth_vertex[None, :], m.measurement_noise_var)
    return _finish(cfg, m, sched, design, theoretical, value, None, None, snr, failed, None, start)


def _tracking_series(cfg, m, truth_stack, est_stack):
    """Per-step NMSE aggregated over trials, plus totals and the tail value."""
    err = ((est_stack - truth_stack) ** 2).sum(axis=2).sum(axis=0)  # per step
    ref = (truth_stack**2).sum(axis=2).sum(axis=0)
    series = [float(e / r) if r > 0 else float("nan") for e, r in zip(err, ref)]
    total = float(err.sum() / ref.sum()) if ref.sum() > 0 else None
    tail_len = max(1, int(TAIL_FRACTION * len(series)))
    tail_err = err[-tail_len:].sum()
    tail_ref = ref[-tail_len:].sum()
    tail = float(tail_err / tail_ref) if tail_ref > 0 else None
    return series, total, tail


def _run_track_kf(cfg, m, x0_spectral, kf_x0, kf_p0, sched, design, theoretical, start) -> RunOutput:
    steps = cfg.horizon + 1
    n = m.n_nodes
    truth = np.zeros((cfg.trials, steps, n))
    est = np.zeros((cfg.trials, steps, n))
    tr_p = np.zeros((cfg.trials, steps))
    samples = np.zeros((cfg.trials, steps))
    H = m.obs_matrix
    for trial in range(cfg.trials):
        rng = _trial_rng(cfg.seed, trial)
        traj = simulate(m, x0_spectral, None, cfg.horizon, sched, rng)
        states = kf_run(m, traj.schedule, traj.measurements, x0_guess=kf_x0, p0=kf_p0)
        truth[trial] = traj.states
        est[trial] = np.array([st.x_post for st in states]) @ H.T
        tr_p[trial] = [float(np.trace(st.p_post)) for st in states]
        samples[trial] = [len(traj.schedule.set_at(t)) for t in range(steps)]
    series, total, tail = _tracking_series(cfg, m, truth, est)
    trace = [
        {
            "t": t,
            "nmse_db": to_db(series[t]) if series[t] == series[t] else float("nan"),
            "tr_p_post": float(tr_p[:, t].mean()),
            "samples": float(samples[:, t].mean()),
        }
        for t in range(steps)
    ]
    snr = average_snr(truth.reshape(-1, n), m.measurement_noise_var)
    return _finish(cfg, m, sched, design, theoretical, total, series, tail, snr, 0, None, start, trace)


def _run_track_ss(cfg, m, x0_spectral, kf_x0, sched, design, theoretical, start) -> RunOutput:
    if sched.mode != "deterministic":
        raise GraphTrackError("steady-state tracking needs a constant deterministic schedule")
    sets = {s.indices for s in sched.sets}
    if len(sets) != 1:
        raise GraphTrackError("steady-state tracking needs the same set at every step")
    nodes = VertexSet(sets.pop())
    steady = solve_dare(m, nodes)
    H = m.obs_matrix
    idx = nodes.as_array()
    p_post = symmetrize(steady.p_inf - steady.k_inf @ H @ steady.p_inf)
    theoretical["tr_p_inf_prior"] = steady.trace
    theoretical["tr_p_inf_post"] = float(np.trace(p_post))

    steps = cfg.horizon + 1
    n = m.n_nodes
    truth = np.zeros((cfg.trials, steps, n))
    est = np.zeros((cfg.trials, steps, n))
    for trial in range(cfg.trials):
        rng = _trial_rng(cfg.seed, trial)
        traj = simulate(m, x0_spectral, None, cfg.horizon, sched, rng)
        xs, _ = ss_kf_run(m, nodes, kf_x0, traj.measurements, steady=steady)
        truth[trial] = traj.states
        est[trial] = xs @ H.T
    series, total, tail = _tracking_series(cfg, m, truth, est)
    trace = [
        {
            "t": t,
            "nmse_db": to_db(series[t]) if series[t] == series[t] else float("nan"),
            "tr_p_post": float(np.trace(p_post)),
            "samples": float(idx.size),
        }
        for t in range(steps)
    ]
    snr = average_snr(truth.reshape(-1, n), m.measurement_noise_var)
    return _finish(cfg, m, sched, design, theoretical, total, series, tail, snr, 0, None, start, trace)


def _finish(cfg, m, sched, design, theoretical, value, series, tail, snr, failed,
            traj, start, trace=None) -> RunOutput:
    report = RunReport(
        task=cfg.task,
        n_nodes=m.n_nodes,
        band=list(m.freqs.indices),
        bandwidth=m.state_dim,
        horizon=cfg.horizon,
        trials=cfg.trials,
        seed=cfg.seed,
        schedule=sched.to_payload(),
        nmse=value,
        nmse_db=None if value is None else to_db(value),
        nmse_series=series,
        steady_state_nmse=tail,
        theoretical=theoretical,
        design=None if design is None else design.to_payload(),
        failed_trials=failed,
        average_snr_db=snr,
        wall_clock_s=time.perf_counter() - start,
        config=cfg.to_payload(),
    )
    return RunOutput(report=report, schedule=sched, trace=trace, trajectory=traj, design=design)
