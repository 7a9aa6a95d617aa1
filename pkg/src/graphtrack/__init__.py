"""Observation, tracking and sampling design for bandlimited graph processes."""

from .errors import (
    BadK,
    BadSchedule,
    DetectabilityFailure,
    DimensionMismatch,
    Divergent,
    DuplicatePoints,
    GraphTrackError,
    InconsistentNodeCount,
    Infeasible,
    NoReference,
    NonFinite,
    NonPSD,
    NonSymmetric,
    NotConverged,
    NotObservable,
    ParseError,
    SingularExpectedGram,
    ZeroNoise,
    ZeroReference,
)
from .graphs import (
    FrequencySet,
    Graph,
    SpectralBasis,
    VertexSet,
    adjacency,
    band_selector,
    build_grid_graph,
    build_knn_graph,
    gft_basis,
    laplacian,
    select_frequencies,
    transform,
    vertex_selector,
)
from .numerics import (
    EigenPair,
    check_psd,
    check_symmetric,
    pseudo_inverse,
    spectral_apply,
    spectral_norm,
    sym_eigendecompose,
    symmetrize,
)
from .schedules import SamplingSchedule
from .models import (
    BandlimitedModel,
    Trajectory,
    arma1_model,
    diffusion_model,
    simulate,
    spectral_noise_cov,
    transition_product,
    wave_model,
)
from .observability import (
    ObservabilityReport,
    input_response,
    ls_observe,
    mse_deterministic,
    mse_lower_bound_random,
    necessary_count_random,
    observability_matrix,
    observability_test,
    poisson_gap_bound,
    undersampling_probability,
)
from .design import (
    DesignResult,
    design_deterministic,
    design_kf_step,
    design_random_rates,
    graph_time_schedule,
    greedy_steady_state,
    trace_inverse_minimize,
)
from .kalman import (
    DetectabilityReport,
    FilterState,
    SteadyState,
    detectability_check,
    fim_step,
    kf_init,
    kf_run,
    kf_step,
    kf_step_sequential,
    solve_dare,
    ss_kf_run,
    steady_state_for_sets,
)
from .metrics import average_snr, average_snr_per_frequency, nmse, nmse_db, to_db
from .dataio import (
    load_coords_csv,
    load_edges_csv,
    load_schedule_json,
    load_signals_csv,
    write_edges_csv,
    write_schedule_json,
    write_signals_csv,
)
from .experiment import ExperimentConfig, RunOutput, RunReport, run

__version__ = "0.1.0"
