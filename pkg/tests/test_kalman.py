import warnings

import numpy as np
import pytest

from graphtrack import (
    DimensionMismatch,
    Divergent,
    FrequencySet,
    Graph,
    GraphTrackError,
    NotConverged,
    SamplingSchedule,
    VertexSet,
    BandlimitedModel,
    detectability_check,
    diffusion_model,
    fim_step,
    gft_basis,
    kf_init,
    kf_run,
    kf_step,
    kf_step_sequential,
    laplacian,
    pseudo_inverse,
    simulate,
    solve_dare,
    ss_kf_run,
    steady_state_for_sets,
    wave_model,
)
from conftest import path_graph, random_geometric


def make_model(n=8, band=3, w=0.4, seed=0, sigma_v2=0.1, q=1e-3):
    g = random_geometric(n, 3, seed)
    return diffusion_model(laplacian(g), w, FrequencySet.of(range(band)), sigma_v2, q)


def one_node_model(a=1.0, q=1.0, r=1.0):
    basis = gft_basis(np.zeros((1, 1)))
    return BandlimitedModel(basis, FrequencySet.of([0]), np.array([[a]]),
                            np.eye(1), np.array([[q]]), r)


# -- single step ---------------------------------------------------------------

def test_kf_init_state():
    m = make_model()
    s = kf_init(m, np.zeros(3), np.eye(3))
    assert s.t == 0
    assert np.allclose(s.p_post, np.eye(3))
    assert np.allclose(s.fim, np.eye(3))
    assert s.gain is None


def test_empty_set_is_pure_prediction():
    m = make_model()
    s0 = kf_init(m, np.ones(3), 0.5 * np.eye(3))
    s1 = kf_step(s0, m, None, np.zeros(8), VertexSet.of([]))
    A, Q = m.a_tilde, m.process_noise_cov
    assert np.allclose(s1.x_post, A @ np.ones(3))
    assert np.allclose(s1.p_post, A @ (0.5 * np.eye(3)) @ A.T + Q)
    assert np.allclose(s1.p_post, s1.p_prior)


def test_five_term_update_matches_joseph_form():
    """The expanded covariance update equals the Joseph-stabilized form."""
    m = make_model(n=9, band=3, seed=1)
    rng = np.random.default_rng(2)
    s0 = kf_init(m, rng.standard_normal(3), np.diag([0.5, 1.0, 2.0]))
    y = rng.standard_normal(9)
    nodes = VertexSet.of([0, 2, 5, 8])
    s1 = kf_step(s0, m, None, y, nodes)

    A, Q = m.a_tilde, m.process_noise_cov
    H = m.obs_matrix[nodes.as_array()]
    P_prior = A @ s0.p_post @ A.T + Q
    S = H @ P_prior @ H.T + 0.1 * np.eye(4)
    K = P_prior @ H.T @ np.linalg.inv(S)
    IKH = np.eye(3) - K @ H
    joseph = IKH @ P_prior @ IKH.T + 0.1 * K @ K.T
    assert np.allclose(s1.p_post, joseph, atol=1e-12)
    assert np.allclose(s1.x_post, A @ s0.x_post + K @ (y[nodes.as_array()] - H @ (A @ s0.x_post)))


def test_gain_embedded_full_width():
    m = make_model()
    s0 = kf_init(m, np.zeros(3), np.eye(3))
    nodes = VertexSet.of([1, 4])
    s1 = kf_step(s0, m, None, np.ones(8), nodes)
    assert s1.gain.shape == (3, 8)
    off = [i for i in range(8) if i not in (1, 4)]
    assert np.all(s1.gain[:, off] == 0.0)
    assert np.linalg.matrix_rank(s1.gain) <= min(2, 3)


def test_covariance_shrinks_with_measurements():
    m = make_model()
    s0 = kf_init(m, np.zeros(3), np.eye(3))
    s1 = kf_step(s0, m, None, np.ones(8), VertexSet.of([0, 1, 2, 3]))
    diff = s1.p_prior - s1.p_post
    assert np.all(np.linalg.eigvalsh(diff) >= -1e-9)
    assert np.trace(s1.p_post) <= np.trace(s1.p_prior) + 1e-9


def test_posterior_stays_symmetric_psd():
    m = make_model(n=10, band=4, seed=3)
    rng = np.random.default_rng(4)
    s = kf_init(m, np.zeros(4), np.eye(4))
    for t in range(1, 30):
        nodes = VertexSet.of(rng.choice(10, size=3, replace=False))
        s = kf_step(s, m, None, rng.standard_normal(10), nodes)
        assert np.allclose(s.p_post, s.p_post.T)
        assert np.all(np.linalg.eigvalsh(s.p_post) >= -1e-9)


def test_sequential_matches_batch():
    m = make_model(n=9, band=3, seed=5)
    rng = np.random.default_rng(6)
    s_batch = kf_init(m, np.zeros(3), np.eye(3))
    s_seq = kf_init(m, np.zeros(3), np.eye(3))
    for t in range(1, 11):
        y = rng.standard_normal(9)
        nodes = VertexSet.of(rng.choice(9, size=int(rng.integers(0, 5)), replace=False))
        s_batch = kf_step(s_batch, m, None, y, nodes)
        s_seq = kf_step_sequential(s_seq, m, None, y, nodes)
        assert np.allclose(s_seq.x_post, s_batch.x_post, atol=1e-8)
        assert np.allclose(s_seq.p_post, s_batch.p_post, atol=1e-8)


def test_fim_inverse_equals_posterior_covariance():
    m = make_model(n=9, band=3, seed=7)
    rng = np.random.default_rng(8)
    s = kf_init(m, np.zeros(3), np.diag([0.4, 0.9, 1.5]))
    fim = s.fim
    assert np.allclose(np.linalg.inv(fim), s.p_post)
    for t in range(1, 15):
        nodes = VertexSet.of(rng.choice(9, size=3, replace=False))
        s = kf_step(s, m, None, rng.standard_normal(9), nodes)
        fim = fim_step(fim, m, nodes, t=t)
        assert np.allclose(np.linalg.inv(fim), s.p_post, atol=1e-9)
        assert np.allclose(fim, s.fim, atol=1e-9)


def test_fim_information_identity():
    """Posterior information = prior-prediction information + H^T H / sigma^2."""
    m = make_model(n=8, band=2, seed=9)
    s0 = kf_init(m, np.zeros(2), np.eye(2))
    nodes = VertexSet.of([1, 3, 6])
    s1 = kf_step(s0, m, None, np.ones(8), nodes)
    H = m.obs_matrix[nodes.as_array()]
    want = np.linalg.inv(s1.p_prior) + H.T @ H / 0.1
    assert np.allclose(np.linalg.inv(s1.p_post), want, atol=1e-8)


def test_inputs_enter_prediction():
    m = make_model(n=8, band=3, seed=10)
    s0 = kf_init(m, np.ones(3), np.eye(3))
    u = np.array([0.5, -0.2, 0.1])
    s1 = kf_step(s0, m, u, np.zeros(8), VertexSet.of([]))
    assert np.allclose(s1.x_post, m.a_tilde @ np.ones(3) + u)


# -- whole runs ------------------------------------------------------------------

def test_kf_run_ignores_step_zero_measurement():
    m = make_model(n=8, band=3, seed=11)
    sched = SamplingSchedule.constant([0, 1, 2, 3], 5)
    traj = simulate(m, np.ones(3), None, 4, sched, rng_seed=12)
    y2 = traj.measurements.copy()
    y2[0] = 123.0
    a = kf_run(m, sched, traj.measurements)
    b = kf_run(m, sched, y2)
    assert np.allclose(a[-1].x_post, b[-1].x_post)
    assert len(a) == 5
    assert [s.t for s in a] == list(range(5))


def test_kf_run_tracks_noiseless_truth():
    m = diffusion_model(laplacian(random_geometric(8, 3, 13)), 0.3,
                        FrequencySet.of([0, 1]), 1e-10, None)
    sched = SamplingSchedule.constant([0, 2, 4, 6], 30)
    traj = simulate(m, np.array([1.0, -0.7]), None, 29, sched, rng_seed=14)
    states = kf_run(m, sched, traj.measurements, x0_guess=np.zeros(2), p0=np.eye(2))
    err = np.linalg.norm(states[-1].x_post - traj.spectral_states[-1])
    assert err <= 1e-4


def test_kf_run_sequential_flag():
    m = make_model(n=8, band=2, seed=15)
    sched = SamplingSchedule.constant([0, 3, 5], 6)
    traj = simulate(m, np.ones(2), None, 5, sched, rng_seed=16)
    a = kf_run(m, sched, traj.measurements)
    b = kf_run(m, sched, traj.measurements, sequential=True)
    for sa, sb in zip(a, b):
        assert np.allclose(sa.x_post, sb.x_post, atol=1e-8)
        assert np.allclose(sa.p_post, sb.p_post, atol=1e-8)


def test_kf_run_needs_deterministic_schedule():
    m = make_model()
    with pytest.raises(GraphTrackError):
        kf_run(m, SamplingSchedule.bernoulli([0.5] * 8), np.zeros((3, 8)))


# -- steady state -----------------------------------------------------------------

def test_scalar_dare_golden_ratio():
    m = one_node_model(a=1.0, q=1.0, r=1.0)
    ss = solve_dare(m, [0])
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    assert abs(ss.p_inf[0, 0] - phi) <= 1e-10
    assert abs(ss.k_inf[0, 0] - 2.0 / (1.0 + np.sqrt(5.0))) <= 1e-10
    assert ss.residual <= 1e-8


def test_dare_residual_certificate():
    m = make_model(n=9, band=3, seed=17)
    ss = solve_dare(m, [0, 2, 4])
    assert ss.residual <= 1e-8 * max(1.0, np.linalg.norm(ss.p_inf, 2))
    assert np.allclose(ss.p_inf, ss.p_inf.T)
    assert np.all(np.linalg.eigvalsh(ss.p_inf) >= -1e-12)


def test_dare_empty_set_matches_series():
    """No sampling and a stable band: fixed point is the summed propagation
    of the process noise."""
    m = diffusion_model(laplacian(path_graph(3)), 0.4, FrequencySet.of([1, 2]), 0.1, 0.01)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        ss = solve_dare(m, [], tol=1e-13)
    A, Q = m.a_tilde, m.process_noise_cov
    want = np.zeros_like(Q)
    Ak = np.eye(2)
    for _ in range(2000):
        want += Ak @ Q @ Ak.T
        Ak = A @ Ak
    assert np.allclose(ss.p_inf, want, atol=1e-9)


def test_dare_divergent_unstable_unobserved():
    m = one_node_model(a=1.5, q=1.0, r=1.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with pytest.raises(Divergent):
            solve_dare(m, [])


def test_dare_not_converged_at_cap():
    m = make_model(n=8, band=3, seed=18)
    with pytest.raises(NotConverged):
        solve_dare(m, [0, 1, 2], max_iter=2)


def test_dare_warns_when_modes_fail():
    m = one_node_model(a=1.0, q=1.0, r=1.0)
    with pytest.warns(UserWarning):
        try:
            solve_dare(m, [], max_iter=50)
        except (Divergent, NotConverged):
            pass


def test_dare_rejects_time_varying():
    m = make_model(n=6, band=2, seed=19)
    a3 = np.stack([m.a_tilde] * 3)
    tv = BandlimitedModel(m.basis, m.freqs, a3, np.stack([m.b_tilde] * 3),
                          m.process_noise_cov, m.measurement_noise_var)
    with pytest.raises(GraphTrackError):
        solve_dare(tv, [0])


def test_batched_matches_scalar_case():
    m = one_node_model()
    got = steady_state_for_sets(m, [VertexSet.of([0])])
    assert abs(got[0].p_inf[0, 0] - (1 + np.sqrt(5)) / 2) <= 1e-9


def test_batched_none_for_divergent():
    m = one_node_model(a=1.5)
    got = steady_state_for_sets(m, [VertexSet.of([])], max_iter=5000)
    assert got == [None]


def test_ss_kf_run_scalar_hand_recursion():
    m = one_node_model(a=0.9, q=0.5, r=1.0)
    ss = solve_dare(m, [0])
    y = np.array([[0.0], [1.0], [2.0], [1.5]])
    est, used = ss_kf_run(m, [0], np.array([0.3]), y, steady=ss)
    k = ss.k_inf[0, 0]
    x = 0.3
    for t in range(1, 4):
        pred = 0.9 * x
        x = pred + k * (y[t, 0] - pred)
        assert est[t, 0] == pytest.approx(x, abs=1e-12)
    assert used is ss


def test_ss_kf_run_converges_to_kf():
    """The exact filter's gain settles at the steady gain, and the two
    estimate sequences stay close once both have converged."""
    m = make_model(n=9, band=3, seed=20, q=1e-3)
    nodes = [0, 2, 4, 6]
    T = 200
    sched = SamplingSchedule.constant(nodes, T + 1)
    traj = simulate(m, np.ones(3), None, T, sched, rng_seed=21)
    kf_states = kf_run(m, sched, traj.measurements, x0_guess=np.zeros(3))
    est, steady = ss_kf_run(m, nodes, np.zeros(3), traj.measurements)
    assert np.linalg.norm(kf_states[-1].gain - steady.k_inf) <= 1e-6
    assert np.allclose(kf_states[-1].p_prior, steady.p_inf, atol=1e-6)
    kf_final = kf_states[-1].x_post
    gap = np.linalg.norm(est[-1] - kf_final)
    assert gap <= 0.05 * max(1.0, np.linalg.norm(kf_final))


def test_ss_kf_shape_errors():
    m = make_model(n=8, band=2, seed=22)
    ss = solve_dare(m, [0, 1])
    with pytest.raises(DimensionMismatch):
        ss_kf_run(m, [0, 1], np.zeros(3), np.zeros((4, 8)), steady=ss)
    with pytest.raises(DimensionMismatch):
        ss_kf_run(m, [0, 1], np.zeros(2), np.zeros((4, 5)), steady=ss)


# -- detectability -----------------------------------------------------------------

def test_detectability_stable_band_always_passes():
    """Strictly contracting dynamics have no marginal modes to check."""
    m = diffusion_model(laplacian(path_graph(4)), 0.5, FrequencySet.of([1, 2]), 0.1, 1e-3)
    rep = detectability_check(m, [])
    assert rep.detectable and rep.stabilizable
    assert rep.marginal_modes == []


def test_detectability_marginal_mode_needs_coverage():
    # lambda = 0 mode is marginal for diffusion; constant eigenvector is seen
    # from any node, so one node is enough
    m = diffusion_model(laplacian(path_graph(4)), 0.5, FrequencySet.of([0, 1]), 0.1, 1e-3)
    rep = detectability_check(m, [2])
    assert rep.detectable
    assert any(abs(mu - 1.0) < 1e-9 for mu in rep.marginal_modes)
    # no samples at all: the marginal mode escapes
    rep0 = detectability_check(m, [])
    assert not rep0.detectable


def test_detectability_disconnected_components():
    g = Graph.from_edges(4, [(0, 1, 1.0), (2, 3, 1.0)])
    m = diffusion_model(laplacian(g), 0.5, FrequencySet.of([0, 1]), 0.1, 1e-4)
    for node in range(4):
        assert not detectability_check(m, [node]).detectable
    assert detectability_check(m, [0, 2]).detectable


def test_detectability_report_payload():
    m = make_model(n=8, band=2, seed=23)
    rep = detectability_check(m, [0, 1], horizon=3)
    payload = rep.to_payload()
    for key in ("detectable", "stabilizable", "marginal_modes", "horizon",
                "horizon_rank", "bandwidth", "horizon_lhs", "horizon_rhs"):
        assert key in payload
    assert payload["horizon"] == 3


def test_wave_model_filterable():
    """Stacked two-step dynamics run through the same filter machinery."""
    m = wave_model(laplacian(random_geometric(8, 3, 24)), 0.6,
                   FrequencySet.of([0, 1]), 0.1, 1e-4)
    sched = SamplingSchedule.constant([0, 2, 4, 6], 21)
    x0 = np.array([0.0, 0.0, 1.0, -0.5])
    traj = simulate(m, x0, None, 20, sched, rng_seed=25)
    states = kf_run(m, sched, traj.measurements, x0_guess=np.zeros(4))
    assert states[-1].p_post.shape == (4, 4)
    err = np.linalg.norm(states[-1].x_post - traj.spectral_states[-1])
    ref = np.linalg.norm(traj.spectral_states[-1])
    assert err <= 0.8 * max(ref, 1.0)


# -- filter vs alternatives ---------------------------------------------------------

def test_kf_beats_ls_and_steady_gain_in_transient():
    """Error propagation with precomputed gains: the exact filter's empirical
    MSE tracks tr(P) within 5 percent and undercuts LS-on-window and the
    constant-gain filter during the transient."""
    m = make_model(n=10, band=3, seed=26, q=1e-3)
    nodes = [0, 2, 4, 6, 8]
    T = 12
    sched = SamplingSchedule.constant(nodes, T + 1)
    idx = np.array(nodes)
    H = m.obs_matrix
    A, Q = m.a_tilde, m.process_noise_cov
    sigma2 = m.measurement_noise_var
    p0 = np.eye(3)

    # gains and covariances are data independent
    states = kf_run(m, sched, np.zeros((T + 1, 10)), x0_guess=np.zeros(3), p0=p0)
    gains = [s.gain for s in states[1:]]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        steady = solve_dare(m, nodes)

    rng = np.random.default_rng(27)
    n_tr = 10_000
    qfac = np.linalg.cholesky(Q + 1e-15 * np.eye(3))
    e_kf = rng.standard_normal((n_tr, 3))  # x0 guess error, unit covariance
    e_ss = e_kf.copy()
    for t in range(1, T + 1):
        w = rng.standard_normal((n_tr, 3)) @ qfac.T
        v = rng.standard_normal((n_tr, 10)) * np.sqrt(sigma2)
        K_t = gains[t - 1][:, idx]
        pred_kf = e_kf @ A.T + w
        e_kf = pred_kf - (pred_kf @ H[idx].T + v[:, idx]) @ K_t.T
        K_s = steady.k_inf[:, idx]
        pred_ss = e_ss @ A.T + w
        e_ss = pred_ss - (pred_ss @ H[idx].T + v[:, idx]) @ K_s.T

    emp_kf = float(np.mean(np.sum(e_kf**2, axis=1)))
    emp_ss = float(np.mean(np.sum(e_ss**2, axis=1)))
    want = float(np.trace(states[-1].p_post))
    assert abs(emp_kf - want) <= 0.05 * want
    assert emp_kf <= emp_ss * 1.02  # transient edge over the constant gain
