import numpy as np
import pytest

from wmswitch.linalg import NotSchurStableError
from wmswitch.plant import (
    ControllerConfig,
    NoExcitationPathError,
    PlantModel,
    StabilizationFailedError,
    build_augmented_matrices,
    compute_kprime,
    design_or_validate_gains,
    dwell_time_tau,
    init_sim_state,
    sample_bounded_noise,
    step,
)

from conftest import random_stable_system


def run_steps(model, ctl, n_steps, seed=0, trial_id=0, alpha=1):
    state = init_sim_state(model, ctl, seed, trial_id)
    outs = []
    for _ in range(n_steps):
        state, out = step(state, model, ctl, alpha, None)
        outs.append(out)
    return state, outs


def test_model_invariants():
    with pytest.raises(ValueError):
        PlantModel(
            A=np.eye(2), B=np.ones((2, 1)), C1=np.eye(2), C2=np.eye(2),
            w_support=[0.1, 0.1], zeta_support=[0.2, 0.2], eta_support=[0.1, 0.1],
        )  # Sigma_zeta > Sigma_eta
    with pytest.raises(ValueError):
        PlantModel(
            A=np.eye(2), B=np.ones((2, 1)), C1=np.eye(2), C2=np.eye(2),
            w_support=[-0.1, 0.1], zeta_support=[0.1, 0.1], eta_support=[0.1, 0.1],
        )


def test_derived_bounds(small_model, small_ctl):
    assert small_model.K_w == pytest.approx(np.linalg.norm([0.02, 0.02]))
    assert small_model.K_z == pytest.approx(np.linalg.norm([0.02, 0.02]))
    assert np.allclose(small_model.Sigma_W, np.diag([0.02**2 / 3] * 2))
    assert small_ctl.K_e == pytest.approx(1.0)
    assert np.allclose(small_ctl.Sigma_E, [[1.0 / 3.0]])


def test_kprime_lane_keeping(lane_model, lane_ctl):
    # C B is nonzero for the lane-keeping sensor map, so the lag is 0
    assert compute_kprime(lane_model.A, lane_model.B, lane_ctl.K, lane_model.C1) == 0


def test_kprime_one_step_chain():
    A = np.array([[0.0, 1.0], [0.0, 0.0]])
    B = np.array([[0.0], [1.0]])
    K = np.zeros((1, 2))
    C = np.array([[1.0, 0.0]])
    # C B = 0 but C A B = 1
    assert compute_kprime(A, B, K, C) == 1


def test_kprime_no_excitation():
    A = np.array([[0.5]])
    B = np.array([[1.0]])
    with pytest.raises(NoExcitationPathError):
        compute_kprime(A, B, np.zeros((1, 1)), np.zeros((1, 1)))


def test_sample_bounded_noise():
    rng = np.random.default_rng(0)
    assert np.array_equal(sample_bounded_noise(rng, np.zeros(3)), np.zeros(3))
    draws = sample_bounded_noise(rng, np.array([2.0, 2.0]), size=(100000, 2))
    assert np.all(np.abs(draws) <= 2.0)
    # uniform variance s^2/3 to within 3%
    assert np.allclose(draws.var(axis=0), 4.0 / 3.0, rtol=0.03)


def test_step_equilibrium_stays_zero():
    model = PlantModel(
        A=[[0.5, 0.0], [0.0, 0.4]], B=[[1.0], [1.0]], C1=[[1.0, 0.0]], C2=[[1.0, 0.0]],
        w_support=[0.0, 0.0], zeta_support=[0.0, 0.0][:1], eta_support=[0.0],
    )
    ctl = ControllerConfig(K=[[-0.1, -0.1]], L1=[[-0.3], [0.0]], L2=[[-0.3], [0.0]], e_support=[0.0])
    state, outs = run_steps(model, ctl, 10)
    assert np.all(state.x == 0.0)
    assert np.all(state.x_ctl == 0.0)
    assert np.all(state.x_det == 0.0)
    assert all(np.all(o.residual == 0.0) for o in outs)


def test_step_single_watermark_propagation():
    # w = z = 0, e nonzero, x0 = 0 -> x1 = B e0
    model = PlantModel(
        A=[[0.5, 0.1], [0.0, 0.4]], B=[[1.0], [2.0]], C1=[[1.0, 0.0]], C2=[[1.0, 0.0]],
        w_support=[0.0, 0.0], zeta_support=[0.0], eta_support=[0.0],
    )
    ctl = ControllerConfig(K=[[-0.1, -0.1]], L1=[[-0.3], [0.0]], L2=[[-0.3], [0.0]], e_support=[1.0])
    state = init_sim_state(model, ctl, seed=4)
    state, out = step(state, model, ctl, 1, None)
    assert np.linalg.norm(out.watermark) > 0
    assert np.allclose(state.x, model.B @ out.watermark)


def test_replayability_bit_identical(lane_model, lane_ctl):
    _, outs_a = run_steps(lane_model, lane_ctl, 50, seed=123, trial_id=9)
    _, outs_b = run_steps(lane_model, lane_ctl, 50, seed=123, trial_id=9)
    for a, b in zip(outs_a, outs_b):
        assert np.array_equal(a.residual, b.residual)
        assert np.array_equal(a.u, b.u)
        assert np.array_equal(a.y_switched, b.y_switched)
    _, outs_c = run_steps(lane_model, lane_ctl, 5, seed=124, trial_id=9)
    assert not np.array_equal(outs_a[0].residual, outs_c[0].residual)


def test_observers_coincide_when_alpha_always_one(lane_model, lane_ctl):
    state = init_sim_state(lane_model, lane_ctl, seed=8)
    for _ in range(100):
        state, _ = step(state, lane_model, lane_ctl, 1, None)
        assert np.array_equal(state.x_ctl, state.x_det)


def test_switched_stream_equals_sensor1_when_alpha_one(lane_model, lane_ctl):
    _, outs = run_steps(lane_model, lane_ctl, 20, seed=3)
    for o in outs:
        assert o.y_switched is o.y_sensor1 or np.array_equal(o.y_switched, o.y_sensor1)


def test_watermark_history_ring_buffer(lane_model, lane_ctl):
    state = init_sim_state(lane_model, lane_ctl, seed=6)
    k = state.kprime
    for n in range(10):
        state, out = step(state, lane_model, lane_ctl, 1, None)
        if n >= k + 1:
            assert len(state.e_history) == k + 2
            assert out.lagged_watermark is not None
        else:
            assert out.lagged_watermark is None
        assert all(np.linalg.norm(e) <= lane_ctl.K_e + 1e-12 for e in state.e_history)


def test_delta_recursion_exact_in_both_modes(lane_model, lane_ctl):
    # delta_{n+1} = (A + L1 C1) delta_n - w_n - L1 zeta_n regardless of alpha.
    # Verified indirectly: the detector error evolves identically on an
    # alpha-switching run and an alpha=1 run fed the same noise streams.
    F = lane_model.A + lane_ctl.L1 @ lane_model.C1
    state = init_sim_state(lane_model, lane_ctl, seed=17)
    rng = np.random.default_rng(2)
    deltas = [state.x_det - state.x]
    # reconstruct noise from the trajectory: w_n = x_{n+1} - A x_n - B u_n
    xs, us, resids = [state.x.copy()], [], []
    for n in range(80):
        alpha = int(rng.integers(0, 2))
        state, out = step(state, lane_model, lane_ctl, alpha, None)
        xs.append(state.x.copy())
        us.append(out.u)
        resids.append(out.residual)
        deltas.append(state.x_det - state.x)
    for n in range(80):
        w = xs[n + 1] - lane_model.A @ xs[n] - lane_model.B @ us[n]
        # residual_n = C1 x_det - y1 = C1 delta_n - zeta_n  =>  zeta_n known
        zeta = lane_model.C1 @ deltas[n] - resids[n]
        predicted = F @ deltas[n] - w - lane_ctl.L1 @ zeta
        assert np.max(np.abs(predicted - deltas[n + 1])) < 1e-12


def test_build_augmented_matrices_block_structure(lane_model, lane_ctl):
    p = lane_model.p
    zero_ctl = ControllerConfig(
        K=np.zeros((lane_model.q, p)), L1=np.zeros((p, 3)), L2=np.zeros((p, 3)),
        e_support=[1.0, 1.0],
    )
    upper, tri = build_augmented_matrices(lane_model, zero_ctl, 1)
    expected = np.block(
        [[lane_model.A, np.zeros((p, p))], [np.zeros((p, p)), lane_model.A]]
    )
    assert np.allclose(upper, expected)
    assert np.allclose(tri, expected)


def test_augmented_spectrum_is_union(lane_model, lane_ctl):
    _, tri = build_augmented_matrices(lane_model, lane_ctl, 1)
    eig_aug = np.sort_complex(np.linalg.eigvals(tri))
    eig_parts = np.sort_complex(
        np.concatenate(
            [
                np.linalg.eigvals(lane_model.A + lane_model.B @ lane_ctl.K),
                np.linalg.eigvals(lane_model.A + lane_ctl.L1 @ lane_model.C1),
            ]
        )
    )
    assert np.allclose(eig_aug, eig_parts, atol=1e-8)


def test_augmented_matrices_stable_for_lane_gains(lane_model, lane_ctl):
    from wmswitch.linalg import is_schur_stable

    for alpha in (0, 1):
        upper, tri = build_augmented_matrices(lane_model, lane_ctl, alpha)
        assert is_schur_stable(tri)
        assert is_schur_stable(upper)


def test_dwell_time_zero_matrix_gives_one():
    A1 = np.diag([0.5, 0.3])
    assert dwell_time_tau(A1, np.zeros((2, 2))) == 1


def test_dwell_time_fast_decay_gives_one():
    A = np.diag([0.1, 0.1])
    assert dwell_time_tau(A, A) == 1


def test_dwell_time_matches_eigenvalue_oracle(lane_model, lane_ctl):
    from wmswitch.linalg import matrix_power, solve_discrete_lyapunov

    _, tri1 = build_augmented_matrices(lane_model, lane_ctl, 1)
    _, tri0 = build_augmented_matrices(lane_model, lane_ctl, 0)
    tau = dwell_time_tau(tri1, tri0)

    P = solve_discrete_lyapunov(tri1, np.eye(tri1.shape[0]))
    def condition(t):
        a0t = matrix_power(tri0, t)
        gap = a0t @ P @ a0t.T - P + np.eye(P.shape[0])
        return np.max(np.linalg.eigvalsh(0.5 * (gap + gap.T))) <= 1e-9
    oracle = next(t for t in range(1, 10_000) if condition(t))
    assert tau == oracle


def test_dwell_time_requires_stability():
    with pytest.raises(NotSchurStableError):
        dwell_time_tau(np.eye(2), np.diag([0.5, 0.5]))
    with pytest.raises(NotSchurStableError):
        dwell_time_tau(np.diag([0.5, 0.5]), np.eye(2))


def test_design_rejects_unstable_supplied_gains(small_model):
    bad = ControllerConfig(
        K=np.zeros((1, 2)), L1=np.zeros((2, 2)), L2=np.zeros((2, 2)), e_support=[1.0]
    )
    # A itself is stable here, so zero gains pass; use an unstable A instead
    model = PlantModel(
        A=[[1.2, 0.0], [0.0, 0.5]], B=[[1.0], [0.0]], C1=np.eye(2), C2=np.eye(2),
        w_support=[0.01, 0.01], zeta_support=[0.01, 0.01], eta_support=[0.01, 0.01],
    )
    with pytest.raises(StabilizationFailedError):
        design_or_validate_gains(model, bad)


def test_design_scalar_riccati_oracle():
    model = PlantModel(
        A=[[0.5]], B=[[1.0]], C1=[[1.0]], C2=[[1.0]],
        w_support=[0.01], zeta_support=[0.01], eta_support=[0.01],
    )
    ctl = design_or_validate_gains(model, e_support=[1.0])
    # scalar DARE: x^2 - 0.25 x - 1 = 0, K = -x a b / (r + x b^2)
    x = (0.25 + np.sqrt(0.0625 + 4.0)) / 2.0
    k_expected = -x * 0.5 / (1.0 + x)
    assert ctl.K[0, 0] == pytest.approx(k_expected, rel=1e-10)
    assert abs(0.5 + ctl.K[0, 0]) < 1.0


def test_design_synthesizes_stable_lane_gains(lane_model):
    ctl = design_or_validate_gains(lane_model, e_support=[2.0, 2.0])
    from wmswitch.linalg import is_schur_stable

    assert is_schur_stable(lane_model.A + lane_model.B @ ctl.K)
    assert is_schur_stable(lane_model.A + ctl.L1 @ lane_model.C1)
    assert is_schur_stable(lane_model.A + ctl.L2 @ lane_model.C2)


def test_design_requires_e_support_when_synthesizing(small_model):
    with pytest.raises(ValueError):
        design_or_validate_gains(small_model)


def test_random_systems_have_valid_gains():
    rng = np.random.default_rng(31)
    for _ in range(5):
        model = random_stable_system(rng, p=3, q=2, m=2)
        ctl = design_or_validate_gains(model, e_support=np.full(2, 1.0))
        assert ctl.K.shape == (2, 3)
