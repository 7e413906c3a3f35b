import numpy as np
import pytest

from riswpt.model import (
    ChannelSet,
    PowerConstraints,
    RisPhases,
    TxBeamformer,
    build_ris_quadratic,
    compose_channel,
    evaluate,
    sca_bound_x,
)
from riswpt.oracle import projection_oracle
from riswpt.solver import (
    AdmmWorkspace,
    InfeasibleConstraintError,
    InfeasibleStartError,
    SolverConfig,
    admm_psi_block,
    admm_x_block,
    initial_beamformer,
    initial_point,
    project_min_power,
    recover_ris_phases,
    spmc_sca_admm,
    update_b,
    update_duals,
    update_x,
)

from conftest import gaussian, random_channels


def _unit(rng, *shape):
    return np.exp(1j * rng.uniform(-np.pi, np.pi, shape))


# ---------------------------------------------------------------- update_x / update_b

def test_update_x_takes_argument_of_update_vector():
    ws = AdmmWorkspace(np.ones(1, complex), np.array([[(1 + 1j) / 2]]), np.zeros((1, 1), complex), 1.0)
    x = update_x(np.zeros((1, 1)), np.ones(1), ws, 1.0)
    np.testing.assert_allclose(x, [np.exp(1j * np.pi / 4)], atol=1e-15)


def test_update_x_real_positive_vector_gives_flat_phases():
    H = np.eye(3)
    ws = AdmmWorkspace.start(np.ones(3), 2, 0.5)
    x = update_x(H, np.ones(3), ws, 6.0)
    np.testing.assert_allclose(x, np.full(3, np.sqrt(2.0)))


def test_update_x_zero_entry_gets_phase_zero():
    ws = AdmmWorkspace(np.ones(2, complex), np.zeros((1, 2), complex), np.zeros((1, 2), complex), 1.0)
    x = update_x(np.zeros((1, 2)), np.ones(2), ws, 2.0)
    np.testing.assert_array_equal(x, np.ones(2))


def test_update_x_beats_random_constant_envelope_candidates(rng):
    H = gaussian(rng, 3, 5)
    x_hat = _unit(rng, 5)
    ws = AdmmWorkspace(x_hat, gaussian(rng, 3, 5), gaussian(rng, 3, 5), 0.7)
    P = 2.0
    x = update_x(H, x_hat, ws, P)
    w = H.conj().T @ H @ x_hat + 2 * 0.7 * (ws.dual + ws.local).sum(axis=0)
    np.testing.assert_allclose(np.abs(x), np.sqrt(P / 5), rtol=1e-12)
    candidates = np.sqrt(P / 5) * _unit(rng, 10_000, 5)
    assert np.real(candidates @ w.conj()).max() <= np.real(np.vdot(w, x)) + 1e-12


def test_update_b_keeps_expansion_point_when_penalty_vanishes(rng):
    b_hat = _unit(rng, 4)
    ws = AdmmWorkspace.start(b_hat, 2, 1e-300)
    np.testing.assert_allclose(update_b(np.eye(4), b_hat, ws), b_hat, atol=1e-14)


def test_update_b_real_positive_vector_gives_ones():
    ws = AdmmWorkspace.start(np.ones(3), 1, 1.0)
    np.testing.assert_allclose(update_b(np.eye(3), np.ones(3), ws), np.ones(3))


def test_update_b_beats_random_unit_modulus_candidates(rng):
    l = gaussian(rng, 3, 6)
    L = l.T @ l.conj()
    b_hat = _unit(rng, 6)
    ws = AdmmWorkspace(b_hat, gaussian(rng, 3, 6), gaussian(rng, 3, 6), 0.3)
    b = update_b(L, b_hat, ws)
    w = L @ b_hat + 2 * 0.3 * (ws.dual + ws.local).sum(axis=0)
    np.testing.assert_allclose(np.abs(b), 1.0, rtol=1e-12)
    candidates = _unit(rng, 10_000, 6)
    assert np.real(candidates @ w.conj()).max() <= np.real(np.vdot(w, b)) + 1e-12


# ---------------------------------------------------------------- projection

def test_projection_one_dimensional_geometry():
    np.testing.assert_allclose(project_min_power([0.5, 0], [1, 0], 1.0), [1, 0])


def test_projection_leaves_feasible_point(rng):
    z = gaussian(rng, 4)
    h = gaussian(rng, 4)
    p = abs(np.vdot(h, z)) ** 2
    np.testing.assert_array_equal(project_min_power(z, h, p), z)
    np.testing.assert_array_equal(project_min_power(z, h, 0.5 * p), z)


def test_projection_degenerate_phase_uses_zero():
    np.testing.assert_allclose(project_min_power([0, 1], [1, 0], 1.0), [1, 1])


def test_projection_rejects_unreachable_constraint():
    with pytest.raises(InfeasibleConstraintError):
        project_min_power([1, 1], [0, 0], 1.0)


def test_projection_zero_floor_with_zero_vector_is_fine():
    np.testing.assert_array_equal(project_min_power([1, 2], [0, 0], 0.0), [1, 2])


def test_projection_is_nearest_boundary_point(rng):
    for _ in range(5):
        z, h = gaussian(rng, 4), gaussian(rng, 4)
        p = 4 * abs(np.vdot(h, z)) ** 2 + 0.1
        e = project_min_power(z, h, p)
        assert abs(abs(np.vdot(h, e)) - np.sqrt(p)) < 1e-10
        sampled = projection_oracle(z, h, p, 100_000, rng)
        assert np.linalg.norm(e - z) <= sampled + 1e-9


# ---------------------------------------------------------------- duals

def test_duals_unchanged_at_consensus(rng):
    x = gaussian(rng, 3)
    ws = AdmmWorkspace(x, np.tile(x, (2, 1)), gaussian(rng, 2, 3), 1.0)
    before = ws.dual.copy()
    update_duals(ws)
    np.testing.assert_array_equal(ws.dual, before)
    assert ws.primal_residual() == 0


def test_duals_accumulate_residual(rng):
    x, d = gaussian(rng, 3), gaussian(rng, 2, 3)
    ws = AdmmWorkspace(x, x + d, np.zeros((2, 3), complex), 1.0)
    np.testing.assert_allclose(update_duals(ws), d)


def test_workspace_validates_shapes():
    with pytest.raises(ValueError):
        AdmmWorkspace(np.ones(3), np.ones((2, 3)), np.ones((2, 2)), 1.0)
    with pytest.raises(ValueError):
        AdmmWorkspace.start(np.ones(3), 2, 0.0)


# ---------------------------------------------------------------- x block

def test_x_block_single_user_unconstrained_is_phase_alignment(rng):
    H = gaussian(rng, 1, 4)
    x0 = np.sqrt(0.5) * _unit(rng, 4)
    x = admm_x_block(H, x0, PowerConstraints([0.0]), SolverConfig(inner_stop_tol=1e-12, max_inner=5000))
    target = np.sqrt(0.5) * np.exp(1j * np.angle(H.conj().T @ H @ x0))
    np.testing.assert_allclose(x, target, atol=1e-9)


def test_x_block_unconstrained_improves_linear_bound(rng):
    for _ in range(10):
        H = gaussian(rng, 3, 5)
        x0 = _unit(rng, 5)
        x = admm_x_block(H, x0, PowerConstraints.none(3), SolverConfig(inner_stop_tol=1e-10, max_inner=5000))
        direct = np.exp(1j * np.angle(H.conj().T @ H @ x0))
        np.testing.assert_allclose(x, direct, atol=1e-5)
        assert sca_bound_x(H, x0, x) >= sca_bound_x(H, x0, x0) - 1e-12
        np.testing.assert_allclose(np.abs(x), 1.0, rtol=1e-12)


def test_x_block_meets_binding_single_user_floor(rng):
    for _ in range(10):
        h = gaussian(rng, 2)
        x0 = np.sqrt(0.5) * _unit(rng, 2)
        best = 0.5 * np.sum(np.abs(h)) ** 2
        p = 0.9 * best
        x = admm_x_block(h.conj()[None, :], x0, PowerConstraints([p]), SolverConfig())
        assert abs(np.vdot(h, x)) ** 2 >= p - 1e-9


def test_x_block_with_single_antenna_only_rotates(rng):
    H = gaussian(rng, 2, 1)
    x = admm_x_block(H, np.array([2.0 + 0j]), PowerConstraints.none(2), SolverConfig())
    assert abs(x[0]) == pytest.approx(2.0)


def test_x_block_reports_iterations(rng):
    H = gaussian(rng, 2, 3)
    x0 = np.ones(3, complex)
    ws = AdmmWorkspace.start(x0, 2, 1.0)
    # floors just above the unconstrained maximizer force the ADMM loop to run
    aligned = np.exp(1j * np.angle(H.conj().T @ H @ x0))
    floor = 1.01 * np.abs(H @ aligned) ** 2
    floor[np.argmax(floor)] = 0.0
    admm_x_block(H, x0, PowerConstraints(floor), SolverConfig(), ws)
    assert 1 <= ws.iterations <= SolverConfig().max_inner


def test_x_block_returns_aligned_point_when_it_is_feasible(rng):
    H = gaussian(rng, 3, 4)
    x0 = _unit(rng, 4)
    ws = AdmmWorkspace.start(x0, 3, 1.0)
    x = admm_x_block(H, x0, PowerConstraints.none(3), SolverConfig(), ws)
    np.testing.assert_allclose(x, np.exp(1j * np.angle(H.conj().T @ H @ x0)), atol=1e-14)
    assert ws.iterations == 0
    np.testing.assert_array_equal(ws.dual, 0)


# ---------------------------------------------------------------- RIS block

def test_psi_block_unconstrained_improves_bound(rng):
    for _ in range(10):
        ch = random_channels(rng, 3, 4, 5)
        bf = TxBeamformer(rng.uniform(-3, 3, 4), 1.0)
        l, L = build_ris_quadratic(ch, bf)
        b0 = _unit(rng, 6)
        b = admm_psi_block(l, L, b0, PowerConstraints.none(3), SolverConfig())
        bound = lambda v: np.real(np.vdot(b0, L @ v))
        assert bound(b) >= bound(b0) - 1e-12
        np.testing.assert_allclose(np.abs(b), 1.0, rtol=1e-12)


def test_psi_block_without_ris_keeps_objective(rng):
    ch = ChannelSet(gaussian(rng, 2, 3), np.zeros((2, 0)), np.zeros((0, 3)))
    bf = TxBeamformer(rng.uniform(-3, 3, 3), 1.0)
    l, L = build_ris_quadratic(ch, bf)
    b = admm_psi_block(l, L, np.ones(1), PowerConstraints.none(2), SolverConfig())
    assert b.shape == (1,) and abs(abs(b[0]) - 1) < 1e-12
    ris = recover_ris_phases(b)
    assert ris.N == 0
    np.testing.assert_allclose(evaluate(ch, bf, ris), np.abs(ch.H_d @ bf.x) ** 2)


def test_psi_block_meets_binding_single_user_floor(rng):
    for _ in range(10):
        ch = random_channels(rng, 1, 2, 3)
        bf = TxBeamformer(rng.uniform(-3, 3, 2), 1.0)
        l, L = build_ris_quadratic(ch, bf)
        p = 0.9 * np.sum(np.abs(l)) ** 2
        b = admm_psi_block(l, L, _unit(rng, 4), PowerConstraints([p]), SolverConfig())
        assert abs(np.vdot(l[0], b)) ** 2 >= p - 1e-9


# ---------------------------------------------------------------- phase recovery

def test_recover_phases_example():
    ris = recover_ris_phases(np.array([1j, 1]))
    np.testing.assert_allclose(ris.v, [1j])
    np.testing.assert_allclose(ris.theta, [-np.pi / 2])


def test_recover_phases_ignores_global_phase(rng):
    b = _unit(rng, 6)
    a = recover_ris_phases(b)
    c = recover_ris_phases(np.exp(1j * 1.234) * b)
    np.testing.assert_allclose(np.exp(1j * a.theta), np.exp(1j * c.theta), atol=1e-12)


def test_recovered_phases_reproduce_lifted_objective(rng):
    for _ in range(20):
        ch = random_channels(rng, 3, 4, 5)
        bf = TxBeamformer(rng.uniform(-3, 3, 4), 1.5)
        l, L = build_ris_quadratic(ch, bf)
        b = _unit(rng, 6)
        Q = evaluate(ch, bf, recover_ris_phases(b))
        assert Q.sum() == pytest.approx(np.vdot(b, L @ b).real, rel=1e-10)


# ---------------------------------------------------------------- full solver

def test_single_user_without_ris_reaches_matched_phase_optimum(rng):
    h = gaussian(rng, 1, 6)
    ch = ChannelSet(h, np.zeros((1, 0)), np.zeros((0, 6)))
    res = spmc_sca_admm(ch, PowerConstraints([0.0]), TxBeamformer(np.zeros(6), 3.0), RisPhases.zeros(0))
    assert res.objective == pytest.approx(3.0 / 6 * np.sum(np.abs(h)) ** 2, rel=1e-6)


def test_unconstrained_trace_is_monotone(rng):
    for _ in range(5):
        ch = random_channels(rng, 4, 6, 8)
        res = spmc_sca_admm(ch, PowerConstraints.none(4), TxBeamformer(np.zeros(6), 1.0), RisPhases.zeros(8))
        assert np.all(res.objective_trace[1:] >= res.objective_trace[:-1] * (1 - 1e-9))
        np.testing.assert_allclose(res.per_user_power, evaluate(ch, res.beamformer, res.ris))
        assert res.objective_trace[0] <= res.objective
        assert res.outer_iters == len(res.objective_trace) - 1


def test_each_accepted_outer_step_raises_linear_bound(rng):
    ch = random_channels(rng, 3, 4, 6)
    bf, ris = TxBeamformer(np.zeros(4), 1.0), RisPhases.zeros(6)
    H = compose_channel(ch, ris)
    x = admm_x_block(H, bf.x, PowerConstraints.none(3), SolverConfig())
    assert sca_bound_x(H, bf.x, x) >= sca_bound_x(H, bf.x, bf.x)
    assert np.linalg.norm(H @ x) ** 2 >= np.linalg.norm(H @ bf.x) ** 2 - 1e-12


def test_infeasible_start_is_rejected(rng):
    ch = random_channels(rng, 2, 3, 2)
    with pytest.raises(InfeasibleStartError):
        spmc_sca_admm(ch, PowerConstraints([1e6, 0.0]), TxBeamformer(np.zeros(3), 1.0), RisPhases.zeros(2))


def test_constrained_solve_stays_feasible_and_monotone(rng):
    ch = random_channels(rng, 3, 4, 6)
    x0, ris0 = TxBeamformer(np.zeros(4), 1.0), RisPhases.zeros(6)
    Q0 = evaluate(ch, x0, ris0)
    res = spmc_sca_admm(ch, PowerConstraints(0.9 * Q0), x0, ris0)
    assert res.all_feasible
    assert np.all(res.per_user_power >= 0.9 * Q0 - 1e-9)
    assert np.all(np.diff(res.objective_trace) >= 0)


def test_seek_mode_reaches_feasibility(rng):
    ch = random_channels(rng, 2, 4, 4)
    x0, ris0 = TxBeamformer(np.zeros(4), 1.0), RisPhases.zeros(4)
    unconstrained = spmc_sca_admm(ch, PowerConstraints.none(2), x0, ris0)
    target = 1.1 * unconstrained.per_user_power.min()
    res = spmc_sca_admm(ch, PowerConstraints(np.full(2, target)), unconstrained.beamformer,
                        unconstrained.ris, allow_infeasible_start=True)
    assert res.all_feasible


def test_beamformer_only_mode_keeps_ris(rng):
    ch = random_channels(rng, 2, 3, 4)
    ris0 = RisPhases(rng.uniform(-3, 3, 4))
    res = spmc_sca_admm(ch, PowerConstraints.none(2), TxBeamformer(np.zeros(3), 1.0), ris0,
                        optimize_ris=False)
    np.testing.assert_array_equal(res.ris.theta, ris0.theta)
    assert res.inner_iters_psi == 0


def test_warm_start_is_monotone(rng):
    ch = random_channels(rng, 3, 4, 6)
    res = spmc_sca_admm(ch, PowerConstraints.none(3), TxBeamformer(np.zeros(4), 1.0), RisPhases.zeros(6),
                        SolverConfig(warm_start=True))
    assert np.all(np.diff(res.objective_trace) >= 0)


def test_channel_scaling_keeps_phases(rng):
    ch = random_channels(rng, 3, 5, 6)
    x0, ris0 = TxBeamformer(np.zeros(5), 1.0), RisPhases.zeros(6)
    floor = 0.5 * evaluate(ch, x0, ris0)
    c = 3.0
    a = spmc_sca_admm(ch, PowerConstraints(floor), x0, ris0)
    b = spmc_sca_admm(ch.scaled(c), PowerConstraints(c ** 2 * floor), x0, ris0)
    np.testing.assert_allclose(np.exp(1j * a.beamformer.alpha), np.exp(1j * b.beamformer.alpha), atol=1e-8)
    np.testing.assert_allclose(np.exp(1j * a.ris.theta), np.exp(1j * b.ris.theta), atol=1e-8)
    assert b.objective == pytest.approx(c ** 2 * a.objective, rel=1e-8)


def test_efficiency_scales_objective_not_argmax(rng):
    ch = random_channels(rng, 2, 4, 4)
    x0, ris0 = TxBeamformer(np.zeros(4), 1.0), RisPhases.zeros(4)
    a = spmc_sca_admm(ch, PowerConstraints.none(2), x0, ris0)
    b = spmc_sca_admm(ch, PowerConstraints.none(2, eta=0.25), x0, ris0)
    np.testing.assert_allclose(a.beamformer.alpha, b.beamformer.alpha, atol=1e-12)
    assert b.objective == pytest.approx(0.25 * a.objective, rel=1e-12)


def test_initial_beamformer_is_constant_envelope(rng):
    bf = initial_beamformer(gaussian(rng, 3, 5), 2.0)
    np.testing.assert_allclose(np.abs(bf.x), np.sqrt(2.0 / 5))


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(rho_x=0)
    with pytest.raises(ValueError):
        SolverConfig(max_inner=0)
    with pytest.raises(ValueError):
        SolverConfig(feasibility_tol=-1)


def test_initial_point_beats_plain_start_and_is_deterministic(rng):
    ch = random_channels(rng, 3, 4, 6)
    bf, ris = initial_point(ch, 2.0)
    plain = initial_beamformer(compose_channel(ch, RisPhases.zeros(6)), 2.0)
    assert evaluate(ch, bf, ris).sum() >= evaluate(ch, plain, RisPhases.zeros(6)).sum()
    bf2, ris2 = initial_point(ch, 2.0)
    np.testing.assert_array_equal(bf.alpha, bf2.alpha)
    np.testing.assert_array_equal(ris.theta, ris2.theta)
    np.testing.assert_allclose(np.abs(bf.x), np.sqrt(2.0 / 4))


def test_initial_point_keeps_given_candidate_when_it_is_best(rng):
    ch = random_channels(rng, 2, 3, 4)
    free = spmc_sca_admm(ch, PowerConstraints.none(2), TxBeamformer(np.zeros(3), 1.0), RisPhases.zeros(4))
    bf, ris = initial_point(ch, 1.0, starts=1, passes=0, theta0=free.ris.theta)
    assert evaluate(ch, bf, ris).sum() >= evaluate(ch, initial_beamformer(compose_channel(ch, RisPhases.zeros(4)),
                                                                          1.0), RisPhases.zeros(4)).sum()


def test_initial_point_without_ris(rng):
    ch = ChannelSet(gaussian(rng, 2, 3), np.zeros((2, 0)), np.zeros((0, 3)))
    bf, ris = initial_point(ch, 1.0)
    assert ris.N == 0 and bf.M == 3
