import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import double_integrator, double_pendulum, pendulum
from hydroilqr.diff import linearize_step
from hydroilqr.ilqr import (
    CONVERGED,
    MAX_ITERATIONS,
    CostSpec,
    SolverOptions,
    backward_pass,
    forward_pass,
    linearize_trajectory,
    playback,
    receding_horizon_solve,
    rollout,
    solve,
    trajectory_cost,
)
from hydroilqr.multibody import GeneralizedState, step


def lqr_oracle(A, B, Q, R, Qf, N):
    """Textbook finite-horizon discrete Riccati recursion (u = -K x)."""
    P = Qf
    gains = []
    for _ in range(N):
        K = np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)
        P = Q + A.T @ P @ (A - B @ K)
        gains.append(K)
    return gains[::-1], P


def linear_problem(seed, N=30):
    rng = np.random.default_rng(seed)
    model = double_integrator(timestep=0.05)
    target = np.concatenate([rng.uniform(-1, 1, 2), np.zeros(2)])
    cost = CostSpec(rng.uniform(0.1, 2, 4), rng.uniform(0.01, 1, 2), rng.uniform(1, 10, 4), target)
    x0 = np.concatenate([rng.uniform(-1, 1, 2), rng.uniform(-1, 1, 2)])
    return model, cost, x0, N


def test_riccati_gains_match_textbook_recursion():
    model, cost, x0, N = linear_problem(0)
    lin = linearize_step(model, GeneralizedState.from_vector(x0), np.zeros(2))
    gains, _ = lqr_oracle(lin.A, lin.B, np.diag(cost.Q), np.diag(cost.R), np.diag(cost.Qf), N)
    traj, _ = solve(model, x0, np.zeros((N, 2)), cost)
    for k in range(N):
        assert np.allclose(traj.K[k], gains[k], rtol=0, atol=1e-10)


@pytest.mark.parametrize("seed", range(10))
def test_linear_quadratic_problem_solved_in_two_iterations(seed):
    model, cost, x0, N = linear_problem(seed)
    lin = linearize_step(model, GeneralizedState.from_vector(x0), np.zeros(2))
    _, P0 = lqr_oracle(lin.A, lin.B, np.diag(cost.Q), np.diag(cost.R), np.diag(cost.Qf), N)
    e0 = x0 - cost.x_nom
    optimum = e0 @ P0 @ e0
    traj, stats = solve(model, x0, np.zeros((N, 2)), cost)
    assert stats.status == CONVERGED
    assert stats.iterations <= 2
    assert traj.cost == pytest.approx(optimum, rel=1e-8, abs=1e-10)


def test_large_regularization_shrinks_the_step():
    model, cost, x0, N = linear_problem(1)
    traj = rollout(model, x0, np.ones((N, 2)), cost)
    As, Bs = linearize_trajectory(model, traj)
    rho = 1e9
    res = backward_pass(As, Bs, traj, cost, rho)
    assert np.abs(res.K).max() < 1e-6
    # at the last step kappa -> Q_u / rho
    xN, uN = traj.states[N], traj.inputs[N - 1]
    Vx = 2 * cost.Qf * (xN - cost.nominal(N))
    Qu = 2 * cost.R * uN + Bs[N - 1].T @ Vx
    assert np.allclose(res.kappa[N - 1] * rho, Qu, rtol=1e-6)


def test_zero_step_reproduces_nominal():
    model = double_pendulum(timestep=0.01)
    cost = CostSpec(np.ones(4), np.full(2, 0.1), np.ones(4), np.zeros(4))
    x0 = np.array([0.5, -0.3, 0.0, 0.0])
    traj = rollout(model, x0, np.full((20, 2), 0.2), cost)
    As, Bs = linearize_trajectory(model, traj)
    res = backward_pass(As, Bs, traj, cost, 1e-6)
    again = forward_pass(model, traj, res.K, res.kappa, 0.0, cost)
    assert np.array_equal(again.states, traj.states)
    assert np.array_equal(again.inputs, traj.inputs)


def swing_problem(N=60):
    model = pendulum(timestep=0.02)
    x0 = np.array([-math.pi / 2, 0.0])
    cost = CostSpec(np.array([1.0, 0.01]), np.array([0.01]), np.array([100.0, 1.0]), np.array([0.0, 0.0]))
    return model, cost, x0, N


def test_nonlinear_swing_descends_monotonically_and_converges():
    model, cost, x0, N = swing_problem()
    traj, stats = solve(model, x0, np.zeros((N, 1)), cost, check_psd=True)
    assert stats.status == CONVERGED
    costs = [stats.initial_cost] + stats.costs
    assert all(b < a for a, b in zip(costs, costs[1:]))
    assert abs(traj.states[-1, 0]) < 0.05
    assert stats.min_vxx_eig > -1e-9


def test_trajectory_invariants():
    model, cost, x0, N = swing_problem()
    traj, _ = solve(model, x0, np.zeros((N, 1)), cost)
    for k in range(N):
        nxt = step(model, GeneralizedState.from_vector(traj.states[k]), traj.inputs[k]).to_vector()
        assert np.array_equal(nxt, traj.states[k + 1])
    total, _ = trajectory_cost(cost, traj.states, traj.inputs)
    assert traj.cost == pytest.approx(total, abs=1e-10)
    assert traj.K.shape == (N, 1, 2) and traj.kappa.shape == (N, 1)


def test_cost_scaling_leaves_solution_unchanged():
    model, cost, x0, N = swing_problem()
    a, _ = solve(model, x0, np.zeros((N, 1)), cost)
    b, _ = solve(model, x0, np.zeros((N, 1)), cost.scaled(10.0))
    assert np.allclose(a.states, b.states, atol=1e-4)
    assert b.cost == pytest.approx(10 * a.cost, rel=1e-6)


@settings(max_examples=10, deadline=None)
@given(st.floats(0.1, 100.0))
def test_linear_solution_scale_invariant(scale):
    model, cost, x0, N = linear_problem(3)
    a, _ = solve(model, x0, np.zeros((N, 2)), cost)
    b, _ = solve(model, x0, np.zeros((N, 2)), cost.scaled(scale))
    assert np.allclose(a.inputs, b.inputs, atol=1e-8)


def test_max_iterations_zero_returns_initial_rollout():
    model, cost, x0, N = swing_problem()
    u0 = np.full((N, 1), 0.3)
    traj, stats = solve(model, x0, u0, cost, SolverOptions(max_iterations=0))
    assert stats.status == MAX_ITERATIONS and stats.iterations == 0
    assert np.array_equal(traj.states, rollout(model, x0, u0, cost).states)


def test_receding_horizon_single_resolve_is_plain_solve():
    model, cost, x0, N = swing_problem(30)
    a, _ = solve(model, x0, np.zeros((N, 1)), cost)
    b, stats = receding_horizon_solve(model, x0, np.zeros((N, 1)), cost, SolverOptions(), N, 4, 1)
    assert np.array_equal(a.states, b.states) and len(stats) == 1


def test_receding_horizon_stitches_consistent_trajectory():
    model, _, x0, _ = swing_problem()
    rate = np.array([0.02, 0.0])  # target angle advancing 1 rad/s
    cost = CostSpec(np.array([1.0, 0.01]), np.array([0.01]), np.array([10.0, 1.0]), np.array([-1.0, 1.0]), rate)
    window, shift, resolves = 20, 4, 8
    seen = []
    traj, stats = receding_horizon_solve(
        model, x0, np.zeros((window, 1)), cost, SolverOptions(), window, shift, resolves,
        progress=lambda r, t, s: seen.append(t.states[0].copy()),
    )
    assert traj.inputs.shape == (resolves * shift, 1)
    assert len(stats) == resolves
    for k in range(len(traj.inputs)):
        nxt = step(model, GeneralizedState.from_vector(traj.states[k]), traj.inputs[k]).to_vector()
        assert np.array_equal(nxt, traj.states[k + 1])
    # each window starts where the previous committed prefix ended
    for r in range(resolves):
        assert np.array_equal(seen[r], traj.states[r * shift])


def test_warm_start_needs_no_more_iterations_than_cold_start():
    model, _, x0, _ = swing_problem()
    rate = np.array([0.02, 0.0])
    cost = CostSpec(np.array([1.0, 0.01]), np.array([0.01]), np.array([10.0, 1.0]), np.array([-1.0, 1.0]), rate)
    window, shift = 20, 4
    warm, cold = [], []

    def compare(r, traj, stats):
        warm.append(stats.iterations)
        _, s = solve(model, traj.states[0], np.zeros((window, 1)), cost.shifted(r * shift))
        cold.append(s.iterations)

    receding_horizon_solve(model, x0, np.zeros((window, 1)), cost, SolverOptions(), window, shift, 10, compare)
    assert np.median(warm) <= np.median(cold)


def test_playback_zero_perturbation_is_exact():
    model, cost, x0, N = swing_problem()
    traj, _ = solve(model, x0, np.zeros((N, 1)), cost)
    again = playback(model, traj, x0, cost)
    assert np.array_equal(again.states, traj.states)


def test_closed_loop_beats_open_loop_under_perturbation():
    model, cost, x0, N = swing_problem()
    traj, _ = solve(model, x0, np.zeros((N, 1)), cost)
    x0p = x0 + np.array([0.05, 0.0])
    closed = playback(model, traj, x0p, cost, feedback=True)
    opened = playback(model, traj, x0p, cost, feedback=False)
    assert closed.stage_costs[-1] <= opened.stage_costs[-1]


def test_option_validation():
    with pytest.raises(ValueError):
        SolverOptions(linesearch=(1.5,))
    with pytest.raises(ValueError):
        SolverOptions(max_iterations=-1)
    with pytest.raises(ValueError):
        CostSpec(np.ones(2), np.zeros(1), np.ones(2), np.zeros(2))
    with pytest.raises(ValueError):
        CostSpec(np.ones(3), np.ones(1), np.ones(2), np.zeros(2))
