import math
from dataclasses import replace

import numpy as np
import pytest

from anchor_mppi.config import CostWeights, DynamicsParams, MppiConfig
from anchor_mppi.costs import GoalSpec, goal_cost
from anchor_mppi.dynamics import State, clamp_control, rk4_step
from anchor_mppi.mppi import (
    NoValidRollout,
    compute_weights,
    effective_sample_size,
    mppi_iteration,
    rollout,
    sample_perturbations,
    shift_nominal,
    update_nominal,
)

PARAMS = DynamicsParams()
CFG = MppiConfig()
HOVER = PARAMS.hover_control()


def test_equal_costs_uniform():
    w = compute_weights(np.full(4, 3.7), 0.1)
    assert np.allclose(w, 0.25, atol=1e-12, rtol=0)


def test_two_sample_weights():
    w = compute_weights(np.array([0.0, 0.1]), 0.1)
    assert w[0] == pytest.approx(1 / (1 + math.exp(-1)), abs=1e-12)
    assert w == pytest.approx([0.73106, 0.26894], abs=1e-5)


def test_translation_invariance_exact():
    # dyadic costs keep (S + c) - (min S + c) exact, so the weights must match bit for bit
    rng = np.random.default_rng(0)
    s = rng.integers(0, 4096, 128) / 1024.0
    for c in (1.0, 1024.0, -3.5):
        assert np.array_equal(compute_weights(s, 0.1), compute_weights(s + c, 0.1))
    # generic shifts agree to rounding
    u = rng.uniform(0, 1, 128)
    assert np.allclose(compute_weights(u, 0.1), compute_weights(u + 1000.0, 0.1), rtol=1e-9, atol=1e-15)


def test_small_temperature_selects_argmin():
    w = compute_weights(np.array([3.0, 2.0, 4.0]), 1e-6)
    assert w[1] == 1.0


def test_invalid_rollouts_get_zero_weight():
    w = compute_weights(np.array([np.inf, 1.0, np.nan, 1.0]), 0.1)
    assert np.array_equal(w, [0, 0.5, 0, 0.5])
    with pytest.raises(NoValidRollout, match="no valid rollout"):
        compute_weights(np.array([np.inf, np.inf]), 0.1)


def test_weights_sum_to_one():
    rng = np.random.default_rng(1)
    for _ in range(50):
        w = compute_weights(rng.exponential(5, 128), rng.uniform(0.01, 2))
        assert abs(w.sum() - 1) < 1e-12 and np.all(w >= 0)


def test_perturbations_deterministic_and_keyed():
    a = sample_perturbations(CFG, 5, 2, 10, 0)
    assert np.array_equal(a, sample_perturbations(CFG, 5, 2, 10, 0))
    assert a.shape == (128, 25, 4)
    for other in [(6, 2, 10, 0), (5, 3, 10, 0), (5, 2, 11, 0), (5, 2, 10, 1)]:
        assert not np.array_equal(a, sample_perturbations(CFG, *other))


def test_zero_sigma_gives_zero_noise():
    assert np.all(sample_perturbations(replace(CFG, sigma=(0.0, 0.0, 0.0, 0.0)), 0) == 0)


def test_perturbation_statistics():
    big = replace(CFG, K=100_000, N=2)
    d = sample_perturbations(big, 3)[:, 0, :]
    sigma = np.array(CFG.sigma)
    assert np.all(np.abs(d.mean(axis=0)) < 4 * sigma / math.sqrt(big.K))
    assert np.allclose(d.std(axis=0), sigma, rtol=0.02)


def test_hover_rollout_stationary():
    r, applied = rollout(State.at((0, 0, 2)), np.tile(HOVER, (25, 1)), np.zeros((25, 4)), PARAMS)
    assert r.valid
    assert np.allclose(r.states, r.states[0], atol=1e-12)
    assert np.all(applied == 0)


def test_rollout_matches_sequential_rk4():
    rng = np.random.default_rng(2)
    nominal = np.tile(HOVER, (25, 1))
    delta = rng.normal(size=(25, 4)) * 3
    r, applied = rollout(State.at((0, 0, 2)), nominal, delta, PARAMS)
    x = State.at((0, 0, 2)).array
    for j in range(25):
        x = rk4_step(x, clamp_control(nominal[j] + delta[j], PARAMS), PARAMS)
        assert np.array_equal(r.states[j + 1], x)
    assert np.array_equal(applied, clamp_control(nominal + delta, PARAMS) - nominal)


def test_non_finite_rollout_is_invalid():
    r, _ = rollout(State.at((0, 0, 2)), np.full((25, 4), np.nan), np.zeros((25, 4)), PARAMS)
    assert not r.valid


def test_update_single_sample_reproduces_rollout():
    rng = np.random.default_rng(3)
    nominal = np.tile(HOVER, (25, 1))
    _, applied = rollout(State.at((0, 0, 2)), nominal, rng.normal(size=(25, 4)) * 5, PARAMS)
    out = update_nominal(nominal, applied[None], np.array([1.0]), PARAMS)
    assert np.allclose(out, nominal + applied, atol=1e-12)


def test_update_zero_noise_unchanged():
    nominal = np.tile(HOVER, (25, 1))
    assert np.array_equal(update_nominal(nominal, np.zeros((8, 25, 4)), np.full(8, 1 / 8), PARAMS), nominal)


def test_update_matches_double_loop():
    rng = np.random.default_rng(4)
    nominal = np.tile(HOVER, (25, 1))
    delta = rng.normal(size=(16, 25, 4)) * 0.3
    w = rng.dirichlet(np.ones(16))
    step = np.zeros((25, 4))
    for k in range(16):
        for j in range(25):
            step[j] += w[k] * delta[k, j]
    assert np.allclose(update_nominal(nominal, delta, w, PARAMS), clamp_control(nominal + step, PARAMS), atol=1e-12, rtol=0)


def test_nan_samples_do_not_leak():
    nominal = np.tile(HOVER, (25, 1))
    delta = np.zeros((3, 25, 4))
    delta[1] = np.nan
    out = update_nominal(nominal, delta, np.array([0.5, 0.0, 0.5]), PARAMS)
    assert np.all(np.isfinite(out))


def test_shift_nominal():
    a, b, c = np.eye(4)[:3]
    out = shift_nominal(np.array([a, b, c]))
    assert np.array_equal(out, [b, c, c])
    const = np.tile(HOVER, (25, 1))
    assert np.array_equal(shift_nominal(const), const)


def test_effective_sample_size():
    assert effective_sample_size(np.full(4, 0.25)) == pytest.approx(4.0)
    assert effective_sample_size(np.array([1.0, 0, 0])) == pytest.approx(1.0)


def test_iteration_diagnostics():
    goal = GoalSpec(np.array([2.0, 0, 2]))
    small = replace(CFG, K=16)
    updated, batch = mppi_iteration(State.at((0, 0, 2)), np.tile(HOVER, (25, 1)), lambda r: goal_cost(r, goal, CostWeights()), small, PARAMS, seed=0)
    d = batch.diagnostics
    assert d["min_cost"] <= d["mean_cost"]
    assert 1.0 <= d["ess"] <= 16
    assert updated.shape == (25, 4)
    assert np.all(updated >= PARAMS.control_lower) and np.all(updated <= PARAMS.control_upper)


def batched_goal_cost(x0, controls, goal, w):
    """Goal cost of many control sequences at once, ``controls`` shaped ``(K, N, 4)``."""
    K, N = controls.shape[:2]
    x = np.tile(x0, (K, 1))
    pos = np.zeros(K)
    vel = np.zeros(K)
    for t in range(N):
        pos += np.linalg.norm(x[:, :3] - goal, axis=1)
        vel += np.linalg.norm(x[:, 7:10], axis=1)
        x = rk4_step(x, controls[:, t], PARAMS)
    return w.q_p * pos + w.q_v * vel


def test_nominal_cost_improves_on_convex_problem():
    """Goal-cost-only problem from hover, 100 seeds x 10 iterations.

    The new nominal is close to the best sample, which can be marginally worse
    than the previous nominal, so a run counts as monotone when no iteration
    raises its cost by more than 1% of the starting cost. The mean over seeds
    (the expected cost) must decrease at every iteration.
    """
    w = CostWeights()
    x0 = State.at((0, 0, 2)).array
    goal = np.array([3.0, 1.0, 2.5])
    runs = []
    for seed in range(100):
        nominal = np.tile(HOVER, (CFG.N, 1))
        costs = [batched_goal_cost(x0, nominal[None], goal, w)[0]]
        for it in range(10):
            delta = sample_perturbations(CFG, seed, 0, 0, it)
            applied = clamp_control(nominal + delta, PARAMS) - nominal
            s = batched_goal_cost(x0, nominal + applied, goal, w)
            nominal = update_nominal(nominal, applied, compute_weights(s, CFG.lam), PARAMS)
            costs.append(batched_goal_cost(x0, nominal[None], goal, w)[0])
        runs.append(costs)
    runs = np.array(runs)
    monotone = np.all(np.diff(runs, axis=1) <= 0.01 * runs[:, :1], axis=1)
    assert monotone.sum() >= 95
    assert np.all(np.diff(runs.mean(axis=0)) <= 0)
    assert np.all(runs[:, -1] < runs[:, 0])
