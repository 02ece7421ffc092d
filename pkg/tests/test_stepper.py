import math

import numpy as np
import pytest

from sdvi.core import NonFiniteError, SdviProblem, WholeSpace
from sdvi.examples import (BridgeParams, CircuitParams, bridge_vi_oracle, build, build_bridge,
                           default_solver_config)
from sdvi.sampler import BrownianPath, make_grid, sample_brownian
from sdvi.stepper import EulerConfig, PicardConfig, euler_path, interpolate_state, picard_path
from sdvi.vi import ViSolverConfig

# max_i |u_i| / (1 + max_i |x_i|) measured over 20 seeds on both examples
# (bridge <= 3 exactly, circuit with a=b=c=1 peaked at 3.48); frozen here.
CONTROL_GROWTH_BOUND = 5.0


def linear_problem(drift, diffusion, n=2, l=1, horizon=1.0, x0=None):
    return SdviProblem(state_dim=n, control_dim=1, noise_dim=l, drift=drift,
                       diffusion=diffusion, vi_map=lambda t, x, u, s: np.zeros(1),
                       constraint=WholeSpace(1),
                       initial_state=np.zeros(n) if x0 is None else x0, horizon=horizon)


def zero_map_config():
    # F == 0 on the whole space: any start point is already a fixed point.
    return EulerConfig(ViSolverConfig(rho=1.0))


def test_single_deterministic_step():
    prob = linear_problem(lambda t, x, u: np.array([1.0, 0.0]), lambda t, x, u: np.zeros((2, 1)))
    path = sample_brownian(make_grid(1.0, 10), 1, seed=0)
    sol = euler_path(prob, path, zero_map_config())
    np.testing.assert_allclose(sol.states[1], [0.1, 0.0], rtol=1e-15)
    assert sol.states.shape == (11, 2)
    assert sol.controls.shape == (11, 1)


def test_pure_noise_telescopes():
    prob = linear_problem(lambda t, x, u: np.zeros(2), lambda t, x, u: np.eye(2), l=2)
    path = sample_brownian(make_grid(1.0, 64), 2, seed=3)
    sol = euler_path(prob, path, zero_map_config())
    np.testing.assert_allclose(sol.states[-1], path.values[-1], rtol=0, atol=1e-14)


@pytest.mark.parametrize("seed", range(5))
def test_bridge_controls_match_oracle(seed):
    params = BridgeParams()
    prob = build_bridge(params)
    path = sample_brownian(make_grid(1.0, 50), 1, seed)
    sol = euler_path(prob, path, EulerConfig(default_solver_config(params)))
    oracle = np.array([bridge_vi_oracle(y1) for y1 in sol.states[:, 0]])
    assert np.all(np.abs(sol.controls[:, 0] - oracle) <= 1e-8)
    assert sol.converged


def test_euler_step_formula_on_bridge():
    params = BridgeParams(tau=0.5, k=2.0, theta=1.0)
    prob = build_bridge(params)
    path = sample_brownian(make_grid(1.0, 20), 1, seed=4)
    sol = euler_path(prob, path, EulerConfig(default_solver_config(params)))
    h = path.grid.step
    for i in range(20):
        t, x, u = path.grid.nodes[i], sol.states[i], sol.controls[i]
        expected = x + (prob.eval_drift(t, x, u) * h + prob.eval_diffusion(t, x, u) @ path.increments[i])
        np.testing.assert_array_equal(sol.states[i + 1], expected)


def test_warm_start_chain_and_iteration_counts():
    params = BridgeParams()
    prob = build_bridge(params)
    sol = euler_path(prob, sample_brownian(make_grid(1.0, 10), 1, 0),
                     EulerConfig(default_solver_config(params)))
    assert sol.vi_iterations.shape == (11,)
    assert np.all(sol.vi_iterations >= 1)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_state_names_node():
    prob = linear_problem(lambda t, x, u: 1e200 * (1 + x ** 2), lambda t, x, u: np.zeros((2, 1)))
    path = sample_brownian(make_grid(1.0, 10), 1, seed=0)
    with pytest.raises(NonFiniteError, match="node"):
        euler_path(prob, path, zero_map_config())


def test_path_mismatch_rejected():
    prob = build_bridge()
    with pytest.raises(ValueError):
        euler_path(prob, sample_brownian(make_grid(2.0, 10), 1, 0),
                   EulerConfig(default_solver_config(BridgeParams())))
    with pytest.raises(ValueError):
        euler_path(prob, sample_brownian(make_grid(1.0, 10), 2, 0),
                   EulerConfig(default_solver_config(BridgeParams())))


def test_nonconvergence_is_recorded(caplog):
    params = CircuitParams(epsilon=0.1)
    prob = build(params)
    cfg = EulerConfig(default_solver_config(params, max_iter=5))
    with caplog.at_level("WARNING", logger="sdvi.stepper"):
        sol = euler_path(prob, sample_brownian(make_grid(1.5, 5), 1, 0), cfg)
    assert not sol.converged
    assert not np.any(sol.vi_converged)
    assert "did not converge" in caplog.text


def test_interpolant_at_nodes_returns_stored_state():
    params = BridgeParams()
    prob = build_bridge(params)
    path = sample_brownian(make_grid(1.0, 10), 1, 2)
    sol = euler_path(prob, path, EulerConfig(default_solver_config(params)))
    for i, t in enumerate(path.grid.nodes):
        np.testing.assert_array_equal(interpolate_state(sol, prob, path, t), sol.states[i])


def test_interpolant_midpoint_without_noise():
    params = BridgeParams(k=0.0, theta=1.0)
    prob = build_bridge(params)
    path = sample_brownian(make_grid(1.0, 10), 1, 2)
    sol = euler_path(prob, path, EulerConfig(default_solver_config(params), record_interpolant=True,
                                             interpolant_substeps=2))
    h = 0.1
    for i in range(10):
        t_i = path.grid.nodes[i]
        x, u = sol.states[i], sol.controls[i]
        expected = x + 0.5 * h * prob.eval_drift(t_i, x, u)
        np.testing.assert_allclose(interpolate_state(sol, prob, path, t_i + 0.5 * h), expected,
                                   rtol=1e-14, atol=1e-15)


def test_interpolant_left_limit_matches_next_node():
    params = BridgeParams()
    prob = build_bridge(params)
    path = sample_brownian(make_grid(1.0, 10), 1, 5)
    sol = euler_path(prob, path, EulerConfig(default_solver_config(params), record_interpolant=True,
                                             interpolant_substeps=4))
    for i in range(10):
        left = interpolate_state(sol, prob, path, path.grid.nodes[i + 1], interval=i)
        np.testing.assert_allclose(left, sol.states[i + 1], rtol=1e-14, atol=1e-15)


def test_interpolant_errors():
    params = BridgeParams()
    prob = build_bridge(params)
    path = sample_brownian(make_grid(1.0, 10), 1, 5)
    sol = euler_path(prob, path, EulerConfig(default_solver_config(params)))
    with pytest.raises(ValueError):
        interpolate_state(sol, prob, path, 0.05)
    with pytest.raises(ValueError):
        interpolate_state(sol, prob, path, 1.5)
    with pytest.raises(ValueError):
        interpolate_state(sol, prob, path, -0.1)


def test_picard_single_step():
    params = BridgeParams(theta=1.0)
    prob = build_bridge(params)
    path = sample_brownian(make_grid(1.0, 1), 1, 0)
    vi = default_solver_config(params)
    pic = picard_path(prob, path, PicardConfig(vi))
    eul = euler_path(prob, path, EulerConfig(vi))
    assert pic.outer_iterations == 1 and pic.outer_converged
    np.testing.assert_array_equal(pic.states, eul.states)


def test_picard_constant_map():
    prob = linear_problem(lambda t, x, u: np.zeros(2), lambda t, x, u: np.zeros((2, 1)),
                          x0=np.array([1.0, -2.0]))
    path = sample_brownian(make_grid(1.0, 20), 1, 0)
    sol = picard_path(prob, path, PicardConfig(ViSolverConfig(rho=1.0)))
    assert sol.outer_iterations == 1
    assert np.all(sol.states == [1.0, -2.0])


@pytest.mark.parametrize("params, steps", [(BridgeParams(), 50), (BridgeParams(tau=2, k=10), 10),
                                           (CircuitParams(epsilon=0.5, a=1, b=1, c=1), 10)])
def test_picard_matches_euler(params, steps):
    prob = build(params)
    vi = default_solver_config(params)
    path = sample_brownian(make_grid(prob.horizon, steps), 1, 11)
    pic = picard_path(prob, path, PicardConfig(vi))
    eul = euler_path(prob, path, EulerConfig(vi))
    assert pic.outer_converged
    assert pic.outer_iterations <= steps
    assert np.max(np.abs(pic.states - eul.states)) <= 1e-12
    assert np.max(np.abs(pic.controls - eul.controls)) <= 1e-12


def test_picard_round_limit():
    params = BridgeParams()
    prob = build(params)
    path = sample_brownian(make_grid(1.0, 20), 1, 0)
    sol = picard_path(prob, path, PicardConfig(default_solver_config(params), max_outer=2))
    assert not sol.outer_converged
    assert sol.outer_iterations == 2


def test_zero_noise_is_seed_independent():
    params = BridgeParams(k=0.0, theta=0.5)
    prob = build(params)
    cfg = EulerConfig(default_solver_config(params))
    grid = make_grid(1.0, 50)
    ref = euler_path(prob, sample_brownian(grid, 1, 0), cfg)
    for seed in (1, 2, 99):
        sol = euler_path(prob, sample_brownian(grid, 1, seed), cfg)
        assert sol.states.tobytes() == ref.states.tobytes()
        assert sol.controls.tobytes() == ref.controls.tobytes()


@pytest.mark.parametrize("params", [BridgeParams(), CircuitParams(epsilon=0.5, a=1, b=1, c=1)])
def test_adaptedness(params):
    prob = build(params)
    cfg = EulerConfig(default_solver_config(params))
    path = sample_brownian(make_grid(prob.horizon, 20), 1, 8)
    base = euler_path(prob, path, cfg)
    for cut in (0, 7, 19):
        inc = path.increments.copy()
        inc[cut:] += 1.0
        bumped = euler_path(prob, BrownianPath(path.grid, 1, inc, path.seed, path.path_index), cfg)
        # x_i and u_i use dB_0 .. dB_{i-1} only.
        assert bumped.states[:cut + 1].tobytes() == base.states[:cut + 1].tobytes()
        assert bumped.controls[:cut + 1].tobytes() == base.controls[:cut + 1].tobytes()
        assert not np.array_equal(bumped.states[cut + 1:], base.states[cut + 1:])


@pytest.mark.parametrize("params, steps", [
    (BridgeParams(), 50), (BridgeParams(tau=0.0, k=10.0, theta=1.0), 50),
    (CircuitParams(epsilon=0.1), 30), (CircuitParams(epsilon=0.1, a=1, b=1, c=1), 30),
    (CircuitParams(epsilon=1.0, a=1, b=1, c=1), 30)])
def test_control_growth_regression(params, steps):
    prob = build(params)
    cfg = EulerConfig(default_solver_config(params, acceleration="anderson"))
    grid = make_grid(prob.horizon, steps)
    for seed in range(10):
        sol = euler_path(prob, sample_brownian(grid, 1, seed), cfg)
        u_max = np.linalg.norm(sol.controls, axis=1).max()
        x_max = np.linalg.norm(sol.states, axis=1).max()
        assert u_max <= CONTROL_GROWTH_BOUND * (1 + x_max)


def test_config_validation():
    vi = ViSolverConfig(rho=1.0)
    with pytest.raises(ValueError):
        EulerConfig(vi, interpolant_substeps=0)
    with pytest.raises(ValueError):
        PicardConfig(vi, max_outer=0)
    with pytest.raises(ValueError):
        PicardConfig(vi, outer_tol=0.0)


def test_solution_is_read_only():
    params = BridgeParams()
    sol = euler_path(build(params), sample_brownian(make_grid(1.0, 4), 1, 0),
                     EulerConfig(default_solver_config(params)))
    with pytest.raises(ValueError):
        sol.states[0, 0] = 1.0
    assert math.isclose(sol.times[-1], 1.0)
