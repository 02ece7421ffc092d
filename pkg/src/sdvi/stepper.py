"""Euler time stepping and frozen-noise Picard iteration for SDVIs.

The Euler scheme solves the VI at node ``t_i`` and then steps the state::

    u_i     solves  <F(t_i, x_i, u), v - u> >= 0  for all v in K
    x_{i+1} = x_i + f(t_i, x_i, u_i) h + g(t_i, x_i, u_i) dB_i

with ``u`` held constant on ``[t_i, t_{i+1})``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import NonFiniteError, PathSolution, SdviProblem
from .sampler import BrownianPath, Scenario
from .vi import ViSolverConfig, solve_vi

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EulerConfig:
    vi_config: ViSolverConfig
    record_interpolant: bool = False
    interpolant_substeps: int = 1

    def __post_init__(self):
        if int(self.interpolant_substeps) != self.interpolant_substeps or self.interpolant_substeps < 1:
            raise ValueError("interpolant_substeps must be a positive integer")


@dataclass(frozen=True)
class PicardConfig:
    vi_config: ViSolverConfig
    outer_tol: float = 1e-12
    max_outer: Optional[int] = None  # defaults to 2 * num_steps

    def __post_init__(self):
        if self.max_outer is not None and self.max_outer < 1:
            raise ValueError("max_outer must be at least 1")
        if not self.outer_tol > 0:
            raise ValueError("outer_tol must be positive")


def _check_path(problem: SdviProblem, path: BrownianPath):
    if path.noise_dim != problem.noise_dim:
        raise ValueError(f"path has noise_dim {path.noise_dim}, problem expects {problem.noise_dim}")
    if not math.isclose(path.grid.horizon, problem.horizon, rel_tol=1e-12):
        raise ValueError(f"path horizon {path.grid.horizon} != problem horizon {problem.horizon}")


def euler_path(problem: SdviProblem, path: BrownianPath, config: EulerConfig) -> PathSolution:
    """Integrate one sample path with the Euler scheme.

    The VI at node ``i`` is warm-started from ``u_{i-1}``; at ``t_0`` from
    ``config.vi_config.warm_start`` (projected into ``K``) or zero.

    Raises
    ------
    NonFiniteError
        If a state becomes NaN or infinite; the message names the node.
    """
    _check_path(problem, path)
    grid = path.grid
    N, h = grid.num_steps, grid.step
    t_nodes = grid.nodes
    vi_config = config.vi_config
    states = np.empty((N + 1, problem.state_dim))
    controls = np.empty((N + 1, problem.control_dim))
    iters = np.zeros(N + 1, dtype=np.int64)
    conv = np.ones(N + 1, dtype=bool)
    states[0] = problem.initial_state
    warm = vi_config.warm_start

    s = config.interpolant_substeps if config.record_interpolant else 1
    sub_times = sub_b = None
    if config.record_interpolant:
        sub_times = np.empty(N * s + 1)
        sub_b = np.empty((N * s + 1, problem.noise_dim))

    x = states[0]
    for i in range(N + 1):
        t = t_nodes[i]
        res = solve_vi(problem, t, x, Scenario(path.seed, path.path_index, i), vi_config,
                       warm_start=warm)
        u = res.solution
        controls[i] = u
        iters[i] = res.iterations
        conv[i] = res.converged
        if not res.converged:
            log.warning("VI did not converge at node %d (t=%g, path %d): residual %.3g",
                        i, t, path.path_index, res.final_residual)
        warm = u
        if i == N:
            break
        drift = problem.eval_drift(t, x, u)
        diff = problem.eval_diffusion(t, x, u)
        dB = path.increments[i]
        # Same association as the Picard sum, so both paths agree bitwise.
        x_next = x + (drift * h + diff @ dB)
        if not np.all(np.isfinite(x_next)):
            raise NonFiniteError(f"state became non-finite at node {i + 1} (t={t_nodes[i + 1]})")
        if config.record_interpolant:
            for j in range(s):
                k = i * s + j
                frac = j / s
                sub_times[k] = t + frac * h
                sub_b[k] = path.values[i] + math.sqrt(frac) * dB
        states[i + 1] = x_next
        x = x_next

    if config.record_interpolant:
        sub_times[-1] = t_nodes[-1]
        sub_b[-1] = path.values[-1]
    return PathSolution(grid=grid, states=states, controls=controls, vi_iterations=iters,
                        seed=path.seed, path_index=path.path_index, vi_converged=conv,
                        substep_times=sub_times, substep_brownian=sub_b)


def interpolate_state(sol: PathSolution, problem: SdviProblem, path: BrownianPath,
                      t: float, interval: Optional[int] = None) -> np.ndarray:
    """Continuous Euler interpolant ``x_h(t)``.

    On ``[t_i, t_{i+1})``::

        x_h(t) = x_i + f(t_i, x_i, u_i) (t - t_i) + g(t_i, x_i, u_i) (B_t - B_{t_i})

    Off-grid Brownian values are those recorded by :func:`euler_path` with
    ``record_interpolant=True``; between nodes they are
    ``B_{t_i} + sqrt((t - t_i)/h) dB_i``, the scaled increment of the same
    interval. Grid nodes return the stored state exactly. ``interval`` selects
    the interval formula explicitly, e.g. ``interval=i`` with ``t = t_{i+1}``
    evaluates the left limit at ``t_{i+1}``.
    """
    grid = sol.grid
    T, h, N = grid.horizon, grid.step, grid.num_steps
    if not (0.0 <= t <= T):
        raise ValueError(f"t={t} outside [0, {T}]")
    eps = 1e-12 * max(1.0, T)
    if interval is None:
        node = int(round(t / h))
        if abs(t - grid.nodes[node]) <= eps:
            return sol.states[node].copy()
        interval = min(int(math.floor(t / h)), N - 1)
    elif not (0 <= interval < N):
        raise ValueError(f"interval {interval} outside [0, {N})")
    t_i = grid.nodes[interval]
    if not (t_i - eps <= t <= grid.nodes[interval + 1] + eps):
        raise ValueError(f"t={t} not in interval {interval}")
    if abs(t - grid.nodes[interval + 1]) <= eps:
        b_t = path.values[interval + 1]
    elif abs(t - t_i) <= eps:
        b_t = path.values[interval]
    else:
        if sol.substep_times is None:
            raise ValueError(f"t={t} is off-grid and no interpolant substeps were recorded")
        k = int(np.argmin(np.abs(sol.substep_times - t)))
        if abs(sol.substep_times[k] - t) > eps:
            raise ValueError(f"t={t} is not a recorded substep time")
        b_t = sol.substep_brownian[k]
    x_i, u_i = sol.states[interval], sol.controls[interval]
    drift = problem.eval_drift(t_i, x_i, u_i)
    diff = problem.eval_diffusion(t_i, x_i, u_i)
    return x_i + drift * (t - t_i) + diff @ (b_t - path.values[interval])


def picard_path(problem: SdviProblem, path: BrownianPath, config: PicardConfig) -> PathSolution:
    """Whole-path Picard iteration with frozen noise.

    Starting from ``x^(1) = x0`` at every node, each round solves the VI at all
    nodes for the current states and rebuilds the states as
    ``x^(n+1)_i = x0 + sum_{k<i} (f_k h + g_k dB_k)``. The iteration stops when
    no node moves by more than ``outer_tol``. Its fixed point is the Euler
    path, and node ``i`` is final after ``i`` rounds.

    ``outer_iterations`` of the result counts the rounds that produced new
    states; the final confirming round is only counted when it is the first.
    """
    _check_path(problem, path)
    grid = path.grid
    N, h = grid.num_steps, grid.step
    t_nodes = grid.nodes
    vi_config = config.vi_config
    max_outer = config.max_outer if config.max_outer is not None else 2 * N
    x0 = problem.initial_state
    states = np.tile(x0, (N + 1, 1))
    controls = np.empty((N + 1, problem.control_dim))
    iters = np.zeros(N + 1, dtype=np.int64)
    conv = np.ones(N + 1, dtype=bool)
    # VI solves are pure in (node, x, warm start): reuse them when inputs repeat.
    cache = [None] * (N + 1)

    rounds = 0
    converged = False
    while rounds < max_outer:
        rounds += 1
        warm = vi_config.warm_start
        for i in range(N + 1):
            x_i = states[i]
            key = (x_i.tobytes(), None if warm is None else np.asarray(warm).tobytes())
            hit = cache[i]
            if hit is not None and hit[0] == key:
                res = hit[1]
            else:
                res = solve_vi(problem, t_nodes[i], x_i,
                               Scenario(path.seed, path.path_index, i), vi_config,
                               warm_start=warm)
                cache[i] = (key, res)
            controls[i] = res.solution
            iters[i] = res.iterations
            conv[i] = res.converged
            warm = res.solution
        new_states = np.empty_like(states)
        new_states[0] = x0
        acc = new_states[0]
        for k in range(N):
            t = t_nodes[k]
            incr = (problem.eval_drift(t, states[k], controls[k]) * h
                    + problem.eval_diffusion(t, states[k], controls[k]) @ path.increments[k])
            acc = acc + incr
            new_states[k + 1] = acc
        if not np.all(np.isfinite(new_states)):
            bad = int(np.argmax(~np.all(np.isfinite(new_states), axis=1)))
            raise NonFiniteError(f"state became non-finite at node {bad} in Picard round {rounds}")
        change = float(np.max(np.abs(new_states - states)))
        states = new_states
        if change <= config.outer_tol:
            converged = True
            break

    if not converged:
        log.warning("Picard iteration stopped after %d rounds without converging", rounds)
    outer = rounds - 1 if converged and rounds > 1 else rounds
    return PathSolution(grid=grid, states=states, controls=controls, vi_iterations=iters,
                        seed=path.seed, path_index=path.path_index, vi_converged=conv,
                        outer_iterations=outer, outer_converged=converged)
