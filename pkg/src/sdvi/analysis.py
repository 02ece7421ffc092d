"""Ensemble statistics, discrete H-norms and strong convergence order estimates."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import List, Optional, Sequence

import numpy as np

from .core import PathSolution, SdviError, SdviProblem
from .sampler import TimeGrid, coarsen, sample_brownian
from .stepper import EulerConfig, euler_path


@dataclass(frozen=True, eq=False)
class EnsembleResult:
    num_paths: int
    grid: TimeGrid
    mean_state: np.ndarray
    var_state: np.ndarray
    mean_control: np.ndarray
    var_control: np.ndarray
    per_path: Optional[List[PathSolution]] = None
    nonconverged_nodes: int = 0


class PathError(SdviError):
    """A hard error raised while integrating one path of an ensemble."""

    def __init__(self, path_index: int, cause: Exception):
        super().__init__(f"path {path_index}: {cause}")
        self.path_index = path_index
        self.cause = cause


def run_ensemble(problem: SdviProblem, grid: TimeGrid, num_paths: int, seed: int,
                 config: EulerConfig, keep_paths: bool = False) -> EnsembleResult:
    """Integrate paths ``0 .. num_paths-1`` and collect node-wise mean and variance.

    Variances are population variances (``ddof=0``), so a single path has zero
    variance everywhere. Reductions run in path-index order. Variances are taken
    about the first path (shift invariance), which makes them exactly zero when
    all paths coincide.
    """
    if num_paths < 1:
        raise ValueError("num_paths must be at least 1")
    states = np.empty((num_paths, grid.num_steps + 1, problem.state_dim))
    controls = np.empty((num_paths, grid.num_steps + 1, problem.control_dim))
    kept = [] if keep_paths else None
    bad_nodes = 0
    for p in range(num_paths):
        path = sample_brownian(grid, problem.noise_dim, seed, p)
        try:
            sol = euler_path(problem, path, config)
        except SdviError as exc:
            raise PathError(p, exc) from exc
        states[p] = sol.states
        controls[p] = sol.controls
        bad_nodes += int(np.count_nonzero(~sol.vi_converged))
        if keep_paths:
            kept.append(sol)
    return EnsembleResult(
        num_paths=num_paths, grid=grid,
        mean_state=states.mean(axis=0), var_state=(states - states[0]).var(axis=0),
        mean_control=controls.mean(axis=0), var_control=(controls - controls[0]).var(axis=0),
        per_path=kept, nonconverged_nodes=bad_nodes)


def _trajectory(a, which: str):
    if isinstance(a, PathSolution):
        return (a.states if which == "states" else a.controls), a.grid.step
    return np.asarray(a, dtype=np.float64), None


def discrete_h_norm(a, b, step: Optional[float] = None, which: str = "states") -> float:
    """Grid version of ``(int_0^T ||a(t) - b(t)||^2 dt)^(1/2)`` for one path.

    ``a`` and ``b`` are :class:`PathSolution` objects on the same grid (``which``
    picks states or controls) or arrays of shape ``(N+1, d)`` with an explicit
    ``step``. The integral is the left Riemann sum over nodes ``0 .. N-1``,
    i.e. the exact norm of the piecewise-constant interpolants.
    """
    if which not in ("states", "controls"):
        raise ValueError("which must be 'states' or 'controls'")
    if isinstance(a, PathSolution) and isinstance(b, PathSolution) and a.grid != b.grid:
        raise ValueError(f"grid mismatch: {a.grid} vs {b.grid}")
    ta, ha = _trajectory(a, which)
    tb, hb = _trajectory(b, which)
    h = step if step is not None else (ha if ha is not None else hb)
    if h is None:
        raise ValueError("step is required for plain arrays")
    if ta.shape != tb.shape:
        raise ValueError(f"grid mismatch: shapes {ta.shape} vs {tb.shape}")
    if ta.ndim == 1:
        ta, tb = ta[:, None], tb[:, None]
    diff = ta[:-1] - tb[:-1]
    return math.sqrt(h * float(np.sum(diff * diff)))


def ensemble_h_norm(per_path_norms: Sequence[float]) -> float:
    """Monte Carlo ``(E int ||.||^2)^(1/2)``: mean of squared per-path norms, then root."""
    arr = np.asarray(per_path_norms, dtype=np.float64)
    return math.sqrt(float(np.mean(arr * arr)))


def restrict(fine: np.ndarray, factor: int) -> np.ndarray:
    """Fine-grid trajectory sampled at the nodes of a grid ``factor`` times coarser."""
    return np.asarray(fine)[::factor]


def fit_order(step_sizes, errors) -> float:
    """Least-squares slope of ``log(error)`` against ``log(h)``; NaN if any error is 0."""
    h = np.asarray(step_sizes, dtype=np.float64)
    e = np.asarray(errors, dtype=np.float64)
    if np.any(e <= 0):
        return math.nan
    slope, _ = np.polyfit(np.log(h), np.log(e), 1)
    return float(slope)


@dataclass(frozen=True)
class ConvergenceReport:
    step_sizes: List[float]
    errors_state: List[float]
    errors_control: List[float]
    fitted_order_state: float
    fitted_order_control: float
    num_paths: int
    seed: int
    fine_steps: int = 0
    levels: int = 0
    problem: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def estimate_strong_order(problem: SdviProblem, fine_steps: int, levels: int,
                          num_paths: int, seed: int,
                          config: Optional[EulerConfig] = None) -> ConvergenceReport:
    """Empirical strong order of the Euler scheme by coupled refinement.

    Each path draws one Brownian path on the ``fine_steps`` grid; the Euler
    solution there is the reference. Coarse solutions with steps
    ``h * 2**L`` (``L = 1 .. levels``) use the coarsened increments of the same
    path, and their errors are ensemble discrete H-norms against the reference
    restricted to the coarse nodes. ``step_sizes`` run from coarsest to finest.
    """
    if levels < 2:
        raise ValueError("at least 2 refinement levels are needed to fit an order")
    if fine_steps % (2 ** levels):
        raise ValueError(f"fine_steps={fine_steps} is not divisible by 2**levels={2 ** levels}")
    if num_paths < 30:
        raise ValueError("num_paths must be at least 30")
    if config is None:
        raise ValueError("an EulerConfig is required")
    grid = TimeGrid(problem.horizon, fine_steps)
    factors = [2 ** L for L in range(levels, 0, -1)]
    sq_x = np.zeros((len(factors), num_paths))
    sq_u = np.zeros((len(factors), num_paths))
    for p in range(num_paths):
        master = sample_brownian(grid, problem.noise_dim, seed, p)
        try:
            ref = euler_path(problem, master, config)
            for j, factor in enumerate(factors):
                sol = euler_path(problem, coarsen(master, factor), config)
                h = sol.grid.step
                sq_x[j, p] = discrete_h_norm(sol.states, restrict(ref.states, factor), h) ** 2
                sq_u[j, p] = discrete_h_norm(sol.controls, restrict(ref.controls, factor), h) ** 2
        except SdviError as exc:
            raise PathError(p, exc) from exc
    step_sizes = [grid.step * f for f in factors]
    err_x = [math.sqrt(float(np.mean(row))) for row in sq_x]
    err_u = [math.sqrt(float(np.mean(row))) for row in sq_u]
    return ConvergenceReport(
        step_sizes=step_sizes, errors_state=err_x, errors_control=err_u,
        fitted_order_state=fit_order(step_sizes, err_x),
        fitted_order_control=fit_order(step_sizes, err_u),
        num_paths=num_paths, seed=seed, fine_steps=fine_steps, levels=levels,
        problem=problem.name)
