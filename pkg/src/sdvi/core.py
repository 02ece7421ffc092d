"""Problem data model, convex sets with exact projections and trajectory containers."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Sequence

import numpy as np


class SdviError(Exception):
    pass


class DimensionError(SdviError, ValueError):
    """Raised when an array does not have the expected shape."""


class NonFiniteError(SdviError, ValueError):
    """Raised when NaN or infinite values show up where finite ones are required."""


def _as_vector(v, name="v") -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be a vector, got shape {arr.shape}")
    return arr


# ---------------------------------------------------------------------------
# Convex sets
# ---------------------------------------------------------------------------

class ConvexSet:
    """Closed convex subset of R^dim with a closed-form Euclidean projection."""

    dim: int

    def _project(self, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def project(self, v) -> np.ndarray:
        v = _as_vector(v)
        if v.shape[0] != self.dim:
            raise DimensionError(f"expected vector of length {self.dim}, got {v.shape[0]}")
        if not np.all(np.isfinite(v)):
            raise NonFiniteError("cannot project a non-finite vector")
        return self._project(v)

    def distance(self, v) -> float:
        v = _as_vector(v)
        return float(np.linalg.norm(v - self.project(v)))

    def contains(self, v, tol: float = 0.0) -> bool:
        return self.distance(v) <= tol


@dataclass(frozen=True)
class WholeSpace(ConvexSet):
    dim: int

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be positive")

    def _project(self, v):
        return v.copy()


@dataclass(frozen=True)
class NonnegOrthant(ConvexSet):
    dim: int

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be positive")

    def _project(self, v):
        return np.maximum(v, 0.0)


@dataclass(frozen=True, eq=False)
class Box(ConvexSet):
    """Componentwise bounds ``lower <= v <= upper``; use +-inf for a free side."""

    lower: np.ndarray
    upper: np.ndarray
    dim: int = field(init=False)

    def __post_init__(self):
        lower = _as_vector(self.lower, "lower").copy()
        upper = _as_vector(self.upper, "upper").copy()
        if lower.shape != upper.shape:
            raise DimensionError("lower and upper bounds differ in length")
        if np.any(np.isnan(lower)) or np.any(np.isnan(upper)):
            raise NonFiniteError("box bounds must not be NaN")
        if np.any(lower > upper):
            raise ValueError("box requires lower <= upper componentwise")
        lower.flags.writeable = False
        upper.flags.writeable = False
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "dim", lower.shape[0])

    def _project(self, v):
        return np.minimum(np.maximum(v, self.lower), self.upper)

    def __repr__(self):
        return f"Box(lower={self.lower.tolist()}, upper={self.upper.tolist()})"


@dataclass(frozen=True)
class ProductSet(ConvexSet):
    """Cartesian product; projection acts blockwise."""

    members: tuple
    dim: int = field(init=False)

    def __post_init__(self):
        members = tuple(self.members)
        if not members:
            raise ValueError("product of zero sets")
        object.__setattr__(self, "members", members)
        object.__setattr__(self, "dim", sum(s.dim for s in members))

    def _project(self, v):
        out = np.empty_like(v)
        start = 0
        for s in self.members:
            stop = start + s.dim
            out[start:stop] = s._project(v[start:stop])
            start = stop
        return out


def project(convex_set: ConvexSet, v) -> np.ndarray:
    """Nearest point of ``convex_set`` to ``v`` in the Euclidean norm."""
    return convex_set.project(v)


def distance_to_set(convex_set: ConvexSet, v) -> float:
    """``||v - project(convex_set, v)||``."""
    return convex_set.distance(v)


# ---------------------------------------------------------------------------
# Problem data
# ---------------------------------------------------------------------------

Drift = Callable[[float, np.ndarray, np.ndarray], np.ndarray]
Diffusion = Callable[[float, np.ndarray, np.ndarray], np.ndarray]
ViMap = Callable[[float, np.ndarray, np.ndarray, Any], np.ndarray]


@dataclass(frozen=True, eq=False)
class SdviProblem:
    """The SDVI data ``(f, g, F, K, x0, T)`` with initial-value boundary condition.

    ``drift(t, x, u)`` returns a length-``state_dim`` vector, ``diffusion(t, x, u)``
    a ``state_dim x noise_dim`` matrix and ``vi_map(t, x, u, scenario)`` a
    length-``control_dim`` vector. ``scenario`` is an opaque per-path handle for
    randomness in the VI map; deterministic maps simply ignore it.
    """

    state_dim: int
    control_dim: int
    noise_dim: int
    drift: Drift
    diffusion: Diffusion
    vi_map: ViMap
    constraint: ConvexSet
    initial_state: np.ndarray
    horizon: float
    name: str = "sdvi"

    def __post_init__(self):
        for attr in ("state_dim", "control_dim", "noise_dim"):
            if int(getattr(self, attr)) < 1:
                raise ValueError(f"{attr} must be a positive integer")
        x0 = _as_vector(self.initial_state, "initial_state").copy()
        if x0.shape[0] != self.state_dim:
            raise DimensionError(
                f"initial_state has length {x0.shape[0]}, expected {self.state_dim}")
        if not np.all(np.isfinite(x0)):
            raise NonFiniteError("initial_state must be finite")
        x0.flags.writeable = False
        object.__setattr__(self, "initial_state", x0)
        if self.constraint.dim != self.control_dim:
            raise DimensionError("constraint dimension must equal control_dim")
        if not (self.horizon > 0 and math.isfinite(self.horizon)):
            raise ValueError("horizon must be a positive finite number")
        object.__setattr__(self, "horizon", float(self.horizon))

    def eval_drift(self, t, x, u) -> np.ndarray:
        out = np.asarray(self.drift(t, x, u), dtype=np.float64).reshape(-1)
        if out.shape[0] != self.state_dim:
            raise DimensionError(f"drift returned length {out.shape[0]}, expected {self.state_dim}")
        return out

    def eval_diffusion(self, t, x, u) -> np.ndarray:
        out = np.asarray(self.diffusion(t, x, u), dtype=np.float64)
        if out.ndim == 1 and self.noise_dim == 1:
            out = out.reshape(-1, 1)
        if out.shape != (self.state_dim, self.noise_dim):
            raise DimensionError(
                f"diffusion returned shape {out.shape}, expected "
                f"{(self.state_dim, self.noise_dim)}")
        return out

    def eval_vi_map(self, t, x, u, scenario=None) -> np.ndarray:
        out = np.asarray(self.vi_map(t, x, u, scenario), dtype=np.float64).reshape(-1)
        if out.shape[0] != self.control_dim:
            raise DimensionError(f"vi_map returned length {out.shape[0]}, expected {self.control_dim}")
        return out


@dataclass(frozen=True)
class ProblemConstants:
    """Lipschitz, growth and strong-monotonicity constants of an SDVI.

    ``lip_F`` and ``mono_C`` drive the projection step of the VI solver. The
    optional fields are only compared against empirical ratios; ``None``
    means "not claimed".
    """

    lip_F: float
    mono_C: float
    lip_f: Optional[float] = None
    lip_g: Optional[float] = None
    growth_K1: Optional[float] = None
    growth_K2: Optional[float] = None

    def __post_init__(self):
        for name in ("lip_F", "mono_C", "lip_f", "lip_g", "growth_K1", "growth_K2"):
            value = getattr(self, name)
            if value is None:
                continue
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and nonnegative, got {value}")
        if self.lip_F <= 0 or self.mono_C <= 0:
            raise ValueError("lip_F and mono_C must be strictly positive")
        # Strong monotonicity plus Lipschitz continuity force C <= L_F.
        if self.mono_C > self.lip_F:
            raise ValueError(f"mono_C={self.mono_C} exceeds lip_F={self.lip_F}")

    @property
    def max_rho(self) -> float:
        """Upper end of the admissible projection-step interval ``(0, 2C/L_F^2)``."""
        return 2.0 * self.mono_C / self.lip_F ** 2


@dataclass(frozen=True, eq=False)
class PathSolution:
    """Discrete trajectories ``x_h(t_i)`` and ``u_h(t_i)`` of one sample path."""

    grid: Any  # sampler.TimeGrid
    states: np.ndarray
    controls: np.ndarray
    vi_iterations: np.ndarray
    seed: int
    path_index: int
    vi_converged: Optional[np.ndarray] = None
    outer_iterations: Optional[int] = None
    outer_converged: Optional[bool] = None
    # Off-grid Brownian values for the continuous interpolant: (times, B values).
    substep_times: Optional[np.ndarray] = None
    substep_brownian: Optional[np.ndarray] = None

    def __post_init__(self):
        n = self.grid.num_steps + 1
        for name in ("states", "controls", "vi_iterations"):
            arr = getattr(self, name)
            if arr.shape[0] != n:
                raise DimensionError(f"{name} has {arr.shape[0]} rows, expected {n}")
        for name in ("states", "controls", "vi_iterations", "vi_converged"):
            arr = getattr(self, name)
            if arr is not None:
                arr.flags.writeable = False

    @property
    def times(self) -> np.ndarray:
        return self.grid.nodes

    @property
    def converged(self) -> bool:
        return self.vi_converged is None or bool(np.all(self.vi_converged))


def product(sets: Sequence[ConvexSet]) -> ProductSet:
    return ProductSet(tuple(sets))
