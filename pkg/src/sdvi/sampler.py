"""Uniform time grids, seeded Brownian increments and refinement coupling.

Per-path streams
----------------
The generator for path ``p`` of a run with seed ``s`` is a numpy ``PCG64``
seeded with the 64-bit integer ``stream_key(s, p)``::

    stream_key(s, p) = splitmix64(splitmix64(s) ^ splitmix64(p + 0x9E3779B97F4A7C15))

so every path can be regenerated on its own, in any order.

Normal variates
---------------
Standard normals come from the Box-Muller transform applied to pairs of
``PCG64`` uniforms ``u1, u2`` (53-bit doubles, ``u1`` mapped into ``(0, 1]``)::

    z_even = sqrt(-2 ln u1) cos(2 pi u2),  z_odd = sqrt(-2 ln u1) sin(2 pi u2)

This is kept fixed so that golden values stay valid across numpy versions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(x: int) -> int:
    """One round of the SplitMix64 finalizer on a 64-bit integer."""
    z = (x + _GOLDEN) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def stream_key(seed: int, path_index: int, salt: int = 0) -> int:
    if path_index < 0:
        raise ValueError("path_index must be nonnegative")
    key = splitmix64(seed & _MASK64) ^ splitmix64((path_index + _GOLDEN) & _MASK64)
    if salt:
        key ^= splitmix64((salt * _GOLDEN) & _MASK64)
    return splitmix64(key)


def path_generator(seed: int, path_index: int, salt: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(stream_key(seed, path_index, salt)))


def box_muller(rng: np.random.Generator, size: int) -> np.ndarray:
    """``size`` standard normals via Box-Muller on ``rng`` uniforms."""
    pairs = (size + 1) // 2
    u1 = 1.0 - rng.random(pairs)  # (0, 1]
    u2 = rng.random(pairs)
    radius = np.sqrt(-2.0 * np.log(u1))
    angle = 2.0 * np.pi * u2
    z = np.empty(2 * pairs)
    z[0::2] = radius * np.cos(angle)
    z[1::2] = radius * np.sin(angle)
    return z[:size]


@dataclass(frozen=True, eq=False)
class TimeGrid:
    horizon: float
    num_steps: int

    def __post_init__(self):
        if not (self.horizon > 0 and math.isfinite(self.horizon)):
            raise ValueError(f"horizon must be positive and finite, got {self.horizon}")
        if int(self.num_steps) != self.num_steps or self.num_steps < 1:
            raise ValueError(f"num_steps must be a positive integer, got {self.num_steps}")
        object.__setattr__(self, "horizon", float(self.horizon))
        object.__setattr__(self, "num_steps", int(self.num_steps))

    @property
    def step(self) -> float:
        return self.horizon / self.num_steps

    @cached_property
    def nodes(self) -> np.ndarray:
        # i*h rather than a cumulative sum, so nodes[i] is exactly i*h.
        nodes = np.arange(self.num_steps + 1) * self.step
        nodes[-1] = self.horizon
        nodes.flags.writeable = False
        return nodes

    def __eq__(self, other):
        if not isinstance(other, TimeGrid):
            return NotImplemented
        return self.horizon == other.horizon and self.num_steps == other.num_steps

    def __hash__(self):
        return hash((self.horizon, self.num_steps))

    def __repr__(self):
        return f"TimeGrid(horizon={self.horizon!r}, num_steps={self.num_steps})"


def make_grid(horizon: float, num_steps: int) -> TimeGrid:
    return TimeGrid(horizon, num_steps)


@dataclass(frozen=True, eq=False)
class BrownianPath:
    """Wiener increments ``dB_i = B(t_{i+1}) - B(t_i)`` on a grid, shape ``(N, l)``."""

    grid: TimeGrid
    noise_dim: int
    increments: np.ndarray
    seed: int
    path_index: int
    values: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        inc = np.asarray(self.increments, dtype=np.float64)
        if inc.shape != (self.grid.num_steps, self.noise_dim):
            raise ValueError(
                f"increments have shape {inc.shape}, expected "
                f"{(self.grid.num_steps, self.noise_dim)}")
        inc = inc.copy()
        inc.flags.writeable = False
        values = np.zeros((self.grid.num_steps + 1, self.noise_dim))
        np.cumsum(inc, axis=0, out=values[1:])
        values.flags.writeable = False
        object.__setattr__(self, "increments", inc)
        object.__setattr__(self, "values", values)


def sample_brownian(grid: TimeGrid, noise_dim: int, seed: int, path_index: int = 0) -> BrownianPath:
    """Draw ``grid.num_steps`` increments ``sqrt(h) * Z`` for path ``path_index``.

    The result depends only on ``(grid, noise_dim, seed, path_index)``.
    """
    if noise_dim < 1:
        raise ValueError("noise_dim must be positive")
    rng = path_generator(seed, path_index)
    z = box_muller(rng, grid.num_steps * noise_dim).reshape(grid.num_steps, noise_dim)
    return BrownianPath(grid, noise_dim, math.sqrt(grid.step) * z, seed, path_index)


def coarsen(path: BrownianPath, factor: int) -> BrownianPath:
    """Same Brownian motion seen on a grid ``factor`` times coarser.

    Coarse increment ``j`` is the left-to-right sum of fine increments
    ``j*factor .. (j+1)*factor - 1``.
    """
    if int(factor) != factor or factor < 1:
        raise ValueError(f"factor must be a positive integer, got {factor}")
    n = path.grid.num_steps
    if n % factor:
        raise ValueError(f"factor {factor} does not divide num_steps {n}")
    if factor == 1:
        return path
    blocks = path.increments.reshape(n // factor, factor, path.noise_dim)
    coarse = blocks[:, 0, :].copy()
    for k in range(1, factor):
        coarse += blocks[:, k, :]
    return BrownianPath(TimeGrid(path.grid.horizon, n // factor), path.noise_dim,
                        coarse, path.seed, path.path_index)


class Scenario:
    """Per-path randomness handle passed to ``vi_map``.

    ``rng`` is a generator keyed by ``(seed, path_index, node)``; it is built
    lazily, so maps that ignore the scenario pay nothing for it.
    """

    __slots__ = ("seed", "path_index", "node", "_rng")

    def __init__(self, seed: int, path_index: int, node: int = 0):
        self.seed = seed
        self.path_index = path_index
        self.node = node
        self._rng = None

    @property
    def rng(self) -> np.random.Generator:
        if self._rng is None:
            self._rng = path_generator(self.seed, self.path_index, salt=self.node + 1)
        return self._rng

    def __repr__(self):
        return f"Scenario(seed={self.seed}, path_index={self.path_index}, node={self.node})"
