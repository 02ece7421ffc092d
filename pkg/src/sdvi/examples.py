"""Builders for the two worked applications: a diode circuit and a collapsing bridge.

Circuit (``build_circuit``)
    State ``x = (x1, x2)``: inductor current and capacitor tension. Control
    ``u = (i_D1, v_D2, v_D3, i_D4)``: diode currents and voltages. The SDVI is::

        dx = (A x + B u + f(t)) dt + (C x + D u + g(t)) dB,   x(0) = (-1, 0)
        <Q x + M u, v - u> >= 0  for all v in K

    with ``C = a I``, ``D = b * ones(2, 4)``, ``g(t) = (c sin t, 0)``, ``M`` having
    ``epsilon`` on its diagonal and the box
    ``K = [-10, 10]^2 x [0, 20]^2``. Horizon 1.5 by default.

Bridge (``build_bridge``)
    State ``y = (displacement, velocity)``, scalar control ``u`` (the extra
    restoring force on compression)::

        dy = (y2, -2/5 y1 - tau y2 - u/10 + sin 4t) dt + (0, k) dB,  y(0) = (0, theta)
        0 <= u  _|_  u + 3 y1 >= 0

    Mass 10 and Hooke constants 4 (tension) and 1 (compression) are already
    folded into the coefficients. Horizon 1.0 by default.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import Box, NonnegOrthant, ProblemConstants, SdviProblem
from .vi import ViSolverConfig

CIRCUIT_A = np.array([[-2.0 / 3.0, 0.0],
                      [0.0, -1.0 / 5.0]])
CIRCUIT_B = np.array([[0.0, 1.0 / 3.0, -1.0 / 3.0, 0.0],
                      [1.0, 0.0, 0.0, 1.0]])
CIRCUIT_Q = np.array([[0.0, 1.0],
                      [1.0, 0.0],
                      [-1.0, 0.0],
                      [0.0, 1.0]])
# M = epsilon * I + CIRCUIT_M_SKEW
CIRCUIT_M_SKEW = np.array([[0.0, 0.0, -1.0, 0.0],
                           [0.0, 0.0, 0.0, 1.0],
                           [1.0, 0.0, 0.0, 0.0],
                           [0.0, -1.0, 0.0, 0.0]])
CIRCUIT_LOWER = np.array([-10.0, -10.0, 0.0, 0.0])
CIRCUIT_UPPER = np.array([10.0, 10.0, 20.0, 20.0])
CIRCUIT_X0 = np.array([-1.0, 0.0])
# Reference initial control; outside K, so it serves only as a warm start.
CIRCUIT_U0 = np.array([0.0, 0.0, 0.0, -1.0])

BRIDGE_U0 = np.array([0.0])


@dataclass(frozen=True)
class CircuitParams:
    epsilon: float = 0.001
    a: float = 0.0
    b: float = 0.0
    c: float = 0.0
    horizon: float = 1.5

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise ValueError("epsilon must be nonnegative")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")

    @property
    def strongly_monotone(self) -> bool:
        return self.epsilon > 0


@dataclass(frozen=True)
class BridgeParams:
    tau: float = 1.0
    k: float = 1.0
    theta: float = 0.0
    horizon: float = 1.0

    def __post_init__(self):
        for name in ("tau", "k", "theta"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be nonnegative")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")


def circuit_matrix_M(epsilon: float) -> np.ndarray:
    return epsilon * np.eye(4) + CIRCUIT_M_SKEW


def circuit_set() -> Box:
    return Box(CIRCUIT_LOWER, CIRCUIT_UPPER)


def build_circuit(params: CircuitParams = CircuitParams()) -> SdviProblem:
    A, B, Q = CIRCUIT_A, CIRCUIT_B, CIRCUIT_Q
    M = circuit_matrix_M(params.epsilon)
    a, b, c = params.a, params.b, params.c

    def drift(t, x, u):
        return A @ x + B @ u + np.array([2.0 * math.sin(3.0 * t - math.pi / 3.0), 0.0])

    def diffusion(t, x, u):
        col = a * x + b * np.sum(u) + np.array([c * math.sin(t), 0.0])
        return col.reshape(2, 1)

    def vi_map(t, x, u, scenario=None):
        return Q @ x + M @ u

    return SdviProblem(state_dim=2, control_dim=4, noise_dim=1, drift=drift,
                       diffusion=diffusion, vi_map=vi_map, constraint=circuit_set(),
                       initial_state=CIRCUIT_X0, horizon=params.horizon,
                       name="circuit")


def circuit_constants(params: CircuitParams) -> Optional[ProblemConstants]:
    """Constants of the circuit SDVI; ``None`` when ``epsilon == 0``.

    ``mono_C`` is ``epsilon`` (the symmetric part of ``M`` is ``epsilon * I``);
    ``lip_F`` is the spectral norm of ``[Q M]``.
    """
    if params.epsilon <= 0:
        return None
    M = circuit_matrix_M(params.epsilon)
    lip_F = float(np.linalg.norm(np.hstack([CIRCUIT_Q, M]), 2))
    norm_A = float(np.linalg.norm(CIRCUIT_A, 2))
    norm_B = float(np.linalg.norm(CIRCUIT_B, 2))
    norm_D = abs(params.b) * math.sqrt(8.0)
    return ProblemConstants(
        lip_F=lip_F, mono_C=params.epsilon,
        # |d/dt 2 sin(3t - pi/3)| <= 6, |d/dt c sin t| <= |c|
        lip_f=max(norm_A, norm_B, 6.0),
        lip_g=max(abs(params.a), norm_D, abs(params.c)),
        growth_K1=max(norm_A, norm_B, 2.0),
        growth_K2=max(abs(params.a), norm_D, abs(params.c)),
    )


def circuit_lip_F(epsilon: float) -> float:
    return float(np.linalg.norm(np.hstack([CIRCUIT_Q, circuit_matrix_M(epsilon)]), 2))


def build_bridge(params: BridgeParams = BridgeParams()) -> SdviProblem:
    tau, k = params.tau, params.k

    def drift(t, y, u):
        return np.array([y[1], -0.4 * y[0] - tau * y[1] - 0.1 * u[0] + math.sin(4.0 * t)])

    def diffusion(t, y, u):
        return np.array([[0.0], [k]])

    def vi_map(t, y, u, scenario=None):
        return u + 3.0 * y[0]

    return SdviProblem(state_dim=2, control_dim=1, noise_dim=1, drift=drift,
                       diffusion=diffusion, vi_map=vi_map, constraint=NonnegOrthant(1),
                       initial_state=np.array([0.0, params.theta]),
                       horizon=params.horizon, name="bridge")


def bridge_constants(params: BridgeParams) -> ProblemConstants:
    """``C = 1`` and ``L_F = sqrt(10)`` (``F = u + 3 y1`` jointly in ``(y, u)``)."""
    jac_y = np.array([[0.0, 1.0], [-0.4, -params.tau]])
    norm_jy = float(np.linalg.norm(jac_y, 2))
    return ProblemConstants(
        lip_F=math.sqrt(10.0), mono_C=1.0,
        lip_f=max(norm_jy, 0.1, 4.0),
        lip_g=0.0,
        growth_K1=max(norm_jy, 0.1, 1.0),
        growth_K2=params.k,
    )


def bridge_solver_constants() -> ProblemConstants:
    """Constants of ``u -> F(t, y, u)`` at fixed ``(t, y)``: ``C = L = 1``.

    The projection contraction only involves the dependence on ``u``, so these
    give the step ``rho* = 1``, which solves the bridge VI in one update.
    """
    return ProblemConstants(lip_F=1.0, mono_C=1.0)


def bridge_vi_oracle(y1: float) -> float:
    """Unique solution ``max(0, -3 y1)`` of ``0 <= u _|_ u + 3 y1 >= 0``."""
    if not math.isfinite(y1):
        raise ValueError("y1 must be finite")
    return max(0.0, -3.0 * y1)


def build(params) -> SdviProblem:
    if isinstance(params, CircuitParams):
        return build_circuit(params)
    if isinstance(params, BridgeParams):
        return build_bridge(params)
    raise TypeError(f"unknown parameter type {type(params).__name__}")


def default_solver_config(params, rho: Optional[float] = None, tol: float = 1e-10,
                          max_iter: int = 10_000, acceleration: str = "none") -> ViSolverConfig:
    """VI solver settings used by the CLI for a worked example.

    The step defaults to ``rho*`` of the solver constants and the reference
    initial control is the warm start at ``t_0``. For the circuit with
    ``epsilon == 0`` no admissible step exists; ``1 / L_F^2`` is used unless
    ``rho`` is given.
    """
    if isinstance(params, CircuitParams):
        constants = circuit_constants(params)
        warm = CIRCUIT_U0
        if constants is None and rho is None:
            rho = 1.0 / circuit_lip_F(params.epsilon) ** 2
    elif isinstance(params, BridgeParams):
        constants = bridge_solver_constants()
        warm = BRIDGE_U0
    else:
        raise TypeError(f"unknown parameter type {type(params).__name__}")
    return ViSolverConfig(rho=rho, tol=tol, max_iter=max_iter, warm_start=warm,
                          constants=constants, acceleration=acceleration)
