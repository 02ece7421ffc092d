"""Per-node variational inequality solver and assumption checks.

At a fixed time ``t`` and state ``x`` the solver looks for ``u`` in ``K`` with

    <F(t, x, u), v - u> >= 0   for all v in K,

through the projected fixed-point iteration ``u <- P_K(u - rho * F(t, x, u))``.
For ``F`` strongly monotone in ``u`` with modulus ``C`` and Lipschitz constant
``L_F`` the map is a contraction with squared factor ``1 - 2 rho C + rho^2 L_F^2``
whenever ``0 < rho < 2C / L_F^2``; its fixed point solves the VI.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import NonFiniteError, ProblemConstants, SdviProblem
from .sampler import Scenario, path_generator

log = logging.getLogger(__name__)

ACCELERATIONS = ("none", "anderson")


def optimal_rho(constants: ProblemConstants) -> float:
    """Step minimizing the contraction factor: ``rho* = C / L_F^2``."""
    return constants.mono_C / constants.lip_F ** 2


def contraction_factor(constants: ProblemConstants, rho: float) -> float:
    """Squared contraction factor ``1 - 2 rho C + rho^2 L_F^2`` of the projection map."""
    c, lf = constants.mono_C, constants.lip_F
    # Clamp the rounding error around the optimum (factor 0 when C == L_F).
    return max(0.0, 1.0 - 2.0 * rho * c + rho ** 2 * lf ** 2)


def lipschitz_bound_mprime(constants: ProblemConstants, rho: float) -> float:
    """Constant ``M'`` with ``||u1 - u2||^2 <= M' ||x1 - x2||^2`` for the VI solutions.

    ``M' = rho^2 L_F^2 / (1 - sqrt(1 - 2 rho C + rho^2 L_F^2))^2`` for ``rho``
    strictly inside ``(0, 2C/L_F^2)``.
    """
    if not (0.0 < rho < constants.max_rho):
        raise ValueError(
            f"rho={rho} outside the admissible interval (0, {constants.max_rho})")
    q = math.sqrt(contraction_factor(constants, rho))
    return (rho * constants.lip_F) ** 2 / (1.0 - q) ** 2


@dataclass(frozen=True)
class ViSolverConfig:
    """Settings of the projected fixed-point iteration.

    ``rho`` defaults to ``optimal_rho(constants)``. With ``constants`` attached,
    an explicit ``rho`` must lie in ``(0, 2C/L_F^2)``; without constants it is
    taken as given and a warning is logged.

    ``acceleration="anderson"`` applies Anderson mixing to the same fixed-point
    map. It has the same fixed points and stopping rule and is meant for weakly
    monotone maps where the plain iteration crawls.
    """

    rho: Optional[float] = None
    tol: float = 1e-10
    max_iter: int = 10_000
    warm_start: Optional[np.ndarray] = None
    constants: Optional[ProblemConstants] = None
    acceleration: str = "none"
    anderson_memory: int = 5
    step: float = field(init=False, repr=False)

    def __post_init__(self):
        if not (self.tol > 0):
            raise ValueError("tol must be positive")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ValueError("max_iter must be a positive integer")
        if self.acceleration not in ACCELERATIONS:
            raise ValueError(f"acceleration must be one of {ACCELERATIONS}")
        if self.anderson_memory < 1:
            raise ValueError("anderson_memory must be positive")
        if self.rho is None:
            if self.constants is None:
                raise ValueError("either rho or constants must be given")
            step = optimal_rho(self.constants)
        else:
            step = float(self.rho)
            if not (step > 0 and math.isfinite(step)):
                raise ValueError(f"rho must be positive, got {self.rho}")
            if self.constants is not None:
                if step >= self.constants.max_rho:
                    raise ValueError(
                        f"rho={step} outside the admissible interval "
                        f"(0, {self.constants.max_rho})")
            else:
                log.warning("rho=%g used without problem constants; contraction "
                            "is not guaranteed", step)
        object.__setattr__(self, "step", step)
        if self.warm_start is not None:
            ws = np.asarray(self.warm_start, dtype=np.float64).reshape(-1).copy()
            ws.flags.writeable = False
            object.__setattr__(self, "warm_start", ws)

    def with_warm_start(self, warm_start) -> "ViSolverConfig":
        return ViSolverConfig(rho=self.step, tol=self.tol, max_iter=self.max_iter,
                              warm_start=warm_start, constants=self.constants,
                              acceleration=self.acceleration,
                              anderson_memory=self.anderson_memory)


@dataclass(frozen=True, eq=False)
class ViSolveResult:
    solution: np.ndarray
    iterations: int
    final_residual: float
    converged: bool
    contraction_estimate: Optional[float]
    residuals: np.ndarray


def _contraction_estimate(residuals: list) -> Optional[float]:
    # Geometric mean of r_k / r_{k-1} telescopes to (r_K / r_0)^(1/K).
    if len(residuals) < 2 or residuals[0] <= 0.0:
        return None
    k = len(residuals) - 1
    return (residuals[-1] / residuals[0]) ** (1.0 / k)


def solve_vi(problem: SdviProblem, t: float, x, scenario=None,
             config: Optional[ViSolverConfig] = None, *,
             warm_start=None) -> ViSolveResult:
    """Solve the VI of ``problem`` at ``(t, x)``.

    The iteration starts from ``warm_start`` (keyword) or ``config.warm_start``,
    projected into ``K``; the zero vector projected into ``K`` otherwise. It
    stops once two successive iterates are within ``config.tol`` and returns the
    latter. Hitting ``max_iter`` is reported through ``converged=False``.

    Raises
    ------
    NonFiniteError
        If ``F`` returns NaN or infinite values.
    """
    if config is None:
        raise ValueError("a ViSolverConfig is required")
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise NonFiniteError(f"non-finite state at t={t}")
    K = problem.constraint
    start = warm_start if warm_start is not None else config.warm_start
    if start is None:
        start = np.zeros(problem.control_dim)
    u = K.project(start)
    rho = config.step

    def fixed_point_map(v):
        fv = problem.eval_vi_map(t, x, v, scenario)
        if not np.all(np.isfinite(fv)):
            raise NonFiniteError(f"vi_map returned non-finite values at t={t}")
        return K._project(v - rho * fv)

    if config.acceleration == "anderson":
        u, residuals = _anderson(fixed_point_map, K, u, config)
    else:
        residuals = []
        for _ in range(config.max_iter):
            u_next = fixed_point_map(u)
            r = float(np.linalg.norm(u_next - u))
            residuals.append(r)
            u = u_next
            if r <= config.tol:
                break
    final = residuals[-1]
    return ViSolveResult(solution=u, iterations=len(residuals), final_residual=final,
                         converged=final <= config.tol,
                         contraction_estimate=_contraction_estimate(residuals),
                         residuals=np.asarray(residuals))


_RESTART_FACTOR = 1e3


def _anderson(G, K, u, config: ViSolverConfig):
    """Anderson-mixed iteration on ``G``; returns ``(G(u_final), residuals)``.

    Mixed iterates are projected back into ``K`` before ``G`` is applied. The
    history is dropped (one plain step) when the residual jumps far above the
    best value seen so far; small increases are tolerated because the mixed
    residual is not monotone.
    """
    memory = config.anderson_memory
    residuals = []
    g = G(u)
    f = g - u
    d_g, d_f = [], []
    best = math.inf
    for _ in range(config.max_iter):
        r = float(np.linalg.norm(f))
        residuals.append(r)
        if r <= config.tol:
            break
        if r > _RESTART_FACTOR * best:
            d_g.clear()
            d_f.clear()
            best = r
            u_next = g
        else:
            best = min(best, r)
            if d_f:
                F_mat = np.column_stack(d_f)
                gamma = np.linalg.lstsq(F_mat, f, rcond=None)[0]
                u_next = K._project(g - np.column_stack(d_g) @ gamma)
            else:
                u_next = g
        g_next = G(u_next)
        f_next = g_next - u_next
        d_g.append(g_next - g)
        d_f.append(f_next - f)
        if len(d_f) > memory:
            d_g.pop(0)
            d_f.pop(0)
        g, f = g_next, f_next
    return g, residuals


@dataclass(frozen=True)
class AssumptionReport:
    """Extreme empirical ratios observed by :func:`verify_assumptions`."""

    samples: int
    lip_f: float
    lip_g: float
    lip_F: float
    mono_C: float
    growth_f: float
    growth_g: float
    violations: tuple

    @property
    def ok(self) -> bool:
        return not self.violations

    def summary(self) -> str:
        lines = [f"samples = {self.samples}"]
        for name in ("lip_f", "lip_g", "lip_F", "mono_C", "growth_f", "growth_g"):
            lines.append(f"{name} = {getattr(self, name)!r}")
        lines.append("violations = " + (", ".join(self.violations) if self.violations else "none"))
        return "\n".join(lines) + "\n"


def verify_assumptions(problem: SdviProblem, claimed: Optional[ProblemConstants],
                       samples: int = 1000, seed: int = 0,
                       rel_tol: float = 1e-9) -> AssumptionReport:
    """Try to falsify the Lipschitz, monotonicity and growth claims of ``problem``.

    Draws ``samples`` pairs of points ``(t, x, u)`` with ``t`` uniform on
    ``[0, T]``, ``x ~ 10 * N(0, I)`` and ``u = P_K(10 * N(0, I))``. Lipschitz
    ratios use the ``|dt| + ||dx|| + ||du||`` denominator, the diffusion norm is
    Frobenius, monotonicity pairs share ``(t, x)``, and growth ratios divide by
    ``1 + ||x|| + ||u||``. A claimed constant is reported as violated when an
    observed ratio beats it by more than ``rel_tol`` relative.
    """
    if samples < 2:
        raise ValueError("samples must be at least 2")
    rng = path_generator(seed, 0, salt=0x5EED)
    T, n, m = problem.horizon, problem.state_dim, problem.control_dim
    K = problem.constraint

    def draw():
        t = float(rng.uniform(0.0, T))
        xv = 10.0 * rng.standard_normal(n)
        uv = K.project(10.0 * rng.standard_normal(m))
        return t, xv, uv

    lip_f = lip_g = lip_F = growth_f = growth_g = 0.0
    mono = math.inf
    for k in range(samples):
        scenario = Scenario(seed, k)
        t1, x1, u1 = draw()
        t2, x2, u2 = draw()
        f1, f2 = problem.eval_drift(t1, x1, u1), problem.eval_drift(t2, x2, u2)
        g1, g2 = problem.eval_diffusion(t1, x1, u1), problem.eval_diffusion(t2, x2, u2)
        F1 = problem.eval_vi_map(t1, x1, u1, scenario)
        F2 = problem.eval_vi_map(t2, x2, u2, scenario)
        dist = abs(t1 - t2) + np.linalg.norm(x1 - x2) + np.linalg.norm(u1 - u2)
        if dist > 0:
            lip_f = max(lip_f, np.linalg.norm(f1 - f2) / dist)
            lip_g = max(lip_g, np.linalg.norm(g1 - g2) / dist)
            lip_F = max(lip_F, np.linalg.norm(F1 - F2) / dist)
        for xv, uv, fv, gv in ((x1, u1, f1, g1), (x2, u2, f2, g2)):
            scale = 1.0 + np.linalg.norm(xv) + np.linalg.norm(uv)
            growth_f = max(growth_f, np.linalg.norm(fv) / scale)
            growth_g = max(growth_g, np.linalg.norm(gv) / scale)
        du = u1 - u2
        du_sq = float(du @ du)
        if du_sq > 0:
            F1b = problem.eval_vi_map(t1, x1, u2, scenario)
            mono = min(mono, float((F1 - F1b) @ du) / du_sq)

    report = dict(lip_f=float(lip_f), lip_g=float(lip_g), lip_F=float(lip_F),
                  mono_C=float(mono), growth_f=float(growth_f), growth_g=float(growth_g))
    violations = []
    if claimed is not None:
        upper = {"lip_f": claimed.lip_f, "lip_g": claimed.lip_g, "lip_F": claimed.lip_F,
                 "growth_f": claimed.growth_K1, "growth_g": claimed.growth_K2}
        for name, bound in upper.items():
            if bound is not None and report[name] > bound * (1.0 + rel_tol) + rel_tol:
                violations.append(f"{name}: observed {report[name]:.6g} > claimed {bound:.6g}")
        if report["mono_C"] < claimed.mono_C * (1.0 - rel_tol) - rel_tol:
            violations.append(
                f"mono_C: observed {report['mono_C']:.6g} < claimed {claimed.mono_C:.6g}")
    return AssumptionReport(samples=samples, violations=tuple(violations), **report)
