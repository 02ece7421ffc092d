"""Command-line driver for the worked examples.

Usage::

    sdvi simulate --problem bridge --tau 1 --k 1 --theta 0 --steps 50 --paths 1 --seed 7
    sdvi ensemble --problem circuit --epsilon 0.1 --a 1 --b 1 --c 1 --steps 30 --paths 500
    sdvi converge --problem bridge --fine-steps 512 --levels 5 --paths 200 --seed 42
    sdvi verify   --problem circuit --epsilon 0.1 --samples 2000

Options may also come from a flat ``key = value`` file given with ``--config``;
command-line flags take precedence. Output goes to ``--output-dir``, or
``$SDVI_OUTPUT_DIR``, or the current directory.

Exit codes: 0 success, 2 usage error, 3 numerical error, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from .analysis import estimate_strong_order, run_ensemble
from .core import PathSolution, SdviError
from .examples import (BridgeParams, CircuitParams, bridge_constants, build,
                       circuit_constants, default_solver_config)
from .sampler import make_grid, sample_brownian
from .stepper import EulerConfig, euler_path
from .vi import ACCELERATIONS, verify_assumptions

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4

MODES = ("simulate", "ensemble", "converge", "verify")
PROBLEMS = ("circuit", "bridge")
OUTPUT_ENV = "SDVI_OUTPUT_DIR"

log = logging.getLogger("sdvi")


class UsageError(Exception):
    pass


@dataclass
class ExperimentConfig:
    problem_name: str
    mode: str
    problem_params: Dict[str, float] = field(default_factory=dict)
    num_steps: int = 50
    num_paths: int = 1
    seed: int = 0
    output_dir: Path = Path(".")
    vi_tol: float = 1e-10
    vi_max_iter: int = 10_000
    rho: Optional[float] = None
    acceleration: str = "none"
    fine_steps: int = 512
    levels: int = 5
    samples: int = 1000
    keep_paths: bool = False
    strict: bool = False
    verbose: bool = False

    def __post_init__(self):
        if self.problem_name not in PROBLEMS:
            raise UsageError(f"unknown problem {self.problem_name!r}; choose from {PROBLEMS}")
        if self.mode not in MODES:
            raise UsageError(f"unknown mode {self.mode!r}; choose from {MODES}")
        if self.num_steps < 1 or self.num_paths < 1:
            raise UsageError("steps and paths must be at least 1")

    def params(self):
        cls = CircuitParams if self.problem_name == "circuit" else BridgeParams
        try:
            return cls(**self.problem_params)
        except (TypeError, ValueError) as exc:
            raise UsageError(f"bad {self.problem_name} parameters: {exc}") from exc


def fmt(value) -> str:
    """Shortest round-trip decimal (at most 17 significant digits)."""
    return repr(float(value))


def write_trajectory_csv(sol: PathSolution, destination) -> None:
    """Write ``t,x_1..x_n,u_1..u_m,vi_iters`` with one row per grid node."""
    n = sol.states.shape[1]
    m = sol.controls.shape[1]
    header = ["t"] + [f"x_{j + 1}" for j in range(n)] + [f"u_{j + 1}" for j in range(m)] + ["vi_iters"]
    lines = [",".join(header)]
    for i, t in enumerate(sol.grid.nodes):
        row = [fmt(t)] + [fmt(v) for v in sol.states[i]] + [fmt(v) for v in sol.controls[i]]
        row.append(str(int(sol.vi_iterations[i])))
        lines.append(",".join(row))
    path = Path(destination)
    try:
        with open(path, "w", newline="") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def write_ensemble_csv(ens, destination) -> None:
    n = ens.mean_state.shape[1]
    m = ens.mean_control.shape[1]
    header = (["t"] + [f"mean_x_{j + 1}" for j in range(n)] + [f"var_x_{j + 1}" for j in range(n)]
              + [f"mean_u_{j + 1}" for j in range(m)] + [f"var_u_{j + 1}" for j in range(m)])
    lines = [",".join(header)]
    for i, t in enumerate(ens.grid.nodes):
        values = [t, *ens.mean_state[i], *ens.var_state[i], *ens.mean_control[i], *ens.var_control[i]]
        lines.append(",".join(fmt(v) for v in values))
    with open(destination, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def _diagnostics(sol: PathSolution) -> List[str]:
    out = []
    for i in np.flatnonzero(~sol.vi_converged):
        out.append(f"warning: path {sol.path_index} node {i} t={fmt(sol.grid.nodes[i])}: "
                   f"VI not converged after {int(sol.vi_iterations[i])} iterations")
    return out


def run(config: ExperimentConfig) -> int:
    """Run one experiment and write its files; returns the exit status."""
    params = config.params()
    problem = build(params)
    try:
        vi_config = default_solver_config(params, rho=config.rho, tol=config.vi_tol,
                                          max_iter=config.vi_max_iter,
                                          acceleration=config.acceleration)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    euler = EulerConfig(vi_config)
    out = Path(config.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    name = problem.name
    diagnostics: List[str] = []

    if config.mode == "simulate":
        grid = make_grid(problem.horizon, config.num_steps)
        for p in range(config.num_paths):
            path = sample_brownian(grid, problem.noise_dim, config.seed, p)
            sol = euler_path(problem, path, euler)
            diagnostics += _diagnostics(sol)
            write_trajectory_csv(sol, out / f"{name}_path{p:04d}.csv")
    elif config.mode == "ensemble":
        grid = make_grid(problem.horizon, config.num_steps)
        ens = run_ensemble(problem, grid, config.num_paths, config.seed, euler,
                           keep_paths=config.keep_paths)
        write_ensemble_csv(ens, out / f"{name}_ensemble.csv")
        if ens.nonconverged_nodes:
            diagnostics.append(f"warning: {ens.nonconverged_nodes} VI solves did not converge")
        for sol in ens.per_path or []:
            write_trajectory_csv(sol, out / f"{name}_path{sol.path_index:04d}.csv")
    elif config.mode == "converge":
        try:
            report = estimate_strong_order(problem, config.fine_steps, config.levels,
                                           config.num_paths, config.seed, euler)
        except ValueError as exc:
            if isinstance(exc, SdviError):
                raise
            raise UsageError(str(exc)) from exc
        with open(out / f"{name}_convergence.json", "w") as fh:
            json.dump(report.to_dict(), fh, indent=2)
            fh.write("\n")
    elif config.mode == "verify":
        claimed = circuit_constants(params) if name == "circuit" else bridge_constants(params)
        if config.samples < 2:
            raise UsageError("samples must be at least 2")
        report = verify_assumptions(problem, claimed, config.samples, config.seed)
        with open(out / f"{name}_verify.txt", "w") as fh:
            fh.write(f"problem = {name}\n")
            for key, value in vars(params).items():
                fh.write(f"{key} = {value!r}\n")
            fh.write(report.summary())

    if diagnostics:
        diag_path = out / "diagnostics.txt"
        with open(diag_path, "w") as fh:
            fh.write("\n".join(diagnostics) + "\n")
        log.warning("%d VI warning(s); details in %s", len(diagnostics), diag_path)
        if config.strict:
            return EXIT_NUMERICAL
    return EXIT_OK


def read_config_file(path) -> Dict[str, str]:
    """Parse flat ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key = value")
            key, value = (part.strip() for part in line.split("=", 1))
            values[key.replace("-", "_")] = value
    return values


CIRCUIT_KEYS = ("epsilon", "a", "b", "c")
BRIDGE_KEYS = ("tau", "k", "theta")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sdvi", description=__doc__.split("\n\n")[0])
    parser.add_argument("mode", choices=MODES)
    parser.add_argument("--config", help="flat key=value file; flags override it")
    parser.add_argument("--problem", choices=PROBLEMS)
    parser.add_argument("--horizon", type=float)
    for key in CIRCUIT_KEYS + BRIDGE_KEYS:
        parser.add_argument(f"--{key}", type=float)
    parser.add_argument("--steps", type=int, default=None)
    parser.add_argument("--paths", type=int, default=None)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--fine-steps", type=int, default=512)
    parser.add_argument("--levels", type=int, default=5)
    parser.add_argument("--samples", type=int, default=1000)
    parser.add_argument("--output-dir", default=None)
    parser.add_argument("--vi-tol", type=float, default=1e-10)
    parser.add_argument("--vi-max-iter", type=int, default=10_000)
    parser.add_argument("--rho", type=float, default=None)
    parser.add_argument("--accel", choices=ACCELERATIONS, default="none")
    parser.add_argument("--keep-paths", action="store_true")
    parser.add_argument("--strict", action="store_true",
                        help="exit with status 3 when any VI solve fails to converge")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def parse_config(argv: Optional[List[str]] = None) -> ExperimentConfig:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            file_values = read_config_file(args.config)
        except OSError as exc:
            raise UsageError(f"cannot read config file: {exc}") from exc
        known = {a.dest for a in parser._actions}
        unknown = set(file_values) - known
        if unknown:
            raise UsageError(f"unknown keys in config file: {sorted(unknown)}")
        defaults = {}
        for action in parser._actions:
            if action.dest in file_values:
                raw = file_values[action.dest]
                if action.const is True:  # store_true flags
                    defaults[action.dest] = raw.lower() in ("1", "true", "yes", "on")
                else:
                    defaults[action.dest] = action.type(raw) if action.type else raw
        parser.set_defaults(**defaults)
        args = parser.parse_args(argv)
    if args.problem is None:
        raise UsageError("--problem is required")
    keys = CIRCUIT_KEYS if args.problem == "circuit" else BRIDGE_KEYS
    other = BRIDGE_KEYS if args.problem == "circuit" else CIRCUIT_KEYS
    for key in other:
        if getattr(args, key) is not None:
            raise UsageError(f"--{key} does not apply to the {args.problem} problem")
    params = {key: getattr(args, key) for key in keys if getattr(args, key) is not None}
    if args.horizon is not None:
        params["horizon"] = args.horizon
    output_dir = args.output_dir or os.environ.get(OUTPUT_ENV) or "."
    paths = args.paths if args.paths is not None else (200 if args.mode == "converge" else 1)
    steps = args.steps if args.steps is not None else (30 if args.problem == "circuit" else 50)
    return ExperimentConfig(
        problem_name=args.problem, mode=args.mode, problem_params=params,
        num_steps=steps, num_paths=paths, seed=args.seed, output_dir=Path(output_dir),
        vi_tol=args.vi_tol, vi_max_iter=args.vi_max_iter, rho=args.rho,
        acceleration=args.accel, fine_steps=args.fine_steps, levels=args.levels,
        samples=args.samples, keep_paths=args.keep_paths, strict=args.strict,
        verbose=args.verbose)


def main(argv: Optional[List[str]] = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        config = parse_config(argv)
        if config.verbose:
            logging.getLogger().setLevel(logging.INFO)
        # Per-node warnings are summarized in diagnostics.txt instead.
        logging.getLogger("sdvi.stepper").setLevel(logging.ERROR)
        return run(config)
    except UsageError as exc:
        print(f"sdvi: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SdviError, FloatingPointError) as exc:
        print(f"sdvi: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"sdvi: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
