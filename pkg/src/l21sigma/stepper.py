"""Fully discrete time stepping with Newton's method on the bordered system.

Each step introduces the scalar unknown ``d = l(U^{n,sigma})`` next to the
finite element coefficients so that the Jacobian stays sparse: the
nonlocal coupling lives only in one extra row and column.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from . import fem
from .fractime import L21SigmaOperator, build_graded_mesh
from .linalg import BorderedSystem, direct_solver, solve_bordered, solve_spd
from .problems import ProblemSpec

__all__ = [
    "SolverConfig",
    "SolverRun",
    "StepContext",
    "SolverError",
    "NewtonConvergenceError",
    "initial_state",
    "prepare_step",
    "residual",
    "jacobian_blocks",
    "newton_step_solve",
    "run",
]

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """A time step could not be completed."""

    def __init__(self, message, step=None, residuals=()):
        super().__init__(message)
        self.step = step
        self.residuals = list(residuals)


class NewtonConvergenceError(SolverError):
    pass


@dataclass
class SolverConfig:
    newton_tol: float = 1e-12
    newton_max_iter: int = 25
    # inner CG tolerance relative to newton_tol; unused by the direct solver
    linear_tol_factor: float = 1e-2
    linear_solver: str = "direct"
    store_all_steps: bool = True

    def __post_init__(self):
        if not self.newton_tol > 0:
            raise ValueError("newton_tol must be positive")
        if self.newton_max_iter < 1:
            raise ValueError("newton_max_iter must be >= 1")
        if self.linear_solver not in ("direct", "cg"):
            raise ValueError(f"linear_solver must be 'direct' or 'cg', got {self.linear_solver!r}")
        if not self.store_all_steps:
            raise ValueError("the discrete Caputo history needs every past step; store_all_steps must be on")


@dataclass
class StepContext:
    """Everything step ``n`` needs that does not depend on the Newton iterate."""

    n: int
    problem: ProblemSpec
    system: fem.FemSystem
    op: L21SigmaOperator
    U_prev: np.ndarray
    mass_history: np.ndarray  # M_h H^n
    load: np.ndarray  # (f^{n-sigma}, phi_i)
    config: SolverConfig = field(default_factory=SolverConfig)

    @property
    def g_nn(self) -> float:
        return float(self.op.weight_row(self.n)[-1])

    @property
    def sigma(self) -> float:
        return self.op.sigma


@dataclass
class SolverRun:
    problem: ProblemSpec
    op: L21SigmaOperator
    system: fem.FemSystem
    history: np.ndarray  # (N+1, M)
    newton_iterations: np.ndarray
    l_sigma: np.ndarray  # l(U^{n,sigma}) at convergence, n = 1..N
    a_values: np.ndarray
    residuals: np.ndarray  # final Newton residual per step
    step_bound: np.ndarray  # admissible max step per n (C = 1)
    step_bound_ok: np.ndarray  # tau_n <= step_bound[n]

    @property
    def times(self) -> np.ndarray:
        return self.op.mesh.nodes

    def l2_norms(self) -> np.ndarray:
        M = self.system.mass
        return np.sqrt(np.einsum("ij,ij->i", self.history, (M @ self.history.T).T))

    def error_history(self, h1_rule: str = "degree4") -> tuple[np.ndarray, np.ndarray]:
        """L2 and H1-seminorm errors against the exact solution for n = 1..N."""
        p = self.problem
        if p.exact is None:
            raise ValueError(f"problem {p.name!r} has no exact solution")
        mesh = self.system.mesh
        out = np.array(
            [
                fem.error_norms(mesh, p.exact, p.grad_exact, self.history[n], t, h1_rule)
                for n, t in enumerate(self.times)
                if n > 0
            ]
        )
        return out[:, 0], out[:, 1]

    def write_csv(self, path) -> None:
        norms = self.l2_norms()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "t", "l2_norm", "l_sigma", "a", "newton_iterations", "residual"])
            w.writerow([0, f"{self.times[0]:.16e}", f"{norms[0]:.16e}", "", "", 0, ""])
            for n in range(1, len(self.times)):
                w.writerow(
                    [
                        n,
                        f"{self.times[n]:.16e}",
                        f"{norms[n]:.16e}",
                        f"{self.l_sigma[n - 1]:.16e}",
                        f"{self.a_values[n - 1]:.16e}",
                        int(self.newton_iterations[n - 1]),
                        f"{self.residuals[n - 1]:.3e}",
                    ]
                )


def initial_state(problem: ProblemSpec, system: fem.FemSystem) -> np.ndarray:
    """Ritz projection of the initial datum."""
    if problem.u0_is_zero:
        return np.zeros(system.mesh.M)
    return fem.ritz_project(system, problem.grad_u0)


def prepare_step(n, problem, system, op, history, config=None) -> StepContext:
    """Precompute the iterate-independent parts of step ``n``."""
    H = op.apply_history(n, history)
    t_off = op.offset_points[n - 1]
    return StepContext(
        n=n,
        problem=problem,
        system=system,
        op=op,
        U_prev=np.asarray(history[n - 1], dtype=float),
        mass_history=system.mass @ H,
        load=fem.load_vector(system.mesh, problem.f, t_off),
        config=config or SolverConfig(),
    )


def residual(n: int, U, d: float, ctx: StepContext) -> tuple[np.ndarray, float]:
    if n != ctx.n:
        raise ValueError(f"context prepared for step {ctx.n}, not {n}")
    U = np.asarray(U, dtype=float)
    if U.shape != ctx.U_prev.shape:
        raise ValueError(f"iterate has shape {U.shape}, expected {ctx.U_prev.shape}")
    s = ctx.sigma
    g = ctx.g_nn
    sysm = ctx.system
    U_sig = (1 - s) * U + s * ctx.U_prev
    top = (
        sysm.mass @ U
        - ctx.mass_history / g
        + (ctx.problem.a(d) / g) * (sysm.stiffness @ U_sig)
        - ctx.load / g
    )
    bot = fem.l_functional(sysm, U_sig) - d
    return top, float(bot)


def jacobian_blocks(n: int, U, d: float, ctx: StepContext) -> BorderedSystem:
    """Exact derivative of :func:`residual` w.r.t. ``(U, d)``.

    ``U^{n,sigma}`` carries ``U^n`` with weight ``1 - sigma``, which is the
    coefficient in both ``A`` and the border row.
    """
    if n != ctx.n:
        raise ValueError(f"context prepared for step {ctx.n}, not {n}")
    s = ctx.sigma
    g = ctx.g_nn
    sysm = ctx.system
    U_sig = (1 - s) * np.asarray(U, dtype=float) + s * ctx.U_prev
    A = (sysm.mass + ((1 - s) * ctx.problem.a(d) / g) * sysm.stiffness).tocsr()
    b_col = (ctx.problem.a_prime(d) / g) * (sysm.stiffness @ U_sig)
    c_row = (1 - s) * sysm.integral_weights
    return BorderedSystem(A=A, b_col=np.asarray(b_col, dtype=float), c_row=c_row, corner=-1.0)


def _linear_solve(A, config, tol):
    if config.linear_solver == "cg":
        return lambda rhs: solve_spd(A, rhs, tol=tol)
    return direct_solver(A)


def newton_step_solve(n: int, ctx: StepContext) -> tuple[np.ndarray, float, int]:
    """Newton iteration for step ``n`` starting from the previous level.

    The returned count is the number of corrections applied; convergence is
    checked before each correction, so a linear problem reports one.
    """
    cfg = ctx.config
    U = ctx.U_prev.copy()
    d = float(fem.l_functional(ctx.system, U))
    history = []
    iterations = 0
    while True:
        top, bot = residual(n, U, d, ctx)
        res = max(float(np.max(np.abs(top), initial=0.0)), abs(bot))
        history.append(res)
        if not np.isfinite(res):
            raise NewtonConvergenceError(f"step {n}: residual is not finite", step=n, residuals=history)
        if res <= cfg.newton_tol:
            return U, d, iterations
        if iterations >= cfg.newton_max_iter:
            raise NewtonConvergenceError(
                f"step {n}: Newton did not converge in {cfg.newton_max_iter} iterations "
                f"(residual {res:.3e})",
                step=n,
                residuals=history,
            )
        a_val = ctx.problem.a(d)
        if not a_val > 0:
            raise SolverError(f"step {n}: diffusion coefficient a(d) = {a_val} is not positive", n, history)
        J = jacobian_blocks(n, U, d, ctx)
        solve = _linear_solve(J.A, cfg, cfg.linear_tol_factor * cfg.newton_tol)
        dx, dd = solve_bordered(J, -top, -bot, solve=solve)
        U = U + dx
        d = d + dd
        iterations += 1


def run(problem: ProblemSpec, N: int, Ms: int, r: float, config: SolverConfig | None = None) -> SolverRun:
    config = config or SolverConfig()
    tmesh = build_graded_mesh(N, r, problem.T)
    op = L21SigmaOperator(tmesh, problem.alpha)
    smesh = fem.build_mesh(problem.dim, problem.bounds, Ms)
    system = fem.assemble(smesh)

    history = np.zeros((N + 1, smesh.M))
    history[0] = initial_state(problem, system)
    iters = np.zeros(N, dtype=int)
    l_sig = np.zeros(N)
    a_vals = np.zeros(N)
    res = np.zeros(N)

    grad0 = np.sqrt(max(history[0] @ (system.stiffness @ history[0]), 0.0))
    R1 = 1.0 + grad0
    bound = np.zeros(N)
    bound_ok = np.zeros(N, dtype=bool)

    for n in range(1, N + 1):
        ctx = prepare_step(n, problem, system, op, history[:n], config)
        try:
            U, d, k = newton_step_solve(n, ctx)
        except SolverError as exc:
            log.error("step %d of %d failed: %s", n, N, exc)
            raise
        history[n] = U
        iters[n - 1] = k
        l_sig[n - 1] = fem.l_functional(system, (1 - op.sigma) * U + op.sigma * ctx.U_prev)
        a_vals[n - 1] = problem.a(d)
        top, bot = residual(n, U, d, ctx)
        res[n - 1] = max(float(np.max(np.abs(top), initial=0.0)), abs(bot))
        bound[n - 1] = op.max_step_restriction(problem.m1, problem.L, R1, n)[0]
        bound_ok[n - 1] = tmesh.steps[n - 1] <= bound[n - 1]

    return SolverRun(
        problem=problem,
        op=op,
        system=system,
        history=history,
        newton_iterations=iters,
        l_sigma=l_sig,
        a_values=a_vals,
        residuals=res,
        step_bound=bound,
        step_bound_ok=bound_ok,
    )
