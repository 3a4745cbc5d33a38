"""Convergence studies and kernel diagnostics."""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import fractime
from .problems import caputo_power, get_problem
from .stepper import SolverConfig, SolverError, run

__all__ = [
    "StudyConfig",
    "StudyRow",
    "ConvergenceReport",
    "observed_order",
    "resolve_r",
    "run_study",
    "diagnose",
    "format_diagnostics",
    "CSV_COLUMNS",
]

CSV_COLUMNS = [
    "problem",
    "alpha",
    "r",
    "N",
    "Ms",
    "err_L2",
    "oc_L2",
    "err_H1",
    "oc_H1",
    "newton_avg",
    "wall_ms",
]


def observed_order(e_coarse: float, e_fine: float) -> float:
    """``log2(e_coarse / e_fine)`` for one mesh doubling."""
    if not (math.isfinite(e_coarse) and math.isfinite(e_fine)) or e_coarse <= 0 or e_fine <= 0:
        raise ValueError(f"observed order undefined for errors {e_coarse!r}, {e_fine!r}")
    return math.log2(e_coarse / e_fine)


def resolve_r(r_policy, alpha: float) -> float:
    if r_policy in (None, "auto"):
        return 2.0 / alpha
    return float(r_policy)


@dataclass
class StudyConfig:
    problem: str
    alphas: list
    Ns: list
    mode: str = "temporal"
    r_policy: object = "auto"
    fmt: str = "csv"
    out: str | None = None
    newton_tol: float = 1e-12
    h1_rule: str = "degree4"
    # off: wall_ms is written as 0 so identical configs give identical files
    record_timing: bool = True

    def __post_init__(self):
        self.alphas = [float(a) for a in self.alphas]
        self.Ns = [int(n) for n in self.Ns]
        if not self.alphas or any(not 0 < a < 1 for a in self.alphas):
            raise ValueError(f"alphas must lie in (0, 1), got {self.alphas}")
        if not self.Ns or any(n < 4 for n in self.Ns) or self.Ns != sorted(self.Ns):
            raise ValueError(f"Ns must be ascending and each >= 4, got {self.Ns}")
        if self.mode not in ("temporal", "spatial"):
            raise ValueError(f"mode must be 'temporal' or 'spatial', got {self.mode!r}")
        if self.fmt not in ("csv", "md"):
            raise ValueError(f"format must be 'csv' or 'md', got {self.fmt!r}")
        if self.h1_rule not in ("degree4", "centroid"):
            raise ValueError(f"h1_rule must be 'degree4' or 'centroid', got {self.h1_rule!r}")
        if self.r_policy != "auto" and not float(self.r_policy) >= 1:
            raise ValueError(f"r must be 'auto' or a real >= 1, got {self.r_policy!r}")


@dataclass
class StudyRow:
    problem: str
    alpha: float
    r: float
    N: int
    Ms: int
    err_L2: float
    err_H1: float
    newton_avg: float
    newton_max: int
    wall_ms: float
    oc_L2: float | None = None
    oc_H1: float | None = None


def _fmt_err(e):
    return f"{e:.2E}"


def _fmt_oc(oc):
    return "-" if oc is None else f"{oc:.4f}"


@dataclass
class ConvergenceReport:
    config: StudyConfig
    rows: list = field(default_factory=list)

    def cells(self, alpha):
        return [row for row in self.rows if row.alpha == alpha]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for row in self.rows:
            w.writerow(
                [
                    row.problem,
                    f"{row.alpha:g}",
                    f"{row.r:.6g}",
                    row.N,
                    row.Ms,
                    _fmt_err(row.err_L2),
                    _fmt_oc(row.oc_L2),
                    _fmt_err(row.err_H1),
                    _fmt_oc(row.oc_H1),
                    f"{row.newton_avg:.3f}",
                    f"{row.wall_ms:.0f}",
                ]
            )
        return buf.getvalue()

    def to_markdown(self) -> str:
        """Two tables (L2, H1): one row per N, (Error, OC) pairs per alpha."""
        alphas = self.config.alphas
        label = "N" if self.config.mode == "temporal" else "Ms"
        out = []
        for title, err, oc in (
            ("L-infinity in time, L2 in space", "err_L2", "oc_L2"),
            (f"L-infinity in time, H1 seminorm ({self.config.h1_rule})", "err_H1", "oc_H1"),
        ):
            out.append(f"### {self.config.problem}: {title}\n")
            head = f"| {label} | " + " | ".join(f"alpha={a:g} Error | OC" for a in alphas) + " |"
            out.append(head)
            out.append("|" + "---|" * (1 + 2 * len(alphas)))
            for N in self.config.Ns:
                cells = []
                for a in alphas:
                    row = next(r for r in self.rows if r.alpha == a and r.N == N)
                    cells += [_fmt_err(getattr(row, err)), _fmt_oc(getattr(row, oc))]
                out.append(f"| {N} | " + " | ".join(cells) + " |")
            out.append("")
        return "\n".join(out)

    def render(self) -> str:
        return self.to_csv() if self.config.fmt == "csv" else self.to_markdown()

    def write(self, path=None) -> None:
        path = path or self.config.out
        if path is None:
            return
        Path(path).write_text(self.render())


def _fill_orders(rows):
    for prev, nxt in zip(rows, rows[1:]):
        prev.oc_L2 = observed_order(prev.err_L2, nxt.err_L2)
        prev.oc_H1 = observed_order(prev.err_H1, nxt.err_H1)


def run_cell(problem_name, alpha, N, r, newton_tol=1e-12, h1_rule="degree4", record_timing=True) -> StudyRow:
    """One solve with ``Ms = N`` and its max-over-steps errors."""
    problem = get_problem(problem_name, alpha)
    start = time.perf_counter()
    try:
        result = run(problem, N, N, r, SolverConfig(newton_tol=newton_tol))
    except SolverError as exc:
        raise SolverError(f"alpha={alpha:g}, N={N}: {exc}", exc.step, exc.residuals) from exc
    elapsed = (time.perf_counter() - start) * 1000 if record_timing else 0.0
    l2, h1 = result.error_history(h1_rule=h1_rule)
    return StudyRow(
        problem=problem_name,
        alpha=alpha,
        r=r,
        N=N,
        Ms=N,
        err_L2=float(l2.max()),
        err_H1=float(h1.max()),
        newton_avg=float(result.newton_iterations.mean()),
        newton_max=int(result.newton_iterations.max()),
        wall_ms=elapsed,
    )


def run_study(config: StudyConfig) -> ConvergenceReport:
    report = ConvergenceReport(config)
    for alpha in config.alphas:
        r = resolve_r(config.r_policy, alpha)
        rows = [
            run_cell(config.problem, alpha, N, r, config.newton_tol, config.h1_rule, config.record_timing)
            for N in config.Ns
        ]
        _fill_orders(rows)
        report.rows.extend(rows)
    report.write()
    return report


# -- diagnostics ---------------------------------------------------------------


def _power_sum(alpha):
    def v(t):
        return t**3 + t**alpha

    def caputo(t):
        return caputo_power(alpha, 3, t) + caputo_power(alpha, alpha, t)

    return v, caputo


def measured_truncation_orders(alpha, r, Ns):
    """Weighted truncation errors for ``v = t^3 + t^alpha`` and their pairwise orders."""
    v, caputo = _power_sum(alpha)
    errs = []
    for N in Ns:
        op = fractime.L21SigmaOperator(fractime.build_graded_mesh(N, r), alpha)
        errs.append(fractime.truncation_error(op, v, caputo))
    orders = [observed_order(a, b) for a, b in zip(errs, errs[1:])]
    return errs, orders


def coercivity_margin(op, samples=200, seed=0) -> float:
    """Smallest ``(D v)(v^{n,sigma}) - D(v^2)/2`` over random sequences, scaled by ``max v^2``."""
    rng = np.random.default_rng(seed)
    s = op.sigma
    worst = math.inf
    for _ in range(samples):
        v = rng.uniform(-1, 1, op.N + 1)
        lhs = op.derivative(v) * ((1 - s) * v[1:] + s * v[:-1]) - 0.5 * op.derivative(v**2)
        worst = min(worst, float(lhs.min() / np.max(v**2)))
    return worst


def diagnose(alpha: float, N: int, r: float, m1: float = 2.0, L: float = 1.0, R1: float = 1.0,
             truncation_levels: int = 3) -> dict:
    """Run every weight/coefficient check and collect a report; never raises on violations."""
    mesh = fractime.build_graded_mesh(N, r)
    op = fractime.L21SigmaOperator(mesh, alpha)
    G = op.weights
    t = mesh.nodes
    checks = {}

    diag = np.diag(G)
    checks["g_nn_positive"] = {"min": float(diag.min()), "pass": bool(diag.min() > 0)}
    min_diff = min((float(np.diff(G[n - 1, :n]).min()) for n in range(2, N + 1)), default=0.0)
    checks["g_row_monotone"] = {"min_increment": min_diff, "pass": min_diff >= 0}
    b_min = min((op.coeff_b(n, j) for n in range(2, N + 1) for j in range(1, n)), default=0.0)
    checks["b_nonnegative"] = {"min": b_min, "pass": b_min >= 0}

    exact = op.offset_points ** (1 - alpha) / math.gamma(2 - alpha)
    lin = float(np.max(np.abs(G @ mesh.steps - exact) / exact))
    checks["linear_exactness"] = {"max_rel_residual": lin, "pass": lin <= 1e-11}

    coer = coercivity_margin(op)
    checks["coercivity"] = {"min_scaled_margin": coer, "pass": coer >= -1e-12}

    gammas = {"alpha": alpha}
    if N >= 3:
        gammas["1/lnN"] = 1 / math.log(N)
    p_ratio = 0.0
    weighted = {name: 0.0 for name in gammas}
    p_nonneg = True
    for k in range(1, N + 1):
        p = op.p_coefficients(k)
        p_nonneg &= p.nonnegative
        bound = 11 * t[k] ** alpha / (4 * math.gamma(1 + alpha))
        p_ratio = max(p_ratio, float(p.values.sum() / bound))
        i = np.arange(1, k + 1)
        for name, gam in gammas.items():
            lhs = float(p.values @ i ** (r * (gam - alpha)))
            rhs = (11 * math.gamma(1 + gam - alpha) / (4 * math.gamma(1 + gam))
                   * mesh.T**alpha * (t[k] / mesh.T) ** gam * N ** (r * (gam - alpha)))
            weighted[name] = max(weighted[name], lhs / rhs)
    checks["p_nonnegative"] = {"pass": bool(p_nonneg)}
    checks["p_sum_bound"] = {"max_ratio": p_ratio, "pass": p_ratio <= 1.0}
    for name, ratio in weighted.items():
        checks[f"p_weighted_bound[gamma={name}]"] = {"max_ratio": float(ratio), "pass": bool(ratio <= 1.0)}

    # the uniqueness argument needs tau_n <= bound_n step by step
    bounds = np.array([op.max_step_restriction(m1, L, R1, n)[0] for n in range(1, N + 1)])
    per_step = bool(np.all(mesh.steps <= bounds))
    checks["step_restriction"] = {
        "min_bound": float(bounds.min()),
        "min_bound_over_step": float(np.min(bounds / mesh.steps)),
        "max_step_within_every_bound": bool(mesh.steps.max() <= bounds.min()),
        "m1": m1,
        "L": L,
        "R1": R1,
        "pass": per_step,
    }

    Ns = [N * 2**k for k in range(truncation_levels)]
    errs, orders = measured_truncation_orders(alpha, r, Ns)
    expected = min(3 - alpha, r * alpha)
    checks["truncation_order"] = {
        "Ns": Ns,
        "errors": errs,
        "orders": orders,
        "expected": expected,
        "pass": min(orders) >= expected - 0.15,
    }
    return {"alpha": alpha, "N": N, "r": r, "sigma": op.sigma, "checks": checks}


def format_diagnostics(report: dict) -> str:
    lines = [f"alpha={report['alpha']:g} N={report['N']} r={report['r']:g} sigma={report['sigma']:g}"]
    for name, data in report["checks"].items():
        detail = ", ".join(
            f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}"
            for k, v in data.items()
            if k != "pass" and not isinstance(v, list)
        )
        if name == "truncation_order":
            detail += ", orders=" + ",".join(f"{o:.3f}" for o in data["orders"])
        lines.append(f"{'PASS' if data['pass'] else 'FAIL'}  {name}: {detail}")
    return "\n".join(lines)
