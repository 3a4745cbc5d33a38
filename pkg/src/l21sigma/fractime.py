"""Graded temporal meshes and the L2-1sigma Caputo discretization.

The weights are built from closed-form antiderivatives of the kernel
``(t_{n-sigma} - eta)^(-alpha)``.  Graded meshes put many nodes very close to
``t = 0`` so every power difference is evaluated through ``log1p``/``expm1``
and the small ``b`` coefficients switch to a series when the subinterval is
short compared with its distance to the collocation point.

Gamma values come from :func:`math.gamma` (the C library ``tgamma``, accurate
to a few ulp on the positive reals used here).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "TimeMesh",
    "L21SigmaOperator",
    "PCoefficients",
    "build_graded_mesh",
    "power_difference",
    "truncation_error",
]

# ratio half-width / distance below which b_{n,j} is summed as a series
_SERIES_RATIO = 0.3
_SERIES_TERMS = 24


def power_difference(x, y, p):
    """Return ``x**p - y**p`` for ``x > y > 0`` without cancellation.

    Uses ``y**p * expm1(p * log1p((x - y) / y))``.  ``x - y`` should be
    representable without loss, which holds for the mesh quantities here.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.power(y, p) * np.expm1(p * np.log1p((x - y) / y))
    return np.where(y > 0, out, np.power(x, p))


@dataclass(frozen=True)
class TimeMesh:
    """Graded partition ``t_n = T (n/N)^r`` of ``[0, T]``."""

    N: int
    r: float
    T: float
    nodes: np.ndarray = field(repr=False)
    steps: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.nodes.setflags(write=False)
        self.steps.setflags(write=False)


def build_graded_mesh(N: int, r: float, T: float = 1.0) -> TimeMesh:
    if int(N) != N or N < 1:
        raise ValueError(f"N must be a positive integer, got {N!r}")
    if not r >= 1:
        raise ValueError(f"grading exponent r must be >= 1, got {r!r}")
    if not T > 0:
        raise ValueError(f"final time T must be positive, got {T!r}")
    N = int(N)
    n = np.arange(N + 1, dtype=float)
    nodes = T * (n / N) ** r
    nodes[-1] = T
    # n^r - (n-1)^r evaluated without cancellation
    steps = T * power_difference(n[1:], n[:-1], r) / float(N) ** r
    if r == 1:
        steps = np.full(N, T / N)
    return TimeMesh(N=N, r=float(r), T=float(T), nodes=nodes, steps=steps)


@dataclass(frozen=True)
class PCoefficients:
    """Coefficients ``p^{(n)}_{n-i}``; ``values[i-1]`` holds the one for ``i``."""

    n: int
    values: np.ndarray

    @property
    def nonnegative(self) -> bool:
        return bool(np.all(self.values >= 0))


class L21SigmaOperator:
    """Discrete Caputo derivative ``D^alpha_N`` on a graded mesh.

    All weight rows ``g_{n,1..n}`` are computed at construction and stored in a
    lower-triangular ``N x N`` array; the object is read-only afterwards.
    """

    def __init__(self, mesh: TimeMesh, alpha: float):
        if not 0 < alpha < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {alpha!r}")
        self.mesh = mesh
        self.alpha = float(alpha)
        self.sigma = self.alpha / 2
        t = mesh.nodes
        self.offset_points = (1 - self.sigma) * t[1:] + self.sigma * t[:-1]
        self._gamma1 = math.gamma(1 - self.alpha)
        self._gamma2 = math.gamma(2 - self.alpha)

        N = mesh.N
        self._a = np.zeros((N, N))
        self._b = np.zeros((N, N))
        self._g = np.zeros((N, N))
        for n in range(1, N + 1):
            a = self._a_row(n)
            b = self._b_row(n)
            self._a[n - 1, :n] = a
            self._b[n - 1, : n - 1] = b
            self._g[n - 1, :n] = self._assemble_row(n, a, b)
        self._g.setflags(write=False)

    @property
    def N(self) -> int:
        return self.mesh.N

    # -- coefficient kernels -------------------------------------------------

    def _distances(self, n, j):
        """``t_{n-sigma} - t_j`` for index array ``j < n``, free of cancellation."""
        t, tau = self.mesh.nodes, self.mesh.steps
        return (1 - self.sigma) * tau[n - 1] + (t[n - 1] - t[j])

    def _a_row(self, n):
        tau = self.mesh.steps
        j = np.arange(1, n)
        far = self._distances(n, j)  # s - t_j
        near = far + tau[j - 1]  # s - t_{j-1}
        p = 1 - self.alpha
        a = np.empty(n)
        a[:-1] = power_difference(near, far, p) / self._gamma2
        a[-1] = ((1 - self.sigma) * tau[n - 1]) ** p / self._gamma2
        return a

    def _b_row(self, n):
        if n < 2:
            return np.zeros(0)
        alpha = self.alpha
        t, tau = self.mesh.nodes, self.mesh.steps
        j = np.arange(1, n)
        u1 = self._distances(n, j)
        w = tau[j - 1] / 2
        um = u1 + w
        rho = w / um

        # integral of u^(-alpha) (u_m - u) over [u1, u0], two routes
        u0 = u1 + tau[j - 1]
        closed = um * power_difference(u0, u1, 1 - alpha) / (1 - alpha) - power_difference(
            u0, u1, 2 - alpha
        ) / (2 - alpha)

        series = np.zeros_like(rho)
        coef = 1.0
        rho_pow = np.ones_like(rho)
        for k in range(1, 2 * _SERIES_TERMS):
            coef *= (-alpha - k + 1) / k
            rho_pow = rho_pow * rho
            if k % 2 == 1:
                series += coef * rho_pow / (k + 2)
        series = -2 * w**2 * um ** (-alpha) * series

        integral = np.where(rho < _SERIES_RATIO, series, closed)
        width = t[j + 1] - t[j - 1]
        return 2 * integral / (self._gamma1 * width)

    def _assemble_row(self, n, a, b):
        tau = self.mesh.steps
        g = np.empty(n)
        if n == 1:
            g[0] = a[0] / tau[0]
            return g
        g[0] = (a[0] - b[0]) / tau[0]
        if n > 2:
            g[1:-1] = (a[1:-1] + b[:-1] - b[1:]) / tau[1 : n - 1]
        g[-1] = (a[-1] + b[-1]) / tau[n - 1]
        return g

    def _check(self, n, j, jmax):
        if not (1 <= n <= self.N and 1 <= j <= jmax):
            raise IndexError(f"coefficient index (n={n}, j={j}) out of range for N={self.N}")

    def coeff_a(self, n: int, j: int) -> float:
        self._check(n, j, n)
        return float(self._a[n - 1, j - 1])

    def coeff_b(self, n: int, j: int) -> float:
        self._check(n, j, n - 1)
        return float(self._b[n - 1, j - 1])

    def weight_row(self, n: int) -> np.ndarray:
        if not 1 <= n <= self.N:
            raise IndexError(f"row {n} out of range for N={self.N}")
        return self._g[n - 1, :n]

    @property
    def weights(self) -> np.ndarray:
        """Lower-triangular array with ``weights[n-1, j-1] = g_{n,j}``."""
        return self._g

    # -- applying the operator ----------------------------------------------

    def history_coefficients(self, n: int) -> np.ndarray:
        """Coefficients of ``U^0..U^{n-1}`` in the history term ``H^n``."""
        g = self.weight_row(n)
        return np.concatenate(([g[0]], np.diff(g)))

    def apply_history(self, n: int, history) -> np.ndarray:
        """History term ``H^n`` so that ``D^alpha_N U^{n-sigma} = g_{n,n} U^n - H^n``."""
        try:
            hist = np.asarray(history[:n], dtype=float)
        except ValueError as exc:
            raise ValueError("history vectors must share one length") from exc
        if hist.shape[0] < n:
            raise ValueError(f"history holds {hist.shape[0]} levels, step {n} needs {n}")
        if hist.ndim not in (1, 2):
            raise ValueError("history must be a sequence of scalars or equal-length vectors")
        return self.history_coefficients(n) @ hist

    def derivative(self, values: Sequence[float]) -> np.ndarray:
        """``D^alpha_N v^{n-sigma}`` for n = 1..N from nodal values ``v_0..v_N``.

        ``values`` may carry trailing axes; the result has shape ``(N, ...)``.
        """
        v = np.asarray(values, dtype=float)
        if v.shape[0] != self.N + 1:
            raise ValueError(f"expected {self.N + 1} nodal values, got {v.shape[0]}")
        return self._g @ np.diff(v, axis=0)

    # -- diagnostics ---------------------------------------------------------

    def p_coefficients(self, n: int) -> PCoefficients:
        if not 1 <= n <= self.N:
            raise IndexError(f"row {n} out of range for N={self.N}")
        G = self._g
        # p[m] = p^{(n)}_m for m = 0..n-1
        p = np.zeros(n)
        p[0] = 1.0 / G[n - 1, n - 1]
        for i in range(n - 1, 0, -1):
            k = np.arange(i + 1, n + 1)
            diffs = G[k - 1, i] - G[k - 1, i - 1]
            p[n - i] = diffs @ p[n - k] / G[i - 1, i - 1]
        # values[i-1] = p^{(n)}_{n-i}
        return PCoefficients(n=n, values=p[::-1].copy())

    def max_step_restriction(self, m1: float, L: float, R1: float, n: int) -> tuple[float, bool]:
        """Largest admissible step from the uniqueness argument, with ``C = 1``.

        Returns ``(tau_bound, max_step <= tau_bound)``; ``L == 0`` gives ``inf``.
        """
        if not (m1 > 0 and L >= 0 and R1 > 0):
            raise ValueError("need m1 > 0, L >= 0, R1 > 0")
        if not 1 <= n <= self.N:
            raise IndexError(f"row {n} out of range for N={self.N}")
        if L == 0:
            return math.inf, True
        b = self._b[n - 1, n - 2] if n >= 2 else 0.0
        numer = 2 * m1 * (self._a[n - 1, n - 1] + b)
        denom = (1 - self.sigma) * (L * R1 * (1 - 2 * self.sigma)) ** 2
        tau = numer / denom
        return float(tau), bool(np.max(self.mesh.steps) <= tau)


def truncation_error(op: L21SigmaOperator, v, caputo_v) -> float:
    """``max_n t_{n-sigma}^alpha |D^alpha_N v^{n-sigma} - D^alpha v(t_{n-sigma})|``.

    ``v`` and ``caputo_v`` are vectorized callables of time.
    """
    s = op.offset_points
    err = np.abs(op.derivative(v(op.mesh.nodes)) - caputo_v(s))
    return float(np.max(s**op.alpha * err))
