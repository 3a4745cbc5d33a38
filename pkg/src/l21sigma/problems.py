"""Manufactured test problems for the nonlocal fractional diffusion equation.

Both examples share the time profile ``phi(t) = t^3 + t^alpha`` and the
coefficient ``a(w) = 3 + sin(w)``; the source term is derived in closed form
so that the prescribed ``u`` solves the equation exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

__all__ = ["ProblemSpec", "caputo_power", "example1", "example2", "get_problem", "PROBLEMS"]


def caputo_power(alpha: float, mu: float, t):
    """Caputo derivative of order ``alpha`` of ``t**mu``: Gamma(mu+1)/Gamma(mu+1-alpha) t^(mu-alpha)."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("caputo_power is defined for t >= 0 only")
    c = math.gamma(mu + 1) / math.gamma(mu + 1 - alpha)
    out = c * np.power(t, mu - alpha)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ProblemSpec:
    name: str
    alpha: float
    dim: int
    bounds: tuple
    T: float
    a: Callable[[float], float]
    a_prime: Callable[[float], float]
    f: Callable
    u0: Callable
    grad_u0: Callable
    m1: float
    m2: float
    # Lipschitz constant of a
    L: float
    exact: Optional[Callable] = None
    grad_exact: Optional[Callable] = None
    # l(u(t)) for the exact solution
    exact_integral: Optional[Callable[[float], float]] = None
    u0_is_zero: bool = False


def _a(w):
    return 3.0 + np.sin(w)


def _a_prime(w):
    return np.cos(w)


def _zero(X):
    return np.zeros(np.shape(X)[:-1])


def _zero_grad(X):
    return np.zeros(np.shape(X))


def _check_alpha(alpha):
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha!r}")


def example1(alpha: float) -> ProblemSpec:
    """1D problem on ``(0, pi)`` with ``u = (t^3 + t^alpha) sin x``."""
    _check_alpha(alpha)
    g1a = math.gamma(1 + alpha)

    def phi(t):
        return t**3 + t**alpha

    def exact(X, t):
        return phi(t) * np.sin(X[..., 0])

    def grad_exact(X, t):
        return (phi(t) * np.cos(X[..., 0]))[..., None]

    def f(X, t):
        p = phi(t)
        time_part = caputo_power(alpha, 3, t) + g1a + (3 + math.sin(2 * p)) * p
        return time_part * np.sin(X[..., 0])

    return ProblemSpec(
        name="ex1",
        alpha=alpha,
        dim=1,
        bounds=((0.0, math.pi),),
        T=1.0,
        a=_a,
        a_prime=_a_prime,
        f=f,
        u0=_zero,
        grad_u0=_zero_grad,
        m1=2.0,
        m2=4.0,
        L=1.0,
        exact=exact,
        grad_exact=grad_exact,
        exact_integral=lambda t: 2 * phi(t),
        u0_is_zero=True,
    )


def example2(alpha: float) -> ProblemSpec:
    """2D problem on the unit square with ``u = (t^3 + t^alpha)(x - x^2)(y - y^2)``."""
    _check_alpha(alpha)

    def phi(t):
        return t**3 + t**alpha

    def exact(X, t):
        x, y = X[..., 0], X[..., 1]
        return phi(t) * (x - x**2) * (y - y**2)

    def grad_exact(X, t):
        x, y = X[..., 0], X[..., 1]
        p = phi(t)
        return np.stack([p * (1 - 2 * x) * (y - y**2), p * (x - x**2) * (1 - 2 * y)], axis=-1)

    def f(X, t):
        x, y = X[..., 0], X[..., 1]
        bx, by = x - x**2, y - y**2
        p = phi(t)
        caputo = caputo_power(alpha, 3, t) + caputo_power(alpha, alpha, t)
        a_val = 3 + math.sin(p / 36)
        # -a * Laplacian(u) = a * 2 p (bx + by)
        return caputo * bx * by + a_val * 2 * p * (bx + by)

    return ProblemSpec(
        name="ex2",
        alpha=alpha,
        dim=2,
        bounds=((0.0, 1.0), (0.0, 1.0)),
        T=1.0,
        a=_a,
        a_prime=_a_prime,
        f=f,
        u0=_zero,
        grad_u0=_zero_grad,
        m1=2.0,
        m2=4.0,
        L=1.0,
        exact=exact,
        grad_exact=grad_exact,
        exact_integral=lambda t: phi(t) / 36,
        u0_is_zero=True,
    )


PROBLEMS = {"ex1": example1, "ex2": example2}


def get_problem(name: str, alpha: float) -> ProblemSpec:
    try:
        factory = PROBLEMS[name]
    except KeyError:
        raise ValueError(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}") from None
    return factory(alpha)
