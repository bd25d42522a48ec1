"""Slow, independent reference values for degenerate models.

Nothing here touches the particle engine or the kernel-density code; the
compound-Poisson moments integrate the intensity density directly with
QUADPACK.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate


@dataclass(frozen=True)
class OracleResult:
    name: str
    value: object
    stderr: float = 0.0
    method: str = "analytic"


def _integrate_line(f: Callable[[float], float], M: float) -> float:
    points = [float(k) for k in range(-int(M) + 1, int(M))]
    val, _ = integrate.quad(f, -M, M, points=points, limit=400, epsabs=1e-12, epsrel=1e-10)
    return val


def compound_poisson_moments(levy, gamma: Callable[[float], float], M: int, t: float,
                             init_mean: float = 0.0, init_var: float = 0.0,
                             big_jump_sd: float = 0.0) -> tuple[OracleResult, OracleResult]:
    """Mean and variance at time t of X_0 + a Delta + sum of gamma(Z) over a
    Poisson(mu restricted to B_M) stream of jumps (one dimension)."""
    if levy.d != 1:
        raise ValueError("the compound-Poisson oracle is one-dimensional")
    h = lambda z: float(levy.density(np.array([[z]]))[0])
    first = _integrate_line(lambda z: gamma(z) * h(z), M)
    second = _integrate_line(lambda z: gamma(z) ** 2 * h(z), M)
    mean = init_mean + t * first
    var = init_var + big_jump_sd ** 2 + t * second
    return OracleResult("mean", mean), OracleResult("variance", var)


def meanfield_ode(A, B, t: float, mean0, cov0, step_fraction: float = 1e-4) -> OracleResult:
    """Moments of the jump-free mean-field SDE with b = A mean(rho) + B x.

    mean' = (A + B) mean and cov' = B cov + cov B^T, integrated with
    classical RK4 at step ``step_fraction * t``.
    """
    mean = np.atleast_1d(np.asarray(mean0, dtype=float)).copy()
    d = mean.size
    cov = np.asarray(cov0, dtype=float).reshape(d, d).copy()
    A = np.asarray(A, dtype=float) * (np.eye(d) if np.ndim(A) == 0 else 1.0)
    B = np.asarray(B, dtype=float) * (np.eye(d) if np.ndim(B) == 0 else 1.0)
    if t == 0:
        return OracleResult("moments", (mean, cov), method="ode")
    n = int(round(1.0 / step_fraction))
    h = t / n
    fm = lambda m: (A + B) @ m
    fc = lambda c: B @ c + c @ B.T
    for _ in range(n):
        k1, l1 = fm(mean), fc(cov)
        k2, l2 = fm(mean + h / 2 * k1), fc(cov + h / 2 * l1)
        k3, l3 = fm(mean + h / 2 * k2), fc(cov + h / 2 * l2)
        k4, l4 = fm(mean + h * k3), fc(cov + h * l3)
        mean = mean + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        cov = cov + h / 6 * (l1 + 2 * l2 + 2 * l3 + l4)
    return OracleResult("moments", (mean, cov), method="ode")


def normal_pdf(x, var):
    x = np.asarray(x, dtype=float)
    return np.exp(-x * x / (2 * var)) / np.sqrt(2 * math.pi * var)


def expected_kde(x, sigma: float, delta: float, romberg: bool = False):
    """Mean of the kernel estimator at x when particles are exactly N(0, sigma^2)."""
    s2 = sigma * sigma
    if romberg:
        return 2 * normal_pdf(x, s2 + delta * delta / 2) - normal_pdf(x, s2 + delta * delta)
    return normal_pdf(x, s2 + delta * delta)


def kde_bias(x, sigma: float, delta: float, romberg: bool = False):
    return expected_kde(x, sigma, delta, romberg) - normal_pdf(x, sigma * sigma)


def kde_stderr(x, sigma: float, delta: float, N: int):
    """Standard error of the plain kernel estimator with N i.i.d. N(0, sigma^2) particles.

    Uses phi_delta(y)^2 = phi_{delta/sqrt2}(y) / (2 delta sqrt(pi)).
    """
    s2 = sigma * sigma
    second = normal_pdf(x, s2 + delta * delta / 2) / (2 * delta * math.sqrt(math.pi))
    first = normal_pdf(x, s2 + delta * delta)
    return np.sqrt(np.maximum(second - first * first, 0.0) / N)
