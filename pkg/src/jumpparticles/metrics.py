"""Convergence diagnostics: empirical W1, weak-equation residual, slope fits
and the time thresholds after which the density/TV rates apply."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .coefficients import CoefficientModel, MeasureSummary
from .errors import ModelError
from .estimators import Box, smoothed_expectation
from .levy import LevyMeasureModel
from .streams import StreamFamily


def _rows(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    return a[:, None] if a.ndim == 1 else a


def w1_1d(a: np.ndarray, b: np.ndarray) -> float:
    a, b = np.sort(np.ravel(a)), np.sort(np.ravel(b))
    n, m = a.size, b.size
    if n == m:
        return float(np.mean(np.abs(a - b)))
    # L1 distance between quantile functions, piecewise constant on the merged grid
    ts = np.union1d(np.arange(1, n + 1) / n, np.arange(1, m + 1) / m)
    widths = np.diff(np.concatenate([[0.0], ts]))
    mids = ts - widths / 2
    qa = a[np.minimum((mids * n).astype(np.int64), n - 1)]
    qb = b[np.minimum((mids * m).astype(np.int64), m - 1)]
    return float(np.sum(widths * np.abs(qa - qb)))


def wasserstein1_report(sample_a, sample_b, directions: int = 64, seed: int = 0) -> dict:
    a, b = _rows(sample_a), _rows(sample_b)
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise ValueError("W1 needs nonempty samples")
    if a.shape[1] != b.shape[1]:
        raise ValueError("samples live in different dimensions")
    d = a.shape[1]
    if d == 1:
        return {"value": w1_1d(a[:, 0], b[:, 0]), "method": "exact-1d"}
    g = StreamFamily(seed).normal("sliced-w1", np.arange(directions)[:, None], np.arange(d)[None, :])
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    value = float(np.mean([w1_1d(a @ w, b @ w) for w in g]))
    return {"value": value, "method": f"sliced-approximation(K={directions})"}


def wasserstein1_empirical(sample_a, sample_b, directions: int = 64, seed: int = 0) -> float:
    """Exact W1 between empirical measures for d=1; sliced W1 (an
    approximation, averaged over random directions) for d >= 2."""
    return wasserstein1_report(sample_a, sample_b, directions, seed)["value"]


def w1_assignment(sample_a, sample_b) -> float:
    """Exact W1 for equal-size samples by optimal assignment (n <= 64)."""
    from scipy.optimize import linear_sum_assignment
    a, b = _rows(sample_a), _rows(sample_b)
    if a.shape[0] != b.shape[0] or a.shape[0] > 64:
        raise ValueError("assignment oracle needs equal sizes n <= 64")
    cost = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2)
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].mean())


def smoothed_tv_proxy(sample_a, sample_b, delta: float, boxes: Sequence[Box]) -> float:
    """Largest gap in Gaussian-smoothed box probabilities over a battery.

    A measurable stand-in for total variation, which cannot be estimated
    from samples directly.
    """
    return max(abs(smoothed_expectation(sample_a, f, delta) - smoothed_expectation(sample_b, f, delta))
               for f in boxes)


# -- weak residual -------------------------------------------------------

@dataclass
class WeakResidual:
    residual: float
    finite_difference: float
    generator: float
    se_finite_difference: float
    se_generator: float
    truncation_mass: float

    @property
    def combined_se(self) -> float:
        return math.hypot(self.se_finite_difference, self.se_generator)


def generator_estimate(x: np.ndarray, t: float, levy: LevyMeasureModel, coeffs: CoefficientModel,
                       M: int, phi: Callable, grad_phi: Callable, mc_budget: int,
                       seed: int = 0, chunk: int = 1_000_000) -> tuple[float, float, float]:
    """Generator of the truncated dynamics applied to phi at the empirical
    measure of ``x``: (value, standard error, mu(B_M)).

    The drift part is averaged exactly over particles; the jump part uses
    ``mc_budget`` samples of (particle, partner, z) with z drawn from
    mu restricted to B_M and importance weight mu(B_M).
    """
    if mc_budget < 100:
        raise ModelError("mc_budget must be at least 100")
    x = _rows(x)
    n = x.shape[0]
    rho = MeasureSummary(x)
    drift = float(np.mean(np.sum(coeffs.drift(t, x, rho) * grad_phi(x), axis=1)))
    masses = np.array([levy.annulus_mass(k) for k in range(1, M + 1)])
    total_mass = float(masses.sum())
    if total_mass == 0:
        return drift, 0.0, 0.0
    cum = np.cumsum(masses) / total_mass
    streams = StreamFamily(seed)
    s1 = s2 = 0.0
    for start in range(0, mc_budget, chunk):
        idx = np.arange(start, min(start + chunk, mc_budget))
        i = np.minimum((streams.uniform("wr-particle", idx) * n).astype(np.int64), n - 1)
        u = np.minimum((streams.uniform("wr-partner", idx) * n).astype(np.int64), n - 1)
        ring = np.minimum(np.searchsorted(cum, streams.uniform("wr-ring", idx), side="left"), M - 1) + 1
        z = np.empty((idx.size, x.shape[1]))
        for k in np.unique(ring):
            sel = ring == k
            z[sel] = levy.sample_in_annulus(int(k), streams.view("wr-amp", idx[sel]))
        xi = x[i]
        vals = phi(xi + coeffs.jump(t, x[u], z, xi, rho)) - phi(xi)
        s1 += float(vals.sum())
        s2 += float((vals * vals).sum())
    mean = s1 / mc_budget
    var = max(s2 / mc_budget - mean * mean, 0.0)
    return drift + total_mass * mean, total_mass * math.sqrt(var / mc_budget), total_mass


def weak_residual(x_t, x_next, h: float, t: float, levy: LevyMeasureModel, coeffs: CoefficientModel,
                  M: int, phi: Callable, grad_phi: Callable, mc_budget: int = 100_000,
                  seed: int = 0) -> WeakResidual:
    """|d/dt <phi, rho_t> - generator| with the time derivative taken as a
    forward difference over ``h``.

    ``x_next`` is either one ``(N, d)`` snapshot at t + h or a stack
    ``(R, N, d)`` of independent continuations from the same ``x_t``; the
    latter averages out the jump noise of the difference quotient.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    x_t = _rows(x_t)
    nxt = np.asarray(x_next, dtype=float)
    if nxt.ndim == 2 and x_t.shape[1] == 1 and nxt.shape[1] != 1:
        nxt = nxt[..., None]
    if nxt.ndim == 2:
        nxt = nxt[None]
    base = phi(x_t)
    incr = np.stack([(phi(rep) - base) / h for rep in nxt])  # (R, N)
    fd_reps = incr.mean(axis=1)
    fd = float(fd_reps.mean())
    if fd_reps.size > 1:
        se_fd = float(fd_reps.std(ddof=1) / math.sqrt(fd_reps.size))
    else:
        se_fd = float(incr[0].std(ddof=1) / math.sqrt(incr.shape[1])) if incr.shape[1] > 1 else 0.0
    gen, se_gen, mass = generator_estimate(x_t, t, levy, coeffs, M, phi, grad_phi, mc_budget, seed)
    return WeakResidual(abs(fd - gen), fd, gen, se_fd, se_gen, mass)


# -- slopes --------------------------------------------------------------

@dataclass
class ConvergenceReport:
    params: list
    errors: list
    slope: float
    intercept: float
    residual: float
    target: Optional[float] = None
    tolerance: Optional[float] = None
    passed: Optional[bool] = None
    label: str = ""

    def to_json(self) -> str:
        d = asdict(self)
        d["ladder"] = d.pop("params")
        d["pass"] = d.pop("passed")
        return json.dumps(d, indent=2, sort_keys=True)


def convergence_slope(ladder: Sequence[tuple], target: Optional[float] = None,
                      tolerance: Optional[float] = None, minimum: Optional[float] = None,
                      label: str = "") -> ConvergenceReport:
    """Least-squares slope of log(error) against log(param).

    ``target``/``tolerance`` give a two-sided check, ``minimum`` a one-sided
    lower bound on the slope.
    """
    params = np.array([float(p) for p, _ in ladder])
    errors = np.array([float(e) for _, e in ladder])
    if params.size < 3:
        raise ValueError("a slope fit needs at least 3 rungs")
    steps = np.diff(params)
    if not (np.all(steps > 0) or np.all(steps < 0)):
        raise ValueError("ladder parameters must be strictly monotone")
    if np.any(params <= 0):
        raise ValueError("ladder parameters must be positive")
    if np.any(errors <= 0):
        raise ValueError("errors must be positive; average over more Monte Carlo repetitions")
    lx, ly = np.log(params), np.log(errors)
    (slope, intercept), res, *_ = np.polyfit(lx, ly, 1, full=True)
    residual = float(math.sqrt(res[0])) if len(res) else 0.0
    passed = None
    if target is not None and tolerance is not None:
        passed = bool(abs(slope - target) <= tolerance)
    if minimum is not None:
        passed = bool(slope >= minimum) if passed is None else passed and bool(slope >= minimum)
    return ConvergenceReport(params.tolist(), errors.tolist(), float(slope), float(intercept),
                             residual, target, tolerance, passed, label)


# -- validity windows ----------------------------------------------------

THEOREM_TAGS = ("2.1a", "2.1b", "2.2b", "2.3i", "2.3ii", "2.4", "2.4i", "2.4ii")


def validity_threshold(tag: str, d: int, theta: float, epsilon: Optional[float] = None,
                       l: Optional[int] = None) -> float:
    """Smallest time t beyond which the named result applies."""
    if tag not in THEOREM_TAGS:
        raise ValueError(f"unknown theorem tag {tag!r}")
    if math.isinf(theta):
        return 0.0
    if theta <= 0:
        raise ModelError("theta = 0 leaves no validity window")
    scale = 8.0 * d / theta
    if tag == "2.1a":
        if l is None:
            raise ValueError("tag 2.1a needs the differentiability order l")
        return scale * (l + d)
    if tag == "2.3i":
        return scale * (2 + d)
    if tag == "2.3ii":
        return scale * (4 + d)
    if epsilon is None or epsilon <= 0:
        raise ValueError(f"tag {tag} needs epsilon > 0")
    if tag in ("2.1b", "2.2b"):
        return scale * (8.0 / epsilon + 1)
    return scale * (16.0 / epsilon + 1)
