"""Kernel density and smoothed-functional estimators built on particle clouds.

The density at x is estimated by the ensemble average of a Gaussian kernel
of bandwidth delta, optionally Romberg-extrapolated as
2 * estimate(delta / sqrt 2) - estimate(delta), which cancels the delta^2
bias term.  Bandwidth and particle count follow fixed power rules of the
base error |P| + sqrt(eps_M) (densities) or |P| + eps_M (bounded test
functions).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from scipy.special import ndtr
from scipy.spatial import cKDTree

from .errors import ModelError
from .streams import StreamFamily

SQRT2 = math.sqrt(2.0)
KERNEL_CUTOFF = 8.0


def v_n(N: int, d: int) -> float:
    """Empirical-measure rate: N^-1/2 (d=1), N^-1/2 ln(1+N) (d=2), N^-1/d (d>=3)."""
    if N < 1 or d < 1:
        raise ValueError("N and d must be positive")
    if d == 1:
        return N ** -0.5
    if d == 2:
        return N ** -0.5 * math.log(1 + N)
    return N ** (-1.0 / d)


def min_particles(target: float, d: int) -> int:
    """Smallest N with v_n(N, d) <= target (relative slack 1e-12)."""
    if target <= 0:
        raise ModelError("particle-count target must be positive")
    ok = lambda n: v_n(n, d) <= target * (1 + 1e-12)
    if d == 1:
        guess = math.ceil(target ** -2)
    elif d >= 3:
        guess = math.ceil(target ** -d)
    else:
        # ln(1+N)/sqrt(N) rises until N ~ 5, then decreases
        for n in range(1, 16):
            if ok(n):
                return n
        lo, hi = 15, 16
        while not ok(hi):
            lo, hi = hi, hi * 2
        while hi - lo > 1:
            mid = (lo + hi) // 2
            lo, hi = (lo, mid) if ok(mid) else (mid, hi)
        return hi
    n = max(1, guess - 2)
    while not ok(n):
        n += 1
    while n > 1 and ok(n - 1):
        n -= 1
    return n


@dataclass(frozen=True)
class EstimatorParams:
    base: float
    delta: float
    n_required: int
    theorem: str  # 2.3i, 2.3ii, 2.4i, 2.4ii
    epsilon: Optional[float] = None
    v_target: Optional[float] = None

    @property
    def romberg(self) -> bool:
        return self.theorem.endswith("ii")


def _check_base(base: float) -> None:
    if base <= 0:
        raise ModelError("base error |P| + eps term is zero; the rule is degenerate")
    if base > 1:
        warnings.warn(f"base {base} exceeds 1; the selection rule assumes base <= 1", stacklevel=3)


def select_density_params(abs_P: float, eps_M: float, d: int, romberg: bool = False) -> EstimatorParams:
    base = abs_P + math.sqrt(eps_M)
    _check_base(base)
    delta = base ** (1.0 / (d + (5 if romberg else 3)))
    return EstimatorParams(base, delta, min_particles(base, d), "2.3ii" if romberg else "2.3i",
                           v_target=base)


def tv_exponents(d: int, epsilon: float, romberg: bool) -> tuple[float, float]:
    """(bandwidth exponent, V_N exponent) applied to |P| + eps_M."""
    e = epsilon
    if romberg:
        e1 = e * e / (2 - e)
        e2 = (8 * e + (d - 3) * e * e) / ((d + 5) * (2 - e))
        return 0.25 * (1 - e1), (d + 5) / 4.0 * (1 - e2)
    e1 = e / (2 - e)
    e2 = ((d + 5) * e - 2 * e * e) / ((d + 3) * (2 - e))
    return 0.5 * (1 - e1), (d + 3) / 2.0 * (1 - e2)


def select_tv_params(abs_P: float, eps_M: float, d: int, epsilon: float,
                     romberg: bool = False) -> EstimatorParams:
    if not 0 < epsilon < 1:
        raise ModelError("epsilon must lie in (0, 1)")
    base = abs_P + eps_M
    _check_base(base)
    delta_exp, v_exp = tv_exponents(d, epsilon, romberg)
    target = base ** v_exp
    return EstimatorParams(base, base ** delta_exp, min_particles(target, d),
                           "2.4ii" if romberg else "2.4i", epsilon=epsilon, v_target=target)


# -- kernel density ------------------------------------------------------

def gaussian_kernel(y: np.ndarray, delta: float) -> np.ndarray:
    """phi_delta at the rows of y, an ``(n, d)`` array."""
    d = y.shape[-1]
    sq = (y * y).sum(axis=-1)
    return np.exp(-sq / (2 * delta * delta)) / ((2 * math.pi) ** (d / 2) * delta ** d)


def _as_rows(a, d: Optional[int] = None) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a[:, None] if d in (None, 1) else a.reshape(-1, d)
    return a


def kernel_sum_brute(positions: np.ndarray, grid: np.ndarray, delta: float) -> np.ndarray:
    """O(N G) reference: (1/N) sum_i phi_delta(X_i - x_g)."""
    out = np.empty(grid.shape[0])
    for g, x in enumerate(grid):
        out[g] = gaussian_kernel(positions - x, delta).sum() / positions.shape[0]
    return out


def kernel_sum(positions: np.ndarray, grid: np.ndarray, delta: float) -> np.ndarray:
    """(1/N) sum_i phi_delta(X_i - x_g), skipping particles beyond 8 delta."""
    n, d = positions.shape
    radius = KERNEL_CUTOFF * delta
    out = np.zeros(grid.shape[0])
    if d == 1:
        xs = np.sort(positions[:, 0])
        lo = np.searchsorted(xs, grid[:, 0] - radius, side="left")
        hi = np.searchsorted(xs, grid[:, 0] + radius, side="right")
        for g in range(grid.shape[0]):
            if hi[g] > lo[g]:
                out[g] = gaussian_kernel(xs[lo[g]:hi[g], None] - grid[g], delta).sum()
    else:
        tree = cKDTree(positions)
        for g, idx in enumerate(tree.query_ball_point(grid, radius)):
            if idx:
                out[g] = gaussian_kernel(positions[np.sort(idx)] - grid[g], delta).sum()
    return out / n


@dataclass
class DensityEstimate:
    grid: np.ndarray
    values: np.ndarray
    delta: float
    n_particles: int
    romberg: bool
    params: Optional[EstimatorParams] = None
    has_negative: bool = False

    @property
    def method(self) -> str:
        return "romberg" if self.romberg else "plain"


def kde_estimate(positions, grid, delta: float, romberg: bool = False,
                 params: Optional[EstimatorParams] = None, brute: bool = False) -> DensityEstimate:
    if delta <= 0:
        raise ValueError("bandwidth must be positive")
    positions = _as_rows(positions)
    grid = _as_rows(grid, positions.shape[1])
    if grid.shape[1] != positions.shape[1]:
        raise ValueError("grid and positions have different dimensions")
    ksum = kernel_sum_brute if brute else kernel_sum
    if romberg:
        values = 2 * ksum(positions, grid, delta / SQRT2) - ksum(positions, grid, delta)
    else:
        values = ksum(positions, grid, delta)
    return DensityEstimate(grid, values, delta, positions.shape[0], romberg, params,
                           bool(np.any(values < 0)))


# -- smoothed expectations -----------------------------------------------

@dataclass(frozen=True)
class Box:
    """Indicator of the axis-aligned box lo <= x <= hi (infinite sides allowed)."""

    lo: tuple
    hi: tuple
    bound: float = field(default=1.0)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        lo, hi = np.asarray(self.lo, dtype=float), np.asarray(self.hi, dtype=float)
        return np.all((x >= lo) & (x <= hi), axis=-1).astype(float)

    def smoothed(self, positions: np.ndarray, delta: float) -> np.ndarray:
        """E 1_box(X_i + delta G) for each particle, G standard Gaussian."""
        lo, hi = np.asarray(self.lo, dtype=float), np.asarray(self.hi, dtype=float)
        probs = ndtr((hi - positions) / delta) - ndtr((lo - positions) / delta)
        return probs.prod(axis=1)


def _gaussian_average(positions, f, delta, mode, streams):
    if mode == "analytic":
        if not isinstance(f, Box):
            raise ModelError("analytic smoothing needs a Box indicator; pass a gauss_budget instead")
        return float(f.smoothed(positions, delta).mean())
    budget = int(mode)
    if budget < 2:
        raise ModelError("gauss_budget must be at least 2")
    half = budget // 2
    d = positions.shape[1]
    g = streams.normal("smoothing", np.arange(half)[:, None], np.arange(d)[None, :])
    total = 0.0
    for draw in np.concatenate([g, -g]):
        total += float(np.mean(f(positions + delta * draw)))
    return total / (2 * half)


def smoothed_expectation(positions, f: Union[Box, Callable], delta: float, romberg: bool = False,
                         gauss_budget: Union[int, str] = "analytic", seed: int = 0) -> float:
    """(1/N) sum_i E f(X_i + delta G), Romberg-combined on request.

    Box indicators are integrated exactly against the Gaussian; other bounded
    callables use ``gauss_budget`` antithetic Gaussian draws shared by all
    particles.
    """
    if delta <= 0:
        raise ValueError("bandwidth must be positive")
    positions = _as_rows(positions)
    streams = StreamFamily(seed)
    if romberg:
        return (2 * _gaussian_average(positions, f, delta / SQRT2, gauss_budget, streams)
                - _gaussian_average(positions, f, delta, gauss_budget, streams))
    return _gaussian_average(positions, f, delta, gauss_budget, streams)
