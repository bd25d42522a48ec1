"""Lévy intensity measures mu(dz) = h(z) dz and their ring decomposition.

Jump amplitudes are split into rings I_1 = B_1, I_k = B_k minus B_{k-1}.
Every integral of a radial function against mu reduces to a 1-d integral
against the shell profile ``s(r)``, the mu-mass per unit radius.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate, optimize

from .errors import ModelError, NonConvergentTailError, QuadratureError, SamplerError

QUAD_EPSABS = 1e-10
QUAD_EPSREL = 1e-8
CDF_TABLE_SIZE = 4096
ACCEPTANCE_FLOOR = 1e-3
TAIL_RATIO_LIMIT = 0.9

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)


def unit_ball_volume(d: int) -> float:
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


def unit_sphere_area(d: int) -> float:
    return 2 * math.pi ** (d / 2) / math.gamma(d / 2)


def quad(f: Callable[[float], float], a: float, b: float,
         epsabs: float = QUAD_EPSABS, epsrel: float = QUAD_EPSREL,
         points=None) -> tuple[float, float]:
    """QUADPACK adaptive Gauss-Kronrod integration; raises on failure."""
    if b <= a:
        return 0.0, 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        out = integrate.quad(f, a, b, epsabs=epsabs, epsrel=epsrel, limit=500,
                             points=points, full_output=1)
    value, err = out[0], out[1]
    if len(out) > 3 and err > 10 * max(epsabs, epsrel * abs(value)):
        raise QuadratureError(f"quadrature on [{a}, {b}] failed: {out[3]}", err)
    return value, err


@dataclass
class TailIntegral:
    value: float
    remainder: float  # extrapolated contribution beyond the last block


@dataclass(frozen=True)
class LevyMeasureModel:
    """Intensity mu(dz) = h(z) dz on R^d.

    ``density`` takes an ``(n, d)`` array and returns ``(n,)``.  Radial
    models also supply ``profile(r) = g(r)`` with h(z) = g(|z|); the
    sampler then uses inverse transform on the radius.  Non-radial models
    are limited to d <= 2 and are sampled by rejection.
    """

    d: int
    density: Callable[[np.ndarray], np.ndarray]
    radial: bool = True
    profile: Optional[Callable[[np.ndarray], np.ndarray]] = None
    support_lower_radius: float = 0.0
    max_ring: int = 64
    ring_mass_closed_form: Optional[Callable[[int], float]] = None
    log_density_derivative_bound: Optional[float] = None
    name: str = "custom"
    params: dict = field(default_factory=dict)
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.d < 1:
            raise ModelError("dimension must be a positive integer")
        if self.max_ring < 1:
            raise ModelError("max_ring must be >= 1")
        if self.radial and self.profile is None:
            raise ModelError("radial models need a radial profile g(r)")
        if not self.radial and self.d > 2:
            raise ModelError("non-radial intensities are supported for d <= 2 only")

    # -- radial reduction -------------------------------------------------
    def shell_density(self, r) -> np.ndarray:
        """mu-mass per unit radius at radius r."""
        r = np.atleast_1d(np.asarray(r, dtype=float))
        if self.radial:
            g = np.asarray(self.profile(r), dtype=float)
            out = unit_sphere_area(self.d) * r ** (self.d - 1) * g
        elif self.d == 1:
            z = r[:, None]
            out = self.density(z) + self.density(-z)
        else:
            out = np.array([self._circle_integral(ri) for ri in r])
        return np.where(r < self.support_lower_radius, 0.0, out)

    def _circle_integral(self, r: float) -> float:
        def f(phi):
            return float(self.density(np.array([[r * math.cos(phi), r * math.sin(phi)]]))[0])
        return r * quad(f, 0.0, 2 * math.pi)[0]

    def integrate_radial(self, f: Callable[[np.ndarray], np.ndarray], a: float, b: float) -> float:
        """Integral of f(|z|) mu(dz) over a < |z| <= b."""
        a = max(a, self.support_lower_radius)
        if b <= a:
            return 0.0

        def integrand(r):
            return float(f(np.array([r]))[0] * self.shell_density(r)[0])

        return quad(integrand, a, b)[0]

    def tail_integral(self, f: Callable[[np.ndarray], np.ndarray], M: float) -> TailIntegral:
        """Integral of f(|z|) mu(dz) over |z| > M.

        Integrates doubling blocks out to 4 * max_ring, then extrapolates the
        remainder geometrically from the last two blocks.  A block ratio of
        0.9 or more is treated as divergence.
        """
        lo = max(float(M), self.support_lower_radius)
        horizon = 4.0 * max(self.max_ring, M, 1)
        edges = [lo]
        while edges[-1] < horizon or len(edges) < 4:
            edges.append(max(2 * edges[-1], edges[-1] + 1.0))
        blocks = [self.integrate_radial(f, a, b) for a, b in zip(edges[:-1], edges[1:])]
        total = float(sum(blocks))
        last, prev = abs(blocks[-1]), abs(blocks[-2])
        if last <= 1e-15 * max(abs(total), 1e-300) or last == 0.0:
            return TailIntegral(total, 0.0)
        ratio = last / prev if prev > 0 else math.inf
        if ratio >= TAIL_RATIO_LIMIT:
            raise NonConvergentTailError(
                f"tail integral beyond |z|={M} does not converge "
                f"(block ratio {ratio:.3f} >= {TAIL_RATIO_LIMIT})")
        remainder = blocks[-1] * ratio / (1 - ratio)
        return TailIntegral(total + remainder, abs(remainder))

    def integrate_all(self, f: Callable[[np.ndarray], np.ndarray]) -> TailIntegral:
        """Integral of f(|z|) over R^d against mu."""
        head = self.integrate_radial(f, 0.0, float(self.max_ring))
        tail = self.tail_integral(f, float(self.max_ring))
        return TailIntegral(head + tail.value, tail.remainder)

    def total_mass(self) -> float:
        try:
            return self.integrate_all(lambda r: np.ones_like(r)).value
        except NonConvergentTailError:
            return math.inf

    # -- rings ------------------------------------------------------------
    def ring_bounds(self, k: int) -> tuple[float, float]:
        if not 1 <= k <= self.max_ring:
            raise ModelError(f"ring index {k} outside 1..{self.max_ring}")
        return (0.0 if k == 1 else k - 1.0), float(k)

    def annulus_mass(self, k: int) -> float:
        key = ("mass", k)
        if key not in self._cache:
            a, b = self.ring_bounds(k)
            if self.ring_mass_closed_form is not None:
                value = float(self.ring_mass_closed_form(k))
            else:
                value = self.integrate_radial(lambda r: np.ones_like(r), a, b)
            self._cache[key] = max(value, 0.0)
        return self._cache[key]

    def ball_mass(self, M: int) -> float:
        return float(sum(self.annulus_mass(k) for k in range(1, M + 1)))

    def _radial_table(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        key = ("table", k)
        if key not in self._cache:
            a, b = self.ring_bounds(k)
            a = max(a, self.support_lower_radius)
            nodes = np.linspace(a, b, CDF_TABLE_SIZE)
            lo, hi = nodes[:-1], nodes[1:]
            half = 0.5 * (hi - lo)
            mid = 0.5 * (hi + lo)
            r = mid[:, None] + half[:, None] * _GL_NODES[None, :]
            pieces = (self.shell_density(r.ravel()).reshape(r.shape) * _GL_WEIGHTS).sum(axis=1) * half
            cdf = np.concatenate([[0.0], np.cumsum(pieces)])
            if cdf[-1] <= 0:
                raise ModelError(f"ring {k} has zero mass")
            self._cache[key] = (nodes, cdf / cdf[-1])
        return self._cache[key]

    def _rejection_bound(self, k: int) -> float:
        key = ("hmax", k)
        if key not in self._cache:
            a, b = self.ring_bounds(k)
            if self.d == 1:
                r = np.linspace(a, b, 2049)
                pts = np.concatenate([r, -r])[:, None]
            else:
                r, phi = np.meshgrid(np.linspace(a, b, 129), np.linspace(0, 2 * np.pi, 257))
                pts = np.stack([(r * np.cos(phi)).ravel(), (r * np.sin(phi)).ravel()], axis=1)
            # grid scan plus 10% headroom for the unsampled maxima
            hmax = 1.1 * float(np.max(self.density(pts)))
            volume = unit_ball_volume(self.d) * (b ** self.d - a ** self.d)
            rate = self.annulus_mass(k) / (hmax * volume) if hmax > 0 else 0.0
            self._cache[key] = (hmax, rate)
        return self._cache[key]

    def sample_in_annulus(self, k: int, stream, max_attempts: int = 10_000) -> np.ndarray:
        """Draw ``stream.size`` points from 1_{I_k}(z) mu(dz) / mu(I_k).

        ``stream`` is a ``KeyedStream`` (one stream per draw) or a
        ``GeneratorStream``.  Returns an ``(n, d)`` array.
        """
        if self.annulus_mass(k) <= 0:
            raise ModelError(f"ring {k} has zero mass; nothing to sample")
        n = stream.size
        a, b = self.ring_bounds(k)
        if self.radial:
            nodes, cdf = self._radial_table(k)
            radius = np.interp(stream.uniform(0), cdf, nodes)
            radius = np.clip(radius, np.nextafter(a, b) if k > 1 else 0.0, b)
            return radius[:, None] * _directions(stream, self.d, first_component=1)

        hmax, rate = self._rejection_bound(k)
        if rate < ACCEPTANCE_FLOOR:
            raise SamplerError(
                f"rejection acceptance rate {rate:.2e} below floor {ACCEPTANCE_FLOOR:.0e} "
                f"in ring {k}; supply a radial profile or a tighter proposal")
        out = np.empty((n, self.d))
        pending = np.arange(n)
        current = stream
        for attempt in range(max_attempts):
            if pending.size == 0:
                return out
            u = current.uniform(0, attempt)
            radius = (a ** self.d + u * (b ** self.d - a ** self.d)) ** (1.0 / self.d)
            radius = np.clip(radius, np.nextafter(a, b) if k > 1 else 0.0, b)
            z = radius[:, None] * _directions(current, self.d, first_component=1, attempt=attempt)
            accept = current.uniform(self.d + 1, attempt) * hmax <= self.density(z)
            out[pending[accept]] = z[accept]
            pending = pending[~accept]
            current = current.subset(~accept)
        raise SamplerError(f"rejection sampler exhausted {max_attempts} attempts in ring {k}")


def _directions(stream, d: int, first_component: int, attempt: int = 0) -> np.ndarray:
    if d == 1:
        sign = np.where(stream.uniform(first_component, attempt) < 0.5, -1.0, 1.0)
        return sign[:, None]
    g = np.stack([stream.normal(first_component + j, attempt) for j in range(d)], axis=1)
    return g / np.linalg.norm(g, axis=1, keepdims=True)


# -- tail quantities -----------------------------------------------------

@dataclass(frozen=True)
class TailQuantities:
    M: int
    T: float
    a_M_T: float
    eps_M: float
    quadrature_abs_tol: float = QUAD_EPSABS


def tail_sigma(model: LevyMeasureModel, coeffs, M: int, T: float) -> float:
    """Standard deviation sqrt(T * int_{|z|>M} lower(z) mu(dz)) of the Gaussian
    replacing jumps larger than M."""
    if T < 0:
        raise ModelError("time horizon must be nonnegative")
    value = model.tail_integral(coeffs.lower, M).value
    return math.sqrt(T * max(value, 0.0))


def epsilon_m(model: LevyMeasureModel, coeffs, M: int) -> float:
    """Truncation error int_{|z|>M} |cbar|^2 dmu + (int_{|z|>M} cbar dmu)^2."""
    square = model.tail_integral(lambda r: coeffs.envelope(r) ** 2, M).value
    first = model.tail_integral(coeffs.envelope, M).value
    return max(square, 0.0) + first ** 2


def tail_quantities(model: LevyMeasureModel, coeffs, M: int, T: float) -> TailQuantities:
    return TailQuantities(M=M, T=T, a_M_T=tail_sigma(model, coeffs, M, T),
                          eps_M=epsilon_m(model, coeffs, M))


@dataclass(frozen=True)
class MomentEstimate:
    value: float
    tail_remainder: float


def cbar_moment(model: LevyMeasureModel, coeffs, p: float) -> MomentEstimate:
    """int |cbar(z)|^p mu(dz), with the extrapolated tail remainder."""
    if p < 1:
        raise ModelError("moment order must be >= 1")
    try:
        res = model.integrate_all(lambda r: np.abs(coeffs.envelope(r)) ** p)
    except NonConvergentTailError as exc:
        raise NonConvergentTailError(f"envelope moment fails for p={p}: {exc}") from exc
    return MomentEstimate(res.value, res.remainder)


@dataclass(frozen=True)
class ThetaEstimate:
    value: float
    infinite: bool
    grid: tuple
    ratios: tuple  # nu{lower >= 1/u} / ln u at each grid point
    heuristic: bool = True


DEFAULT_THETA_GRID = tuple(10.0 ** k for k in range(1, 9))


def level_radius(lower: Callable, u: float, r_cap: float = 1e12) -> float:
    """Largest radius with lower(r) >= 1/u, assuming lower is nonincreasing."""
    level = 1.0 / u
    f = lambda r: float(lower(np.array([r]))[0]) - level
    if f(0.0) < 0:
        return 0.0
    hi = 1.0
    while f(hi) >= 0:
        hi *= 2
        if hi > r_cap:
            return math.inf
    return optimize.brentq(f, hi / 2 if hi > 1 else 0.0, hi, xtol=1e-12, rtol=1e-14)


def nu_mass_within(model: LevyMeasureModel, radius: float, max_shells: int = 10_000_000) -> float:
    """nu(|z| <= radius) for nu = sum_k 1_{[k-3/4, k-1/4]}(|z|) mu(dz)."""
    if radius <= 0:
        return 0.0
    n_shells = int(math.floor(radius + 0.75))
    if n_shells > max_shells:
        raise ModelError(f"level set spans {n_shells} shells; refine the u grid")
    k = np.arange(1, n_shells + 1, dtype=float)
    lo = np.maximum(k - 0.75, model.support_lower_radius)
    hi = np.minimum(k - 0.25, radius)
    keep = hi > lo
    lo, hi = lo[keep], hi[keep]
    if lo.size == 0:
        return 0.0
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    r = mid[:, None] + half[:, None] * _GL_NODES[None, :]
    vals = model.shell_density(r.ravel()).reshape(r.shape)
    return float(((vals * _GL_WEIGHTS).sum(axis=1) * half).sum())


def theta_lower_bound(model: LevyMeasureModel, coeffs, u_grid=DEFAULT_THETA_GRID,
                      growth_factor: float = 1.25) -> ThetaEstimate:
    """Finite-grid diagnostic for the liminf of nu{lower >= 1/u} / ln u.

    Reports +inf when the ratio rises monotonically over the last three grid
    points by at least ``growth_factor`` overall, and 0 for finite measures.
    The ellipticity envelope must be radially nonincreasing.
    """
    grid = tuple(float(u) for u in u_grid)
    if len(grid) < 3 or any(b <= a for a, b in zip(grid, grid[1:])) or grid[0] <= 1:
        raise ModelError("u_grid needs >= 3 increasing points above 1")
    if math.isfinite(model.total_mass()):
        return ThetaEstimate(0.0, False, grid, tuple(0.0 for _ in grid))
    ratios = []
    for u in grid:
        radius = level_radius(coeffs.lower, u)
        if math.isinf(radius):
            raise ModelError("level set of the ellipticity envelope is unbounded")
        ratios.append(nu_mass_within(model, radius) / math.log(u))
    tail = ratios[-3:]
    rising = tail[0] < tail[1] < tail[2]
    infinite = rising and tail[0] > 0 and tail[2] >= growth_factor * tail[0]
    value = math.inf if infinite else min(tail)
    return ThetaEstimate(value, infinite, grid, tuple(ratios))
