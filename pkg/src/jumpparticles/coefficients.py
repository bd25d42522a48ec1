"""Drift b(r, x, rho) and jump coefficient c(r, v, z, x, rho).

Coefficient callables are vectorised over rows: positions, partners and
amplitudes are ``(n, d)`` arrays and the measure argument is a
:class:`MeasureSummary` of the whole ensemble.  Envelopes (the bounding
functions of the regularity and ellipticity hypotheses) are radial and take
an array of radii ``|z|``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ModelError, NumericalError
from .streams import GeneratorStream

Drift = Callable[[float, np.ndarray, "MeasureSummary"], np.ndarray]
Jump = Callable[[float, np.ndarray, np.ndarray, np.ndarray, "MeasureSummary"], np.ndarray]
Radial = Callable[[np.ndarray], np.ndarray]


class MeasureSummary:
    """Read-only empirical measure of N particles with cached moments."""

    def __init__(self, positions: np.ndarray):
        positions = np.array(positions, dtype=float, copy=True)
        if positions.ndim == 1:
            positions = positions[:, None]
        if positions.shape[0] == 0:
            raise ModelError("empirical measure needs at least one particle")
        positions.setflags(write=False)
        self.positions = positions
        self.mean = positions.mean(axis=0)
        self.second_moment = positions.T @ positions / positions.shape[0]
        self.mean.setflags(write=False)
        self.second_moment.setflags(write=False)

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def d(self) -> int:
        return self.positions.shape[1]

    @classmethod
    def point_mass(cls, x, d: int = 1) -> "MeasureSummary":
        return cls(np.broadcast_to(np.asarray(x, dtype=float), (1, d)))


def _zero_radial(r):
    return np.zeros_like(np.asarray(r, dtype=float))


@dataclass(frozen=True)
class CoefficientModel:
    d: int
    drift: Drift
    jump: Jump
    envelope: Radial = _zero_radial   # cbar
    lower: Radial = _zero_radial      # ellipticity lower bound
    inverse_bound: Optional[Radial] = None  # defaults to cbar
    drift_lipschitz: Optional[float] = None
    min_amplitude_radius: float = 0.0
    linear_drift: Optional[tuple] = None  # (A, B) when b = A mean + B x
    jump_depends_on_state: bool = True
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def breve(self, r):
        return (self.inverse_bound or self.envelope)(r)


def _rows(a, d: int) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim == 0:
        a = np.full((1, d), float(a))
    elif a.ndim == 1:
        a = a.reshape(-1, d) if a.size != d else a[None, :]
    return a


def eval_drift(model: CoefficientModel, r: float, x, rho: MeasureSummary) -> np.ndarray:
    single = np.ndim(x) <= 1
    xs = _rows(x, model.d)
    out = np.asarray(model.drift(r, xs, rho), dtype=float).reshape(xs.shape)
    if not np.all(np.isfinite(out)):
        raise NumericalError(f"non-finite drift at r={r}, x={xs.tolist()}")
    return out[0] if single else out


def eval_jump(model: CoefficientModel, r: float, v, z, x, rho: MeasureSummary,
              check_envelope: bool = False, slack: float = 0.05) -> np.ndarray:
    single = np.ndim(x) <= 1
    vs, zs, xs = (_rows(a, model.d) for a in (v, z, x))
    vs, zs, xs = np.broadcast_arrays(vs, zs, xs)
    radius = np.linalg.norm(zs, axis=1)
    if np.any(radius < model.min_amplitude_radius):
        raise ModelError(f"amplitude |z| below {model.min_amplitude_radius} is outside the model's domain")
    out = np.asarray(model.jump(r, vs, zs, xs, rho), dtype=float).reshape(xs.shape)
    if not np.all(np.isfinite(out)):
        raise NumericalError(f"non-finite jump at r={r}, v={vs.tolist()}, z={zs.tolist()}, x={xs.tolist()}")
    if check_envelope:
        bound = model.envelope(radius) * (1 + slack) + 1e-12
        if np.any(np.linalg.norm(out, axis=1) > bound):
            raise ModelError("jump coefficient exceeds its declared envelope")
    return out[0] if single else out


# -- hypothesis validation -----------------------------------------------

def fd_jacobian(fun: Callable[[np.ndarray], np.ndarray], point: np.ndarray, step) -> np.ndarray:
    """Central-difference Jacobian of a row-vectorised map.

    ``point`` is ``(n, d)``; returns ``(n, d_out, d)`` with entry
    [s, i, j] = d fun_i / d point_j at sample s.
    """
    point = np.asarray(point, dtype=float)
    n, d = point.shape
    step = np.broadcast_to(np.asarray(step, dtype=float), (n,))
    cols = []
    for j in range(d):
        e = np.zeros(d)
        e[j] = 1.0
        plus = fun(point + step[:, None] * e)
        minus = fun(point - step[:, None] * e)
        cols.append((plus - minus) / (2 * step[:, None]))
    return np.stack(cols, axis=2)


@dataclass
class HypothesisCheck:
    name: str
    passed: bool
    worst_ratio: float
    witness: Optional[dict]
    failures: int = 0


@dataclass
class ValidationReport:
    checks: dict
    samples: int
    unvalidated: tuple = (
        "Hyp 2.1 Lipschitz dependence on the measure argument in W1",
        "Hyp 2.1 derivatives of order >= 2",
    )

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks.values())

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "samples": self.samples,
            "checks": {k: {"passed": c.passed, "worst_ratio": c.worst_ratio,
                           "failures": c.failures, "witness": c.witness}
                       for k, c in self.checks.items()},
            "unvalidated": list(self.unvalidated),
        }


def _check(name, value, bound, upper: bool, atol: float, witnesses) -> HypothesisCheck:
    if upper:
        violation = value > bound + atol
        ratio = np.where(bound > 0, value / np.where(bound > 0, bound, 1), np.where(value > atol, np.inf, 0.0))
    else:
        violation = value < bound - atol
        ratio = np.where(value > 0, bound / np.where(value > 0, value, 1), np.where(bound > atol, np.inf, 0.0))
    worst = int(np.argmax(ratio)) if ratio.size else 0
    witness = witnesses(worst) if ratio.size and violation.any() else None
    return HypothesisCheck(name, not bool(violation.any()), float(ratio[worst]) if ratio.size else 0.0,
                           witness, int(violation.sum()))


def validate_hypotheses(model: CoefficientModel, levy, sample_budget: int = 2000,
                        fd_step: Optional[float] = None, slack: float = 0.05,
                        seed: int = 0, max_ring: int = 16, horizon: float = 1.0,
                        degenerate_fraction: float = 0.1, atol: float = 1e-9) -> ValidationReport:
    """Spot-check the regularity, inverse-flow and ellipticity hypotheses.

    Random tuples (r, v, z, x, rho) are drawn with z from the ring samplers;
    a fraction of samples uses a degenerate partner v = x.  Derivatives are
    central finite differences with step ``fd_step * (1 + |point|)``.
    """
    if sample_budget < 1000:
        raise ModelError("sample_budget must be at least 1000")
    if model.d != levy.d:
        raise ModelError("coefficient and measure dimensions differ")
    d = model.d
    h0 = 1e-5 if fd_step is None else fd_step
    rng = np.random.default_rng(seed)
    n = sample_budget

    rings = [k for k in range(1, min(max_ring, levy.max_ring) + 1) if levy.annulus_mass(k) > 0]
    ring_of = rng.choice(rings, size=n)
    z = np.empty((n, d))
    for k in rings:
        sel = ring_of == k
        if sel.any():
            z[sel] = levy.sample_in_annulus(k, GeneratorStream(rng, int(sel.sum())))
    x = rng.normal(0.0, 2.0, size=(n, d))
    v = rng.normal(0.0, 2.0, size=(n, d))
    degenerate = rng.random(n) < degenerate_fraction
    v[degenerate] = x[degenerate]
    r = float(rng.uniform(0, horizon))
    rho = MeasureSummary(rng.normal(0.0, 1.0, size=(32, d)))
    radius = np.linalg.norm(z, axis=1)

    def c_of_z(zz):
        return model.jump(r, v, zz, x, rho)

    def c_of_x(xx):
        return model.jump(r, v, z, xx, rho)

    c = np.asarray(model.jump(r, v, z, x, rho), dtype=float)
    jz = fd_jacobian(c_of_z, z, h0 * (1 + radius))
    jx = fd_jacobian(c_of_x, x, h0 * (1 + np.linalg.norm(x, axis=1)))

    def witnesses(i):
        return {"r": r, "v": v[i].tolist(), "z": z[i].tolist(), "x": x[i].tolist()}

    cbar = model.envelope(radius)
    checks = {}
    size = np.maximum.reduce([np.linalg.norm(c, axis=1),
                              np.abs(jz).reshape(n, -1).max(axis=1),
                              np.abs(jx).reshape(n, -1).max(axis=1)])
    checks["hyp2.1_envelope"] = _check("hyp2.1_envelope", size, cbar * (1 + slack), True, atol, witnesses)

    zeta = rng.normal(size=(n, d))
    zeta /= np.linalg.norm(zeta, axis=1, keepdims=True)
    quad_form = np.einsum("sij,si->sj", jz, zeta)
    ellip = (quad_form ** 2).sum(axis=1)
    checks["hyp2.3_ellipticity"] = _check("hyp2.3_ellipticity", ellip,
                                          model.lower(radius) * (1 - slack), False, atol, witnesses)

    norms = np.empty(n)
    eye = np.eye(d)
    singular = np.zeros(n, dtype=bool)
    for i in range(n):
        try:
            m = jx[i] @ np.linalg.inv(eye + jx[i])
            norms[i] = np.linalg.norm(m, 2)
        except np.linalg.LinAlgError:
            singular[i] = True
            norms[i] = np.inf
    singular |= ~np.isfinite(norms)
    norms[singular] = np.inf
    checks["hyp2.2_inverse_flow"] = _check("hyp2.2_inverse_flow", norms,
                                           model.breve(radius) * (1 + slack), True, atol, witnesses)
    checks["lower_le_envelope_squared"] = _check("lower_le_envelope_squared", model.lower(radius),
                                                 cbar ** 2 * (1 + slack), True, atol, witnesses)
    return ValidationReport(checks, n)


# -- built-in coefficient models -----------------------------------------

def _zero_drift(r, x, rho):
    return np.zeros_like(x)


def _zero_jump(r, v, z, x, rho):
    return np.zeros_like(x)


def zero(d: int = 1) -> CoefficientModel:
    return CoefficientModel(d, _zero_drift, _zero_jump, linear_drift=(0.0, 0.0),
                            jump_depends_on_state=False, name="zero")


def linear_drift(d: int = 1, A: float = 1.0, B: float = -1.0) -> CoefficientModel:
    """b(r, x, rho) = A mean(rho) + B x with no jumps; A=1, B=-1 is mean reversion."""
    def drift(r, x, rho):
        return A * rho.mean[None, :] + B * x
    return CoefficientModel(d, drift, _zero_jump, drift_lipschitz=abs(A) + abs(B),
                            linear_drift=(A, B), jump_depends_on_state=False,
                            name="linear-drift", params={"A": A, "B": B})


def constant_jump(d: int = 1, value: float = 1.0) -> CoefficientModel:
    def jump(r, v, z, x, rho):
        return np.full_like(x, value)
    env = lambda rr: np.full_like(np.asarray(rr, dtype=float), abs(value) * math.sqrt(d))
    return CoefficientModel(d, _zero_drift, jump, envelope=env, jump_depends_on_state=False,
                            name="constant-jump", params={"value": value})


def kac(d: int = 1, rate: float = 1.0) -> CoefficientModel:
    """Kac-type binary interaction c = exp(-rate |z|) (v - x).

    The declared envelopes are nominal: |c| grows with |v - x| and the
    z-gradient vanishes at v = x, so validation flags this model.
    """
    def jump(r, v, z, x, rho):
        alpha = np.exp(-rate * np.linalg.norm(z, axis=1))
        return alpha[:, None] * (v - x)
    return CoefficientModel(d, _zero_drift, jump,
                            envelope=lambda rr: np.exp(-rate * np.asarray(rr, dtype=float)),
                            lower=lambda rr: np.exp(-2 * rate * np.asarray(rr, dtype=float)),
                            name="kac", params={"rate": rate})


def compound_poisson(d: int = 1, lower_scale: float = 0.0) -> CoefficientModel:
    """State-independent jumps gamma(z) = exp(-|z|) along the diagonal."""
    direction = np.full(d, 1.0 / math.sqrt(d))

    def gamma(r, v, z, x, rho):
        return np.exp(-np.linalg.norm(z, axis=1))[:, None] * direction[None, :]
    return CoefficientModel(d, _zero_drift, gamma,
                            envelope=lambda rr: np.exp(-np.asarray(rr, dtype=float)),
                            lower=lambda rr: lower_scale * np.exp(-2 * np.asarray(rr, dtype=float)),
                            linear_drift=(0.0, 0.0), jump_depends_on_state=False,
                            name="compound-poisson", params={"lower_scale": lower_scale})


def _bounded_direction(z):
    return z / np.sqrt(1.0 + (z * z).sum(axis=1, keepdims=True))


def example1_exp(d: int = 1, a1: float = 1.0, a2: float = 2.0, p_decay: float = 1.0) -> CoefficientModel:
    """Lebesgue-intensity example with |cbar|^2 = exp(-a1 |z|^p), lower = exp(-a2 |z|^p).

    The concrete jump map exp(-a1 |z|^p / 2) z / sqrt(1 + |z|^2) stays inside
    the envelope; the drift is mean reversion.
    """
    if not 0 < a1 <= a2 or p_decay <= 0:
        raise ModelError("example1-exp needs 0 < a1 <= a2 and p_decay > 0")

    def jump(r, v, z, x, rho):
        rad = np.linalg.norm(z, axis=1, keepdims=True)
        return np.exp(-0.5 * a1 * rad ** p_decay) * _bounded_direction(z)

    def drift(r, x, rho):
        return rho.mean[None, :] - x
    return CoefficientModel(d, drift, jump,
                            envelope=lambda rr: np.exp(-0.5 * a1 * np.asarray(rr, dtype=float) ** p_decay),
                            lower=lambda rr: np.exp(-a2 * np.asarray(rr, dtype=float) ** p_decay),
                            drift_lipschitz=2.0, linear_drift=(1.0, -1.0),
                            jump_depends_on_state=False, name="example1-exp",
                            params={"a1": a1, "a2": a2, "p_decay": p_decay})


def example1_poly(d: int = 1, a1: float = 1.0, a2: float = 1.0, p_decay: float = 4.0) -> CoefficientModel:
    """Lebesgue-intensity example with |cbar|^2 = a1/(1+|z|^p), lower = a2/(1+|z|^p)."""
    if not 0 < a2 <= a1 or p_decay <= d:
        raise ModelError("example1-poly needs 0 < a2 <= a1 and p_decay > d")

    def jump(r, v, z, x, rho):
        rad = np.linalg.norm(z, axis=1, keepdims=True)
        return np.sqrt(a1 / (1 + rad ** p_decay)) * _bounded_direction(z)

    def drift(r, x, rho):
        return rho.mean[None, :] - x
    return CoefficientModel(d, drift, jump,
                            envelope=lambda rr: np.sqrt(a1 / (1 + np.asarray(rr, dtype=float) ** p_decay)),
                            lower=lambda rr: a2 / (1 + np.asarray(rr, dtype=float) ** p_decay),
                            drift_lipschitz=2.0, linear_drift=(1.0, -1.0),
                            jump_depends_on_state=False, name="example1-poly",
                            params={"a1": a1, "a2": a2, "p_decay": p_decay})


def example2(sigma_lo: float = 1.0, sigma_hi: float = 2.0) -> CoefficientModel:
    """Inverted truncated alpha-stable model: c = sigma(x) / z on |z| >= 1.

    sigma(x) = sigma_lo + (sigma_hi - sigma_lo) (1 + tanh x) / 2; its
    derivative is at most (sigma_hi - sigma_lo) / 2.
    """
    if not 0 < sigma_lo <= sigma_hi:
        raise ModelError("example2 needs 0 < sigma_lo <= sigma_hi")
    span = sigma_hi - sigma_lo

    def sigma(x):
        return sigma_lo + 0.5 * span * (1 + np.tanh(x))

    def jump(r, v, z, x, rho):
        return sigma(x) / z

    def env(rr):
        return sigma_hi / np.maximum(np.asarray(rr, dtype=float), 1.0)

    def low(rr):
        return sigma_lo / np.maximum(np.asarray(rr, dtype=float), 1.0) ** 4
    return CoefficientModel(1, _zero_drift, jump, envelope=env, lower=low,
                            min_amplitude_radius=1.0, linear_drift=None,
                            name="example2", params={"sigma_lo": sigma_lo, "sigma_hi": sigma_hi})


def pure_gaussian(a: float = 1.0, M: int = 1, T: float = 1.0) -> CoefficientModel:
    """No drift, no jumps; the ellipticity envelope is tuned so that the
    big-jump Gaussian has standard deviation ``a`` for cutoff M and horizon T
    under one-dimensional Lebesgue intensity."""
    scale = a * a / (2.0 * T)
    return CoefficientModel(1, _zero_drift, _zero_jump,
                            lower=lambda rr: scale * np.exp(-(np.asarray(rr, dtype=float) - M)),
                            linear_drift=(0.0, 0.0), jump_depends_on_state=False,
                            name="pure-gaussian", params={"a": a, "M": M, "T": T})
